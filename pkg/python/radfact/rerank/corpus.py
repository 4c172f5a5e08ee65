# This file is part of radfact_rerank.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

from __future__ import annotations

__all__ = (
    "ExampleRecord",
    "CorpusLoadError",
    "RecordFilter",
    "SynthConfig",
    "CorpusStats",
    "SerializedFactGraph",
    "SerializedTriplet",
    "SerializedCandidate",
    "SerializedRecord",
    "load_corpus",
    "save_corpus",
    "synthesize",
    "render_triplets",
    "observations_from_triplets",
    "corpus_stats",
)

import dataclasses
import math
import re
from collections.abc import Iterable, Sequence
from typing import Any

import numpy as np
import pydantic
import yaml
from lsst.resources import ResourcePath, ResourcePathExpression
from lsst.utils.logging import getLogger

from ._constants import (
    ANATOMY_VOCABULARY,
    DEFAULT_CANDIDATES,
    OBSERVATION_KEYWORDS,
    OBSERVATION_VOCABULARY,
    OBSERVATIONS,
)
from .factmodel import (
    EntityLabel,
    EntityNode,
    FactEdge,
    FactGraph,
    RelationFlag,
    RelationType,
    Triplet,
    TripletSet,
    reduce_graph,
)
from .metrics import make_observation_vector, radgraph_score, rouge_tokenize
from .reranker import Candidate

_LOG = getLogger(__name__)

_SENTENCE_BREAK_RE = re.compile(r"[.?!]+")


class CorpusLoadError(ValueError):
    """Exception raised when a corpus file holds an invalid record.

    Parameters
    ----------
    uri : `str`
        File being read.
    line : `int`
        1-based line number of the invalid record.
    message : `str`
        What is wrong with it.
    """

    def __init__(self, uri: str, line: int, message: str):
        super().__init__(f"{uri}:{line}: {message}")
        self.uri = uri
        self.line = line


@dataclasses.dataclass(frozen=True)
class ExampleRecord:
    """One report: its texts, fact graphs, and first-stage candidate pool.

    Attributes
    ----------
    id : `str`
        Unique ID within the corpus.
    findings : `str`
        Findings section (the summarization input).
    impression : `str`
        Gold impression section (the reference summary).
    findings_graph, impression_graph : `FactGraph` or `None`
        Extracted fact graphs, when available.
    findings_triplets, impression_triplets : `TripletSet` or `None`
        Triplet sets supplied directly or reduced from the graphs at load.
    candidates : `tuple` [ `Candidate`, ... ]
        Candidate pool in first-stage order.
    predicted_sequence : `str` or `None`
        Stored generated target sequence.
    gold_observations, pred_observations : `tuple` [ `int`, ... ] or `None`
        Observation vectors of the gold impression and of a precomputed
        selection.
    """

    id: str
    findings: str = ""
    impression: str = ""
    findings_graph: FactGraph | None = None
    impression_graph: FactGraph | None = None
    findings_triplets: TripletSet | None = None
    impression_triplets: TripletSet | None = None
    candidates: tuple[Candidate, ...] = ()
    predicted_sequence: str | None = None
    gold_observations: tuple[int, ...] | None = None
    pred_observations: tuple[int, ...] | None = None

    @property
    def source_triplets(self) -> TripletSet | None:
        """Triplets of the findings, or `None` if neither a set nor a graph
        is available.
        """
        if self.findings_triplets is not None:
            return self.findings_triplets
        if self.findings_graph is not None:
            return reduce_graph(self.findings_graph)
        return None

    @property
    def gold_triplets(self) -> TripletSet | None:
        """Triplets of the gold impression, or `None` if neither a set nor a
        graph is available.
        """
        if self.impression_triplets is not None:
            return self.impression_triplets
        if self.impression_graph is not None:
            return reduce_graph(self.impression_graph)
        return None


class SerializedNode(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    surface: str
    label: EntityLabel
    position: int | None = pydantic.Field(default=None, ge=0)

    @pydantic.field_validator("label", mode="before")
    @classmethod
    def _parse_label(cls, value: Any) -> Any:
        return EntityLabel.parse(value) if isinstance(value, str) else value


class SerializedEdge(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    src: int
    dst: int
    type: RelationType

    @pydantic.field_validator("type", mode="before")
    @classmethod
    def _parse_type(cls, value: Any) -> Any:
        return RelationType.parse(value) if isinstance(value, str) else value


class SerializedFactGraph(pydantic.BaseModel):
    """JSON form of a `FactGraph`."""

    model_config = pydantic.ConfigDict(extra="forbid")

    nodes: list[SerializedNode] = pydantic.Field(default_factory=list)
    edges: list[SerializedEdge] = pydantic.Field(default_factory=list)

    @classmethod
    def from_graph(cls, graph: FactGraph) -> SerializedFactGraph:
        return cls(
            nodes=[
                SerializedNode(surface=n.surface, label=n.label, position=n.position) for n in graph.nodes
            ],
            edges=[SerializedEdge(src=e.source, dst=e.target, type=e.type) for e in graph.edges],
        )

    def to_graph(self) -> FactGraph:
        return FactGraph(
            nodes=tuple(EntityNode(n.surface, n.label, n.position) for n in self.nodes),
            edges=tuple(FactEdge(e.src, e.dst, e.type) for e in self.edges),
        )


class SerializedTriplet(pydantic.BaseModel):
    """JSON form of a `Triplet`."""

    model_config = pydantic.ConfigDict(extra="forbid")

    entity: str
    label: EntityLabel
    flag: RelationFlag

    @pydantic.field_validator("label", mode="before")
    @classmethod
    def _parse_label(cls, value: Any) -> Any:
        return EntityLabel.parse(value) if isinstance(value, str) else value

    @pydantic.field_validator("flag", mode="before")
    @classmethod
    def _parse_flag(cls, value: Any) -> Any:
        return RelationFlag.parse(value) if isinstance(value, str) else value

    @classmethod
    def from_triplets(cls, triplets: TripletSet) -> list[SerializedTriplet]:
        return [cls(entity=t.entity, label=t.label, flag=t.flag) for t in triplets.ordered]

    @staticmethod
    def to_triplets(serialized: Iterable[SerializedTriplet], lowercase: bool = True) -> TripletSet:
        return TripletSet(
            Triplet.from_raw(s.entity, s.label, s.flag, lowercase=lowercase) for s in serialized
        )


def _observations(values: Sequence[int] | None) -> tuple[int, ...] | None:
    if values is None:
        return None
    return tuple(int(v) for v in make_observation_vector(values))


class SerializedCandidate(pydantic.BaseModel):
    """JSON form of a `Candidate`; exactly one of ``triplets`` and ``graph``
    must be given.
    """

    model_config = pydantic.ConfigDict(extra="forbid")

    id: str | None = None
    text: str
    triplets: list[SerializedTriplet] | None = None
    graph: SerializedFactGraph | None = None
    observations: list[int] | None = None
    true_score: float | None = pydantic.Field(default=None, ge=0.0, le=1.0)

    @pydantic.model_validator(mode="after")
    def _check_facts(self) -> SerializedCandidate:
        if (self.triplets is None) == (self.graph is None):
            raise ValueError("A candidate needs exactly one of 'triplets' and 'graph'.")
        return self

    @classmethod
    def from_candidate(cls, candidate: Candidate) -> SerializedCandidate:
        return cls(
            id=candidate.id,
            text=candidate.text,
            triplets=SerializedTriplet.from_triplets(candidate.triplets),
            observations=list(candidate.observations) if candidate.observations is not None else None,
            true_score=candidate.true_score,
        )

    def to_candidate(self, source_rank: int, gold: TripletSet | None, lowercase: bool = True) -> Candidate:
        if self.triplets is not None:
            triplets = SerializedTriplet.to_triplets(self.triplets, lowercase)
        else:
            assert self.graph is not None, "Guaranteed by validator."
            triplets = reduce_graph(self.graph.to_graph(), lowercase=lowercase)
        candidate_id = self.id if self.id is not None else str(source_rank)
        true_score = self.true_score
        if gold is not None:
            true_score = radgraph_score(triplets, gold)
            if self.true_score is not None and not math.isclose(self.true_score, true_score, abs_tol=1e-9):
                raise ValueError(
                    f"Candidate {candidate_id!r} stores true score {self.true_score} "
                    f"but its triplets score {true_score} against the gold impression."
                )
        return Candidate(
            id=candidate_id,
            text=self.text,
            source_rank=source_rank,
            triplets=triplets,
            true_score=true_score,
            observations=_observations(self.observations),
        )


class SerializedRecord(pydantic.BaseModel):
    """JSON form of an `ExampleRecord`, one per corpus line."""

    model_config = pydantic.ConfigDict(extra="forbid")

    id: str
    findings: str = ""
    impression: str = ""
    findings_graph: SerializedFactGraph | None = None
    impression_graph: SerializedFactGraph | None = None
    findings_triplets: list[SerializedTriplet] | None = None
    impression_triplets: list[SerializedTriplet] | None = None
    candidates: list[SerializedCandidate] = pydantic.Field(default_factory=list)
    predicted_sequence: str | None = None
    gold_observations: list[int] | None = None
    pred_observations: list[int] | None = None

    @classmethod
    def from_record(cls, record: ExampleRecord) -> SerializedRecord:
        return cls(
            id=record.id,
            findings=record.findings,
            impression=record.impression,
            findings_graph=(
                SerializedFactGraph.from_graph(record.findings_graph) if record.findings_graph else None
            ),
            impression_graph=(
                SerializedFactGraph.from_graph(record.impression_graph) if record.impression_graph else None
            ),
            findings_triplets=(
                SerializedTriplet.from_triplets(record.findings_triplets)
                if record.findings_triplets is not None
                else None
            ),
            impression_triplets=(
                SerializedTriplet.from_triplets(record.impression_triplets)
                if record.impression_triplets is not None
                else None
            ),
            candidates=[SerializedCandidate.from_candidate(c) for c in record.candidates],
            predicted_sequence=record.predicted_sequence,
            gold_observations=list(record.gold_observations) if record.gold_observations else None,
            pred_observations=list(record.pred_observations) if record.pred_observations else None,
        )

    def to_record(self, lowercase: bool = True) -> ExampleRecord:
        """Validate and convert to domain types.

        Triplet sets missing from the record are reduced from its graphs so
        that case folding follows ``lowercase``.
        """
        findings_graph = self.findings_graph.to_graph() if self.findings_graph is not None else None
        impression_graph = self.impression_graph.to_graph() if self.impression_graph is not None else None
        findings_triplets = (
            SerializedTriplet.to_triplets(self.findings_triplets, lowercase)
            if self.findings_triplets is not None
            else reduce_graph(findings_graph, lowercase=lowercase) if findings_graph is not None else None
        )
        impression_triplets = (
            SerializedTriplet.to_triplets(self.impression_triplets, lowercase)
            if self.impression_triplets is not None
            else reduce_graph(impression_graph, lowercase=lowercase) if impression_graph is not None else None
        )
        return ExampleRecord(
            id=self.id,
            findings=self.findings,
            impression=self.impression,
            findings_graph=findings_graph,
            impression_graph=impression_graph,
            findings_triplets=findings_triplets,
            impression_triplets=impression_triplets,
            candidates=tuple(
                c.to_candidate(rank, impression_triplets, lowercase)
                for rank, c in enumerate(self.candidates, start=1)
            ),
            predicted_sequence=self.predicted_sequence,
            gold_observations=_observations(self.gold_observations),
            pred_observations=_observations(self.pred_observations),
        )


class RecordFilter(pydantic.BaseModel):
    """Optional load-time filter that drops reports too short to
    summarize.
    """

    model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

    min_findings_words: int = pydantic.Field(default=10, ge=0)
    min_impression_words: int = pydantic.Field(default=2, ge=0)

    def reject_reason(self, record: ExampleRecord) -> str | None:
        """Return why ``record`` should be dropped, or `None` to keep it."""
        if (n := len(rouge_tokenize(record.findings))) < self.min_findings_words:
            return f"findings have {n} word(s)"
        if (n := len(rouge_tokenize(record.impression))) < self.min_impression_words:
            return f"impression has {n} word(s)"
        return None


def load_corpus(
    uri: ResourcePathExpression,
    *,
    lowercase: bool = True,
    record_filter: RecordFilter | None = None,
) -> list[ExampleRecord]:
    """Read and validate a JSON Lines corpus.

    Parameters
    ----------
    uri : convertible to `lsst.resources.ResourcePath`
        Corpus file, one record per line; blank lines are ignored.
    lowercase : `bool`, optional
        Case-fold entity surfaces.
    record_filter : `RecordFilter`, optional
        If given, drop records it rejects.

    Returns
    -------
    records : `list` [ `ExampleRecord` ]
        Validated records in file order.

    Raises
    ------
    CorpusLoadError
        Raised for the first malformed line, duplicate ID, or invalid graph,
        naming the file and line.
    """
    uri = ResourcePath(uri)
    records: list[ExampleRecord] = []
    first_seen: dict[str, int] = {}
    for lineno, raw in enumerate(uri.read().split(b"\n"), start=1):
        if not raw.strip():
            continue
        try:
            # UnicodeDecodeError is a ValueError too.
            line = raw.decode("utf-8")
            record = SerializedRecord.model_validate_json(line).to_record(lowercase)
        except ValueError as err:
            raise CorpusLoadError(str(uri), lineno, str(err)) from err
        if (previous := first_seen.get(record.id)) is not None:
            raise CorpusLoadError(
                str(uri), lineno, f"duplicate record id {record.id!r} (first seen on line {previous})."
            )
        first_seen[record.id] = lineno
        if record_filter is not None and (reason := record_filter.reject_reason(record)) is not None:
            _LOG.verbose("Skipping record %r on line %d: %s.", record.id, lineno, reason)
            continue
        records.append(record)
    _LOG.info("Loaded %d record(s) from %s.", len(records), uri)
    return records


def save_corpus(records: Iterable[ExampleRecord], uri: ResourcePathExpression) -> None:
    """Write records as JSON Lines, replacing any existing file.

    The output depends only on the records, so saving the same corpus twice
    gives byte-identical files.
    """
    lines = [SerializedRecord.from_record(r).model_dump_json(exclude_none=True) + "\n" for r in records]
    ResourcePath(uri).write("".join(lines).encode(), overwrite=True)


def _default_keep_prob() -> dict[EntityLabel, float]:
    return {
        EntityLabel.ANAT_DP: 0.4,
        EntityLabel.OBS_DP: 0.6,
        EntityLabel.OBS_U: 0.5,
        EntityLabel.OBS_DA: 0.7,
    }


class SynthConfig(pydantic.BaseModel):
    """Parameters of a seeded synthetic corpus.

    Each example samples findings triplets from a fixed vocabulary, keeps a
    random subset (plus occasional novel facts) as the gold impression, and
    derives every candidate by passing the gold set through corruption
    channels.  First-stage order sorts candidates by their true score plus
    Gaussian noise.
    """

    model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

    seed: int = pydantic.Field(default=0, ge=0)
    examples: int = pydantic.Field(default=1000, ge=1)
    entities_per_source: tuple[int, int] = (6, 14)
    gold_keep_prob: dict[EntityLabel, float] = pydantic.Field(default_factory=_default_keep_prob)
    novel_rate: float = pydantic.Field(default=0.1, ge=0.0, le=1.0)
    candidates_per_example: int = pydantic.Field(default=DEFAULT_CANDIDATES, ge=1)
    drop: float = pydantic.Field(default=0.3, ge=0.0, le=1.0)
    insert_from_source: float = pydantic.Field(default=0.1, ge=0.0, le=1.0)
    flip_label: float = pydantic.Field(default=0.1, ge=0.0, le=1.0)
    flip_flag: float = pydantic.Field(default=0.1, ge=0.0, le=1.0)
    first_stage_noise: float = pydantic.Field(default=0.5, ge=0.0)

    @pydantic.field_validator("entities_per_source")
    @classmethod
    def _check_range(cls, value: tuple[int, int]) -> tuple[int, int]:
        low, high = value
        if not 1 <= low <= high:
            raise ValueError(f"entities_per_source must satisfy 1 <= low <= high, got {value}.")
        return value

    @pydantic.field_validator("gold_keep_prob")
    @classmethod
    def _check_keep_prob(cls, value: dict[EntityLabel, float]) -> dict[EntityLabel, float]:
        for label, p in value.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"gold_keep_prob[{label.value}] = {p} is not in [0, 1].")
        return _default_keep_prob() | value

    @classmethod
    def read(cls, uri: ResourcePathExpression) -> SynthConfig:
        """Read a configuration from a YAML file."""
        data = yaml.safe_load(ResourcePath(uri).read())
        return cls.model_validate(data or {})


_PHRASES = {
    EntityLabel.OBS_DA: "no {}",
    EntityLabel.OBS_U: "possible {}",
    EntityLabel.OBS_DP: "{}",
    EntityLabel.ANAT_DP: "{}",
}


def render_triplets(triplets: TripletSet) -> str:
    """Render a deterministic pseudo-sentence stating a set of triplets."""
    if not triplets:
        return "No reportable findings."
    text = ", ".join(_PHRASES[t.label].format(t.entity) for t in triplets.ordered)
    return text[0].upper() + text[1:] + "."


def observations_from_triplets(triplets: TripletSet) -> tuple[int, ...]:
    """Return the observation vector implied by present or uncertain
    observation triplets, using a fixed keyword map.
    """
    vector = [0] * len(OBSERVATIONS)
    for t in triplets:
        if t.label in (EntityLabel.OBS_DP, EntityLabel.OBS_U) and t.entity in OBSERVATION_KEYWORDS:
            vector[OBSERVATIONS.index(OBSERVATION_KEYWORDS[t.entity])] = 1
    if not any(vector):
        vector[OBSERVATIONS.index("No Finding")] = 1
    return tuple(vector)


class _Synthesizer:
    """Random draws for one synthetic corpus."""

    _LABELS = tuple(EntityLabel)

    def __init__(self, config: SynthConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)

    def _uniform(self) -> float:
        return float(self.rng.random())

    def _pick(self, options: Sequence[str]) -> str:
        return options[int(self.rng.integers(len(options)))]

    def _triplet(self) -> Triplet:
        label = self._LABELS[int(self.rng.integers(len(self._LABELS)))]
        vocabulary = ANATOMY_VOCABULARY if label is EntityLabel.ANAT_DP else OBSERVATION_VOCABULARY
        flag = RelationFlag.REL if self._uniform() < 0.5 else RelationFlag.NA
        return Triplet(self._pick(vocabulary), label, flag)

    def source(self) -> TripletSet:
        low, high = self.config.entities_per_source
        by_key: dict[tuple[str, EntityLabel], Triplet] = {}
        for _ in range(int(self.rng.integers(low, high, endpoint=True))):
            t = self._triplet()
            by_key.setdefault((t.entity, t.label), t)
        return TripletSet(by_key.values())

    def gold(self, source: TripletSet) -> TripletSet:
        kept = [t for t in source.ordered if self._uniform() < self.config.gold_keep_prob[t.label]]
        known = {(t.entity, t.label) for t in source}
        for _ in range(int(self.rng.binomial(len(source), self.config.novel_rate))):
            t = self._triplet()
            if (t.entity, t.label) not in known:
                known.add((t.entity, t.label))
                kept.append(t)
        return TripletSet(kept)

    def candidate(self, gold: TripletSet, source: TripletSet) -> TripletSet:
        config = self.config
        out: list[Triplet] = []
        for t in gold.ordered:
            if self._uniform() < config.drop:
                continue
            label, flag = t.label, t.flag
            if self._uniform() < config.flip_label:
                others = [other for other in self._LABELS if other is not label]
                label = others[int(self.rng.integers(len(others)))]
            if self._uniform() < config.flip_flag:
                flag = RelationFlag.NA if flag is RelationFlag.REL else RelationFlag.REL
            out.append(Triplet(t.entity, label, flag))
        for t in source.ordered:
            if t not in gold and self._uniform() < config.insert_from_source:
                out.append(t)
        return TripletSet(out)

    def record(self, index: int) -> ExampleRecord:
        source = self.source()
        gold = self.gold(source)
        pools = [self.candidate(gold, source) for _ in range(self.config.candidates_per_example)]
        true_scores = np.array([radgraph_score(pool, gold) for pool in pools])
        noisy = true_scores + self.rng.normal(0.0, self.config.first_stage_noise, size=len(pools))
        order = sorted(range(len(pools)), key=lambda j: (-noisy[j], j))
        return ExampleRecord(
            id=f"synth-{self.config.seed}-{index:05d}",
            findings=render_triplets(source),
            impression=render_triplets(gold),
            findings_triplets=source,
            impression_triplets=gold,
            candidates=tuple(
                Candidate(
                    id=f"c{j:02d}",
                    text=render_triplets(pools[j]),
                    source_rank=source_rank,
                    triplets=pools[j],
                    true_score=float(true_scores[j]),
                    observations=observations_from_triplets(pools[j]),
                )
                for source_rank, j in enumerate(order, start=1)
            ),
            gold_observations=observations_from_triplets(gold),
        )


def synthesize(config: SynthConfig) -> list[ExampleRecord]:
    """Generate a synthetic corpus.

    Parameters
    ----------
    config : `SynthConfig`
        Generation parameters; the corpus is a pure function of them.

    Returns
    -------
    records : `list` [ `ExampleRecord` ]
        Records with triplet sets stored directly, candidate true scores,
        and observation vectors.
    """
    synthesizer = _Synthesizer(config)
    records = [synthesizer.record(i) for i in range(config.examples)]
    _LOG.verbose("Synthesized %d record(s) with seed %d.", len(records), config.seed)
    return records


@dataclasses.dataclass(frozen=True)
class CorpusStats:
    """Average lengths of a corpus' findings and impressions.

    Averages are `None` for an empty corpus.
    """

    count: int
    avg_findings_words: float | None
    avg_findings_sentences: float | None
    avg_impression_words: float | None
    avg_impression_sentences: float | None


def _count_sentences(text: str) -> int:
    return sum(1 for piece in _SENTENCE_BREAK_RE.split(text) if rouge_tokenize(piece))


def _average(values: list[int]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def corpus_stats(records: Sequence[ExampleRecord]) -> CorpusStats:
    """Return word and sentence averages of findings and impressions.

    Words are counted with `rouge_tokenize`; sentences are non-empty pieces
    between periods, question marks and exclamation marks.
    """
    return CorpusStats(
        count=len(records),
        avg_findings_words=_average([len(rouge_tokenize(r.findings)) for r in records]),
        avg_findings_sentences=_average([_count_sentences(r.findings) for r in records]),
        avg_impression_words=_average([len(rouge_tokenize(r.impression)) for r in records]),
        avg_impression_sentences=_average([_count_sentences(r.impression) for r in records]),
    )
