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
    "Candidate",
    "Strategy",
    "RankingOutcome",
    "RankingConfigurationError",
    "CorpusDataError",
    "ExampleFailure",
    "ExampleResult",
    "ExampleSelection",
    "StrategyReport",
    "PoolBounds",
    "rank",
    "select_top",
    "reference_for",
    "evaluate_example",
    "evaluate_strategy",
    "select_example",
    "select_strategy",
    "pool_bounds",
)

import dataclasses
import enum
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, TypeVar

from lsst.utils.logging import getLogger

from .factmodel import TripletSet
from .metrics import (
    AveragingMode,
    RougeScores,
    ScoreValue,
    observation_f1,
    radgraph_score,
    radmrr,
    rouge_scores,
)

if TYPE_CHECKING:
    from .corpus import ExampleRecord
    from .genclient import Prediction, TargetPredictor

_LOG = getLogger(__name__)

_T = TypeVar("_T")


class RankingConfigurationError(ValueError):
    """Exception raised when a strategy is missing the reference it scores
    against.
    """


class CorpusDataError(ValueError):
    """Exception raised when a record lacks data an operation needs."""


class Strategy(enum.Enum):
    """How candidates in a pool are scored before sorting."""

    FIRST_STAGE = "first-stage"
    """Keep the first-stage (beam search) order."""

    ORACLE = "oracle"
    """Score against the gold summary's triplets."""

    SOURCE_GRAPH = "source"
    """Score against the findings' triplets."""

    FACT_GUIDED = "fact"
    """Score against triplets predicted for the unseen summary."""

    @property
    def needs_reference(self) -> bool:
        return self is not Strategy.FIRST_STAGE


@dataclasses.dataclass(frozen=True)
class Candidate:
    """One first-stage summary in a candidate pool.

    Attributes
    ----------
    id : `str`
        Identifier, unique within its pool.
    text : `str`
        Summary text.
    source_rank : `int`
        1-based position in first-stage order.
    triplets : `TripletSet`
        Facts extracted from ``text``.
    true_score : `float` or `None`
        RadGraph score against the gold summary, when known.
    observations : `tuple` [ `int`, ... ] or `None`
        Observation indicator vector of ``text``, when known.
    """

    id: str
    text: str
    source_rank: int
    triplets: TripletSet
    true_score: ScoreValue | None = None
    observations: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.source_rank < 1:
            raise CorpusDataError(f"Candidate {self.id!r} has source rank {self.source_rank} < 1.")


@dataclasses.dataclass(frozen=True)
class RankingOutcome:
    """A ranked candidate pool.

    Attributes
    ----------
    strategy : `Strategy`
        Strategy that produced the ranking.
    order : `tuple` [ `str`, ... ]
        Candidate IDs, best first.
    scores : `tuple` [ `float`, ... ]
        Strategy score of each candidate in ``order``; non-increasing.
    """

    strategy: Strategy
    order: tuple[str, ...]
    scores: tuple[ScoreValue, ...]

    @property
    def selected(self) -> str:
        return self.order[0]

    def score_of(self, candidate_id: str) -> ScoreValue:
        return self.scores[self.order.index(candidate_id)]


def _check_pool(pool: Sequence[Candidate]) -> None:
    if not pool:
        raise CorpusDataError("Cannot rank an empty candidate pool.")
    if len({c.source_rank for c in pool}) != len(pool):
        raise CorpusDataError("Candidate source ranks are not unique within the pool.")
    if len({c.id for c in pool}) != len(pool):
        raise CorpusDataError("Candidate IDs are not unique within the pool.")


def rank(
    pool: Sequence[Candidate], strategy: Strategy, reference: TripletSet | None = None
) -> RankingOutcome:
    """Rank a candidate pool under a strategy.

    Parameters
    ----------
    pool : `~collections.abc.Sequence` [ `Candidate` ]
        Candidates; input order does not matter.
    strategy : `Strategy`
        Scoring strategy.
    reference : `TripletSet`, optional
        Triplets the candidates are scored against; required by every
        strategy except `Strategy.FIRST_STAGE`.

    Returns
    -------
    outcome : `RankingOutcome`
        Candidates sorted by descending score, ties broken by ascending
        source rank.

    Raises
    ------
    RankingConfigurationError
        Raised if ``strategy`` needs a reference and none was given.
    CorpusDataError
        Raised if the pool is empty or has duplicate ranks or IDs.
    """
    _check_pool(pool)
    if strategy is Strategy.FIRST_STAGE:
        scored = [(1.0 / c.source_rank, c) for c in pool]
    elif reference is None:
        raise RankingConfigurationError(f"Strategy {strategy.value!r} needs a reference triplet set.")
    else:
        scored = [(radgraph_score(c.triplets, reference), c) for c in pool]
    scored.sort(key=lambda item: (-item[0], item[1].source_rank))
    return RankingOutcome(
        strategy=strategy,
        order=tuple(c.id for _, c in scored),
        scores=tuple(score for score, _ in scored),
    )


def select_top(outcome: RankingOutcome) -> str:
    """Return the ID of the top-ranked candidate."""
    return outcome.selected


def reference_for(
    record: ExampleRecord, strategy: Strategy, prediction: Prediction | None = None
) -> TripletSet | None:
    """Return the single triplet set ``strategy`` scores against for a
    record.

    Raises
    ------
    RankingConfigurationError
        Raised if the record (or prediction) does not supply it.
    """
    match strategy:
        case Strategy.FIRST_STAGE:
            return None
        case Strategy.ORACLE:
            reference = record.gold_triplets
            what = "gold impression triplets or graph"
        case Strategy.SOURCE_GRAPH:
            reference = record.source_triplets
            what = "findings triplets or graph"
        case Strategy.FACT_GUIDED:
            reference = prediction.triplets if prediction is not None else None
            what = "predicted target triplets"
    if reference is None:
        raise RankingConfigurationError(
            f"Example {record.id!r} has no {what}, needed by strategy {strategy.value!r}."
        )
    return reference


@dataclasses.dataclass(frozen=True)
class ExampleFailure:
    example_id: str
    message: str


@dataclasses.dataclass(frozen=True)
class ExampleResult:
    """Evaluation of one strategy on one example.

    Attributes
    ----------
    example_id : `str`
        Record ID.
    outcome : `RankingOutcome`
        Ranked pool.
    true_scores : `tuple` [ `float`, ... ]
        RadGraph score of each candidate against the gold summary, in pool
        order.
    ranking : `tuple` [ `int`, ... ]
        Pool indices in ranked order.
    selected_text : `str`
        Text of the top-ranked candidate.
    rouge : `RougeScores`
        ROUGE of ``selected_text`` against the gold impression.
    predicted_observations, gold_observations : `tuple` or `None`
        Observation vectors of the selected candidate and the gold summary.
    n_corrupted : `int`
        Generated segments dropped while predicting the reference.
    """

    example_id: str
    outcome: RankingOutcome
    true_scores: tuple[ScoreValue, ...]
    ranking: tuple[int, ...]
    selected_text: str
    rouge: RougeScores
    predicted_observations: tuple[int, ...] | None = None
    gold_observations: tuple[int, ...] | None = None
    n_corrupted: int = 0

    @property
    def selected_true_score(self) -> ScoreValue:
        return self.true_scores[self.ranking[0]]


@dataclasses.dataclass(frozen=True)
class ExampleSelection:
    """The ranked pool of one record, without reference to its gold
    summary.

    Attributes
    ----------
    example_id : `str`
        Record ID.
    outcome : `RankingOutcome`
        Ranked pool.
    ranking : `tuple` [ `int`, ... ]
        Pool indices in ranked order.
    selected_text : `str`
        Text of the top-ranked candidate.
    predicted_observations : `tuple` or `None`
        Observation vector of the selected candidate, falling back to the
        record's predicted vector.
    n_corrupted : `int`
        Generated segments dropped while predicting the reference.
    """

    example_id: str
    outcome: RankingOutcome
    ranking: tuple[int, ...]
    selected_text: str
    predicted_observations: tuple[int, ...] | None = None
    n_corrupted: int = 0


def select_example(
    record: ExampleRecord, strategy: Strategy, predictor: TargetPredictor | None = None
) -> ExampleSelection:
    """Rank one record's pool and pick its top candidate.

    Only `Strategy.ORACLE` reads the gold summary.

    Raises
    ------
    CorpusDataError
        Raised if the pool is empty or malformed.
    RankingConfigurationError
        Raised if the strategy's reference is missing.
    ProviderError
        Raised if the predictor fails for this record.
    """
    if not record.candidates:
        raise CorpusDataError(f"Example {record.id!r} has an empty candidate pool.")
    prediction: Prediction | None = None
    if strategy is Strategy.FACT_GUIDED and predictor is not None:
        prediction = predictor.predict(record)
    outcome = rank(record.candidates, strategy, reference_for(record, strategy, prediction))
    index_of = {c.id: i for i, c in enumerate(record.candidates)}
    ranking = tuple(index_of[candidate_id] for candidate_id in outcome.order)
    selected = record.candidates[ranking[0]]
    return ExampleSelection(
        example_id=record.id,
        outcome=outcome,
        ranking=ranking,
        selected_text=selected.text,
        predicted_observations=selected.observations or record.pred_observations,
        n_corrupted=prediction.n_corrupted if prediction is not None else 0,
    )


def _require_gold(record: ExampleRecord) -> TripletSet:
    gold = record.gold_triplets
    if gold is None:
        raise CorpusDataError(f"Example {record.id!r} has no gold triplets to compute true scores.")
    return gold


def evaluate_example(
    record: ExampleRecord, strategy: Strategy, predictor: TargetPredictor | None = None
) -> ExampleResult:
    """Rank one record's pool and score the selection against its gold
    summary.

    Raises
    ------
    CorpusDataError
        Raised if the pool is empty or the record has no gold triplets.
    RankingConfigurationError
        Raised if the strategy's reference is missing.
    ProviderError
        Raised if the predictor fails for this record.
    """
    if not record.candidates:
        raise CorpusDataError(f"Example {record.id!r} has an empty candidate pool.")
    gold = _require_gold(record)
    selection = select_example(record, strategy, predictor)
    return ExampleResult(
        example_id=record.id,
        outcome=selection.outcome,
        true_scores=tuple(radgraph_score(c.triplets, gold) for c in record.candidates),
        ranking=selection.ranking,
        selected_text=selection.selected_text,
        rouge=rouge_scores(selection.selected_text, record.impression),
        predicted_observations=selection.predicted_observations,
        gold_observations=record.gold_observations,
        n_corrupted=selection.n_corrupted,
    )


def _mean(values: Iterable[float]) -> float:
    terms = list(values)
    return math.fsum(terms) / len(terms)


@dataclasses.dataclass(frozen=True)
class StrategyReport:
    """Corpus-level evaluation of one strategy.

    All scores are ratios in [0, 1] and are `None` when no example could be
    evaluated (or, for observation F1, when any example lacks vectors).
    """

    strategy: Strategy
    n_examples: int
    results: tuple[ExampleResult, ...]
    failures: tuple[ExampleFailure, ...]
    radmrr: ScoreValue | None
    radgraph: ScoreValue | None
    rouge1: ScoreValue | None
    rouge2: ScoreValue | None
    rougeL: ScoreValue | None
    observation_f1: ScoreValue | None
    observation_mode: AveragingMode
    n_corrupted: int

    @classmethod
    def aggregate(
        cls,
        strategy: Strategy,
        n_examples: int,
        results: Sequence[ExampleResult],
        failures: Sequence[ExampleFailure],
        mode: AveragingMode = AveragingMode.MICRO,
    ) -> StrategyReport:
        """Combine per-example results; the result does not depend on the
        order in which examples finished.
        """
        obs_f1: float | None = None
        if results and all(
            r.predicted_observations is not None and r.gold_observations is not None for r in results
        ):
            obs_f1 = observation_f1(
                [r.predicted_observations for r in results],  # type: ignore[misc]
                [r.gold_observations for r in results],  # type: ignore[misc]
                mode,
            )
        return cls(
            strategy=strategy,
            n_examples=n_examples,
            results=tuple(results),
            failures=tuple(failures),
            radmrr=radmrr((r.true_scores, r.ranking) for r in results) if results else None,
            radgraph=_mean(r.selected_true_score for r in results) if results else None,
            rouge1=_mean(r.rouge.rouge1 for r in results) if results else None,
            rouge2=_mean(r.rouge.rouge2 for r in results) if results else None,
            rougeL=_mean(r.rouge.rougeL for r in results) if results else None,
            observation_f1=obs_f1,
            observation_mode=mode,
            n_corrupted=sum(r.n_corrupted for r in results),
        )


def evaluate_strategy(
    records: Sequence[ExampleRecord],
    strategy: Strategy,
    predictor: TargetPredictor | None = None,
    *,
    workers: int = 1,
    mode: AveragingMode = AveragingMode.MICRO,
) -> StrategyReport:
    """Evaluate a ranking strategy over a corpus.

    Parameters
    ----------
    records : `~collections.abc.Sequence` [ `ExampleRecord` ]
        Corpus; every record needs gold triplets for true scores.
    strategy : `Strategy`
        Strategy to evaluate.
    predictor : `TargetPredictor`, optional
        Source of predicted target triplets; required for
        `Strategy.FACT_GUIDED`.
    workers : `int`, optional
        Number of examples evaluated concurrently.
    mode : `AveragingMode`, optional
        Observation F1 aggregation.

    Returns
    -------
    report : `StrategyReport`
        Aggregate scores plus per-example results and failures.

    Raises
    ------
    RankingConfigurationError
        Raised before any example is evaluated if ``strategy`` needs a
        predictor and none was given.
    """
    if strategy is Strategy.FACT_GUIDED and predictor is None:
        raise RankingConfigurationError("Strategy 'fact' needs a target predictor.")
    results, failures = _map_records(
        records, lambda record: evaluate_example(record, strategy, predictor), workers, strategy.value
    )
    return StrategyReport.aggregate(strategy, len(records), results, failures, mode)


def select_strategy(
    records: Sequence[ExampleRecord],
    strategy: Strategy,
    predictor: TargetPredictor | None = None,
    *,
    workers: int = 1,
) -> tuple[list[ExampleSelection], list[ExampleFailure]]:
    """Select the top candidate of every record under a strategy.

    Unlike `evaluate_strategy` this never needs gold summaries, except for
    `Strategy.ORACLE`.

    Returns
    -------
    selections : `list` [ `ExampleSelection` ]
        Selections of the records that could be ranked, in input order.
    failures : `list` [ `ExampleFailure` ]
        Records that could not be ranked, in input order.

    Raises
    ------
    RankingConfigurationError
        Raised before any record is ranked if ``strategy`` needs a
        predictor and none was given.
    """
    if strategy is Strategy.FACT_GUIDED and predictor is None:
        raise RankingConfigurationError("Strategy 'fact' needs a target predictor.")
    return _map_records(
        records, lambda record: select_example(record, strategy, predictor), workers, strategy.value
    )


def _map_records(
    records: Sequence[ExampleRecord],
    func: Callable[[ExampleRecord], _T],
    workers: int,
    what: str,
) -> tuple[list[_T], list[ExampleFailure]]:
    # Per-record errors become failures; anything else propagates.
    from .genclient import ProviderError

    def run(record: ExampleRecord) -> _T | ExampleFailure:
        try:
            return func(record)
        except (CorpusDataError, RankingConfigurationError, ProviderError) as err:
            _LOG.verbose("Example %r failed under %r: %s", record.id, what, err)
            return ExampleFailure(record.id, str(err))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run, records))
    else:
        outputs = [run(record) for record in records]
    done = [o for o in outputs if not isinstance(o, ExampleFailure)]
    failures = [o for o in outputs if isinstance(o, ExampleFailure)]
    if failures:
        _LOG.warning("%d of %d examples failed under %r.", len(failures), len(records), what)
    return done, failures


@dataclasses.dataclass(frozen=True)
class PoolBounds:
    """Best score any candidate in a pool reaches, per metric, averaged
    over examples.

    These bound what any ranking strategy can select from the same pools.
    ``observation_f1`` uses per-example F1 and is `None` unless every
    candidate and gold summary has an observation vector.
    """

    n_examples: int
    example_ids: tuple[str, ...]
    failures: tuple[ExampleFailure, ...]
    radgraph: ScoreValue | None
    rouge1: ScoreValue | None
    rouge2: ScoreValue | None
    rougeL: ScoreValue | None
    observation_f1: ScoreValue | None


@dataclasses.dataclass(frozen=True)
class _ExampleBounds:
    example_id: str
    radgraph: ScoreValue
    rouge: RougeScores
    observation_f1: ScoreValue | None


def _example_bounds(record: ExampleRecord) -> _ExampleBounds:
    if not record.candidates:
        raise CorpusDataError(f"Example {record.id!r} has an empty candidate pool.")
    gold = _require_gold(record)
    rouge = [rouge_scores(c.text, record.impression) for c in record.candidates]
    obs: ScoreValue | None = None
    if record.gold_observations is not None and all(c.observations for c in record.candidates):
        gold_obs = record.gold_observations
        obs = max(
            observation_f1([c.observations or ()], [gold_obs], AveragingMode.EXAMPLE)
            for c in record.candidates
        )
    return _ExampleBounds(
        example_id=record.id,
        radgraph=max(radgraph_score(c.triplets, gold) for c in record.candidates),
        rouge=RougeScores(
            rouge1=max(r.rouge1 for r in rouge),
            rouge2=max(r.rouge2 for r in rouge),
            rougeL=max(r.rougeL for r in rouge),
        ),
        observation_f1=obs,
    )


def pool_bounds(records: Sequence[ExampleRecord], *, workers: int = 1) -> PoolBounds:
    """Compute the per-metric upper bound of selecting from each record's
    pool, taking the best candidate separately for every metric.

    Records without gold triplets or with an empty pool are reported as
    failures.
    """
    bounds, failures = _map_records(records, _example_bounds, workers, "pool bounds")
    obs = [b.observation_f1 for b in bounds]
    return PoolBounds(
        n_examples=len(records),
        example_ids=tuple(b.example_id for b in bounds),
        failures=tuple(failures),
        radgraph=_mean(b.radgraph for b in bounds) if bounds else None,
        rouge1=_mean(b.rouge.rouge1 for b in bounds) if bounds else None,
        rouge2=_mean(b.rouge.rouge2 for b in bounds) if bounds else None,
        rougeL=_mean(b.rouge.rougeL for b in bounds) if bounds else None,
        observation_f1=_mean(obs) if obs and None not in obs else None,  # type: ignore[arg-type]
    )
