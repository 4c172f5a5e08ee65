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

"""Providers of predicted target triplet sets.

The sequence-to-sequence model that maps findings triplets to impression
triplets is external; this module hides it behind `TargetPredictor` so a
trained model served over HTTP, stored generations, or simple stand-ins can
be swapped without touching ranking code.
"""

from __future__ import annotations

__all__ = (
    "GeneratorProvider",
    "HeuristicConfig",
    "Prediction",
    "ProviderError",
    "TargetPredictor",
    "FileBackedPredictor",
    "RemotePredictor",
    "CopySourcePredictor",
    "OracleLeakPredictor",
    "HeuristicPredictor",
    "make_predictor",
    "predict_target",
)

import dataclasses
import enum
import os
import threading
import time
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Any, ClassVar

import pydantic
import requests
import yaml
from lsst.resources import ResourcePath, ResourcePathExpression
from lsst.utils.logging import getLogger

from ._constants import (
    DEFAULT_BACKOFF,
    DEFAULT_MAX_IN_FLIGHT,
    DEFAULT_RETRIES,
    DEFAULT_TIMEOUT,
    ENDPOINT_ENV_VAR,
)
from .factmodel import EntityLabel, RelationFlag, TripletSet
from .linearizer import ParseMode, RejectedSegment, linearize, parse
from .reranker import CorpusDataError, RankingConfigurationError

if TYPE_CHECKING:
    from .corpus import ExampleRecord

_LOG = getLogger(__name__)


class ProviderError(RuntimeError):
    """Exception raised when a provider cannot produce a prediction for an
    example.

    Parameters
    ----------
    example_id : `str`
        ID of the example that failed.
    message : `str`
        Description of the failure.
    """

    def __init__(self, example_id: str, message: str):
        super().__init__(f"Example {example_id!r}: {message}")
        self.example_id = example_id


class GeneratorProvider(enum.Enum):
    FILE_BACKED = "file"
    REMOTE = "remote"
    COPY_SOURCE = "copy-source"
    ORACLE_LEAK = "oracle-leak"
    HEURISTIC = "heuristic"


class HeuristicConfig(pydantic.BaseModel):
    """Rules for the heuristic stand-in generator.

    Source triplets are kept if they carry a relation (when
    ``keep_rel_only``) and their label is listed in ``label_priority``; at
    most ``max_triplets`` survive, preferring earlier labels in
    ``label_priority``.
    """

    model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

    label_priority: tuple[EntityLabel, ...] = (
        EntityLabel.OBS_DA,
        EntityLabel.OBS_DP,
        EntityLabel.OBS_U,
        EntityLabel.ANAT_DP,
    )
    max_triplets: int = pydantic.Field(default=8, ge=1)
    keep_rel_only: bool = True

    @pydantic.field_validator("label_priority")
    @classmethod
    def _check_unique(cls, value: tuple[EntityLabel, ...]) -> tuple[EntityLabel, ...]:
        if len(set(value)) != len(value):
            raise ValueError(f"Labels in label_priority must be unique, got {[v.value for v in value]}.")
        return value

    @classmethod
    def read(cls, uri: ResourcePathExpression) -> HeuristicConfig:
        """Read a configuration from a YAML file."""
        data = yaml.safe_load(ResourcePath(uri).read())
        return cls.model_validate(data or {})


@dataclasses.dataclass(frozen=True)
class Prediction:
    """A predicted target triplet set and how it was obtained.

    Attributes
    ----------
    example_id : `str`
        Record ID.
    triplets : `TripletSet`
        Predicted triplets of the unseen summary.
    rejected : `tuple` [ `RejectedSegment`, ... ]
        Corrupted generated segments that were filtered out.
    sequence : `str` or `None`
        Raw generated sequence, for providers that generate one.
    """

    example_id: str
    triplets: TripletSet
    rejected: tuple[RejectedSegment, ...] = ()
    sequence: str | None = None

    @property
    def n_corrupted(self) -> int:
        return len(self.rejected)


def _require_source(record: ExampleRecord) -> TripletSet:
    if (source := record.source_triplets) is None:
        raise CorpusDataError(f"Example {record.id!r} has no findings triplets or graph.")
    return source


class TargetPredictor(ABC):
    """Interface for objects that predict an example's target triplets.

    Implementations must be safe to call from several threads at once.
    """

    provider: ClassVar[GeneratorProvider]

    @abstractmethod
    def predict(self, record: ExampleRecord) -> Prediction:
        """Return the predicted target triplets of one record.

        Raises
        ------
        CorpusDataError
            Raised if the record lacks what this provider reads.
        ProviderError
            Raised if generation fails for this record.
        """
        raise NotImplementedError()


class _SequencePredictor(TargetPredictor):
    """Base class for providers that obtain a generated sequence and parse
    it.
    """

    def __init__(self, mode: ParseMode = ParseMode.STRICT, lowercase: bool = True):
        self.mode = mode
        self.lowercase = lowercase

    def _from_sequence(self, example_id: str, sequence: str) -> Prediction:
        report = parse(sequence, self.mode, lowercase=self.lowercase)
        if report.rejected:
            _LOG.verbose(
                "Filtered %d corrupted segment(s) from the sequence generated for %r.",
                report.n_rejected,
                example_id,
            )
        return Prediction(example_id, report.accepted, report.rejected, sequence)


class FileBackedPredictor(_SequencePredictor):
    """Parse the generated sequence stored on each record."""

    provider = GeneratorProvider.FILE_BACKED

    def predict(self, record: ExampleRecord) -> Prediction:
        if record.predicted_sequence is None:
            raise CorpusDataError(f"Example {record.id!r} has no 'predicted_sequence'.")
        return self._from_sequence(record.id, record.predicted_sequence)


class RemotePredictor(_SequencePredictor):
    """Request generated sequences from an HTTP endpoint.

    Parameters
    ----------
    endpoint : `str`
        Base URL; requests go to ``{endpoint}/generate``.
    mode : `ParseMode`, optional
        How generated sequences are parsed.
    timeout : `float`, optional
        Per-request timeout in seconds.
    retries : `int`, optional
        Extra attempts after a transport failure or server error.
    backoff : `float`, optional
        Delay before the first retry, doubled for each later one.
    max_in_flight : `int`, optional
        Maximum number of concurrent requests.
    lowercase : `bool`, optional
        Passed to `parse`.

    Notes
    -----
    The request body is ``{"id": ..., "source_sequence": ...}`` with the
    linearized findings triplets; the response body must hold a
    ``"generated_sequence"`` string.  Client errors (4xx) and malformed
    responses fail immediately; connection errors, timeouts and 5xx
    responses are retried.
    """

    provider = GeneratorProvider.REMOTE

    def __init__(
        self,
        endpoint: str,
        *,
        mode: ParseMode = ParseMode.STRICT,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        lowercase: bool = True,
    ):
        super().__init__(mode, lowercase)
        self.url = endpoint.rstrip("/") + "/generate"
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._local = threading.local()

    @property
    def _session(self) -> requests.Session:
        # Sessions are not guaranteed to be thread-safe; keep one per thread.
        if (session := getattr(self._local, "session", None)) is None:
            session = requests.Session()
            self._local.session = session
        return session

    def predict(self, record: ExampleRecord) -> Prediction:
        payload = {"id": record.id, "source_sequence": linearize(_require_source(record))}
        return self._from_sequence(record.id, self._request(record.id, payload))

    def _request(self, example_id: str, payload: dict[str, Any]) -> str:
        last_failure = ""
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    response = self._session.post(self.url, json=payload, timeout=self.timeout)
            except requests.RequestException as err:
                last_failure = f"transport error: {err}"
                _LOG.verbose("Attempt %d for %r failed with %s.", attempt + 1, example_id, last_failure)
                continue
            if response.status_code >= 500:
                last_failure = f"HTTP {response.status_code}"
                _LOG.verbose("Attempt %d for %r failed with %s.", attempt + 1, example_id, last_failure)
                continue
            if not response.ok:
                raise ProviderError(example_id, f"generation endpoint returned HTTP {response.status_code}.")
            try:
                body = response.json()
            except ValueError:
                raise ProviderError(example_id, "generation endpoint returned a non-JSON body.") from None
            sequence = body.get("generated_sequence") if isinstance(body, dict) else None
            if not isinstance(sequence, str):
                raise ProviderError(example_id, "response has no 'generated_sequence' string.")
            return sequence
        raise ProviderError(
            example_id, f"gave up after {self.retries + 1} attempts; last was {last_failure}."
        )


class CopySourcePredictor(TargetPredictor):
    """Predict that the summary states exactly the findings' facts."""

    provider = GeneratorProvider.COPY_SOURCE

    def predict(self, record: ExampleRecord) -> Prediction:
        return Prediction(record.id, _require_source(record))


class OracleLeakPredictor(TargetPredictor):
    """Return the gold summary's triplets.

    This leaks the answer and exists only to validate the pipeline, so it
    must be enabled explicitly.

    Raises
    ------
    RankingConfigurationError
        Raised on construction unless ``allow`` is `True`.
    """

    provider = GeneratorProvider.ORACLE_LEAK

    def __init__(self, allow: bool = False):
        if not allow:
            raise RankingConfigurationError(
                "The oracle-leak provider reads gold triplets; it must be enabled explicitly."
            )

    def predict(self, record: ExampleRecord) -> Prediction:
        if (gold := record.gold_triplets) is None:
            raise CorpusDataError(f"Example {record.id!r} has no gold triplets or graph.")
        return Prediction(record.id, gold)


class HeuristicPredictor(TargetPredictor):
    """Predict a rule-based subset of the findings' triplets."""

    provider = GeneratorProvider.HEURISTIC

    def __init__(self, config: HeuristicConfig | None = None):
        self.config = config if config is not None else HeuristicConfig()

    def predict(self, record: ExampleRecord) -> Prediction:
        priority = {label: i for i, label in enumerate(self.config.label_priority)}
        kept = _require_source(record).filter(
            lambda t: t.label in priority and (t.flag is RelationFlag.REL or not self.config.keep_rel_only)
        )
        ordered = kept.ordered
        chosen = sorted(range(len(ordered)), key=lambda i: (priority[ordered[i].label], i))
        chosen = sorted(chosen[: self.config.max_triplets])
        return Prediction(record.id, TripletSet(ordered[i] for i in chosen))


def make_predictor(
    provider: GeneratorProvider,
    *,
    mode: ParseMode = ParseMode.STRICT,
    endpoint: str | None = None,
    allow_oracle_leak: bool = False,
    heuristic: HeuristicConfig | None = None,
    lowercase: bool = True,
    **remote_options: Any,
) -> TargetPredictor:
    """Construct the predictor for a provider.

    Parameters
    ----------
    provider : `GeneratorProvider`
        Which provider to build.
    mode : `ParseMode`, optional
        Parse mode for providers that parse generated sequences.
    endpoint : `str`, optional
        Remote endpoint; falls back to the ``RADFACT_GENERATOR_ENDPOINT``
        environment variable.
    allow_oracle_leak : `bool`, optional
        Must be `True` to build the oracle-leak provider.
    heuristic : `HeuristicConfig`, optional
        Rules for the heuristic provider.
    lowercase : `bool`, optional
        Entity case folding for parsed sequences.
    **remote_options
        Forwarded to `RemotePredictor`.

    Raises
    ------
    RankingConfigurationError
        Raised if the provider's prerequisites are not configured.
    """
    match provider:
        case GeneratorProvider.FILE_BACKED:
            return FileBackedPredictor(mode, lowercase)
        case GeneratorProvider.REMOTE:
            endpoint = endpoint or os.environ.get(ENDPOINT_ENV_VAR)
            if not endpoint:
                raise RankingConfigurationError(
                    f"The remote provider needs --endpoint or the {ENDPOINT_ENV_VAR} environment variable."
                )
            return RemotePredictor(endpoint, mode=mode, lowercase=lowercase, **remote_options)
        case GeneratorProvider.COPY_SOURCE:
            return CopySourcePredictor()
        case GeneratorProvider.ORACLE_LEAK:
            return OracleLeakPredictor(allow_oracle_leak)
        case GeneratorProvider.HEURISTIC:
            return HeuristicPredictor(heuristic)
    raise AssertionError(f"Unhandled provider {provider}.")


def predict_target(predictor: TargetPredictor, record: ExampleRecord) -> Prediction:
    """Return the predicted target triplets of one record."""
    return predictor.predict(record)
