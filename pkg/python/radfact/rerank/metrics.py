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
    "ScoreValue",
    "AveragingMode",
    "RougeScores",
    "UndefinedMetricError",
    "AlignmentError",
    "format_percent",
    "radgraph_precision_recall",
    "radgraph_score",
    "reciprocal_rank",
    "radmrr",
    "rouge_tokenize",
    "rouge_n",
    "rouge_l",
    "rouge_scores",
    "make_observation_vector",
    "observation_f1",
)

import dataclasses
import enum
import math
import re
from collections import Counter
from collections.abc import Iterable, Sequence
from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from ._constants import OBSERVATIONS
from .factmodel import TripletSet

ScoreValue: TypeAlias = float
"""A ratio in [0, 1]; rendered as a percentage only in reports."""

_WORD_RE = re.compile(r"[^\W_]+")


class UndefinedMetricError(ValueError):
    """Exception raised when a metric is requested over no examples."""


class AlignmentError(ValueError):
    """Exception raised when prediction and reference lists are not
    aligned.
    """


class AveragingMode(enum.Enum):
    """How observation F1 is aggregated."""

    MICRO = "micro"
    MACRO = "macro"
    EXAMPLE = "example"


def format_percent(value: ScoreValue) -> str:
    """Render a ratio as a percentage with two decimals."""
    return f"{100.0 * value:.2f}"


def _f1(tp: int, fp: int, fn: int) -> float:
    # Nothing predicted and nothing expected is a perfect match.
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def radgraph_precision_recall(a: TripletSet, b: TripletSet) -> tuple[ScoreValue, ScoreValue]:
    """Return the precision and recall of triplet set ``a`` against ``b``.

    An empty side has precision (or recall) 1 when the other side is also
    empty and 0 otherwise.
    """
    shared = len(a & b)
    precision = shared / len(a) if a else float(not b)
    recall = shared / len(b) if b else float(not a)
    return precision, recall


def radgraph_score(a: TripletSet, b: TripletSet) -> ScoreValue:
    """Return the RadGraph F1 between two triplet sets.

    This is ``2 |a ∩ b| / (|a| + |b|)`` with exact equality on
    ``(entity, label, flag)``.  Two empty sets score 1 and exactly one empty
    set scores 0.  The score is symmetric.
    """
    if not a and not b:
        return 1.0
    return 2.0 * len(a & b) / (len(a) + len(b))


def reciprocal_rank(true_scores: Sequence[float], ranking: Sequence[int]) -> float:
    """Return the reciprocal rank of the best candidate in a ranking.

    Parameters
    ----------
    true_scores : `~collections.abc.Sequence` [ `float` ]
        True score of each candidate, by candidate index.
    ranking : `~collections.abc.Sequence` [ `int` ]
        Candidate indices, best first; must be a permutation of
        ``range(len(true_scores))``.

    Returns
    -------
    rr : `float`
        ``1 / rank`` of the best-placed candidate among those tied for the
        highest true score.
    """
    if not true_scores:
        raise ValueError("Cannot compute a reciprocal rank over an empty candidate pool.")
    if sorted(ranking) != list(range(len(true_scores))):
        raise ValueError(f"Ranking {list(ranking)} is not a permutation of {len(true_scores)} candidates.")
    best = max(true_scores)
    for position, index in enumerate(ranking, start=1):
        if true_scores[index] == best:
            return 1.0 / position
    raise AssertionError("Unreachable: the best candidate is always in the ranking.")


def radmrr(examples: Iterable[tuple[Sequence[float], Sequence[int]]]) -> ScoreValue:
    """Return the mean reciprocal rank of the factually best candidate.

    Parameters
    ----------
    examples : `~collections.abc.Iterable`
        ``(true_scores, ranking)`` pairs, one per example, as accepted by
        `reciprocal_rank`.

    Raises
    ------
    UndefinedMetricError
        Raised if there are no examples.
    """
    terms = [reciprocal_rank(scores, ranking) for scores, ranking in examples]
    if not terms:
        raise UndefinedMetricError("RadMRR is undefined over zero examples.")
    return math.fsum(terms) / len(terms)


def rouge_tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it on runs of non-alphanumeric
    characters.
    """
    return _WORD_RE.findall(text.lower())


def _ngrams(tokens: Sequence[str], n: int) -> Counter[tuple[str, ...]]:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _overlap_f1(overlap: int, n_candidate: int, n_reference: int) -> float:
    if n_candidate == 0 and n_reference == 0:
        return 1.0
    if overlap == 0:
        return 0.0
    precision = overlap / n_candidate
    recall = overlap / n_reference
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int = 1) -> ScoreValue:
    """Return ROUGE-N F1 from clipped n-gram overlap counts.

    A side with no n-grams (including a text shorter than ``n`` tokens)
    counts as empty.
    """
    if n < 1:
        raise ValueError(f"ROUGE order must be positive, got {n}.")
    candidate_grams = _ngrams(candidate, n)
    reference_grams = _ngrams(reference, n)
    overlap = sum((candidate_grams & reference_grams).values())
    return _overlap_f1(overlap, candidate_grams.total(), reference_grams.total())


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            current.append(previous[j - 1] + 1 if token == other else max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> ScoreValue:
    """Return ROUGE-L F1 from the longest common subsequence length."""
    return _overlap_f1(_lcs_length(candidate, reference), len(candidate), len(reference))


@dataclasses.dataclass(frozen=True)
class RougeScores:
    rouge1: ScoreValue
    rouge2: ScoreValue
    rougeL: ScoreValue


def rouge_scores(candidate_text: str, reference_text: str) -> RougeScores:
    """Tokenize two texts with `rouge_tokenize` and score ROUGE-1/2/L."""
    candidate = rouge_tokenize(candidate_text)
    reference = rouge_tokenize(reference_text)
    return RougeScores(
        rouge1=rouge_n(candidate, reference, 1),
        rouge2=rouge_n(candidate, reference, 2),
        rougeL=rouge_l(candidate, reference),
    )


def make_observation_vector(values: Iterable[int | bool]) -> npt.NDArray[np.bool_]:
    """Validate and convert one observation indicator vector.

    Raises
    ------
    ValueError
        Raised if there are not exactly as many entries as observations or
        an entry is not 0 or 1.
    """
    array = np.asarray(list(values))
    if array.shape != (len(OBSERVATIONS),):
        raise ValueError(f"Observation vectors have {len(OBSERVATIONS)} entries, got shape {array.shape}.")
    if not np.isin(array, (0, 1)).all():
        raise ValueError(f"Observation vector entries must be 0 or 1, got {array.tolist()}.")
    return array.astype(bool)


def observation_f1(
    pred: Sequence[Iterable[int | bool]],
    gold: Sequence[Iterable[int | bool]],
    mode: AveragingMode = AveragingMode.MICRO,
) -> ScoreValue:
    """Return the F1 between predicted and reference observation vectors.

    Parameters
    ----------
    pred, gold : `~collections.abc.Sequence`
        Indicator vectors, aligned by example.
    mode : `AveragingMode`, optional
        ``MICRO`` pools counts over every slot of every example; ``MACRO``
        averages per-observation F1; ``EXAMPLE`` averages per-example F1.
        An observation (or example) with nothing expected and nothing
        predicted scores 1.

    Raises
    ------
    AlignmentError
        Raised if the two lists differ in length.
    UndefinedMetricError
        Raised if the lists are empty.
    """
    if len(pred) != len(gold):
        raise AlignmentError(f"Got {len(pred)} predicted vectors for {len(gold)} reference vectors.")
    if not pred:
        raise UndefinedMetricError("Observation F1 is undefined over zero examples.")
    p = np.stack([make_observation_vector(v) for v in pred])
    g = np.stack([make_observation_vector(v) for v in gold])
    tp = p & g
    fp = p & ~g
    fn = ~p & g
    match mode:
        case AveragingMode.MICRO:
            return _f1(int(tp.sum()), int(fp.sum()), int(fn.sum()))
        case AveragingMode.MACRO:
            axis = 0
        case AveragingMode.EXAMPLE:
            axis = 1
    per_group = [
        _f1(int(t), int(f), int(n))
        for t, f, n in zip(tp.sum(axis=axis), fp.sum(axis=axis), fn.sum(axis=axis), strict=True)
    ]
    return math.fsum(per_group) / len(per_group)
