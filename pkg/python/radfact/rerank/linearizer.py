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

"""Conversion between triplet sets and their linearized token sequences."""

from __future__ import annotations

__all__ = (
    "ParseMode",
    "RejectReason",
    "RejectedSegment",
    "ParseReport",
    "linearize",
    "parse",
)

import dataclasses
import enum

from lsst.utils.logging import getLogger

from ._constants import BOS_TOKEN, ENT_TOKEN, EOS_TOKEN, RESERVED_SPELLINGS
from .factmodel import EntityLabel, RelationFlag, Triplet, TripletSet, normalize_entity

_LOG = getLogger(__name__)

_LABEL_TOKENS = {label.token: label for label in EntityLabel}
_FLAG_TOKENS = {flag.token: flag for flag in RelationFlag}


class ParseMode(enum.Enum):
    """How strictly generated segments are validated."""

    STRICT = "strict"
    """Exactly three tokens: entity, label, flag."""

    LENIENT = "lenient"
    """One or more entity tokens followed by a label and a flag."""


class RejectReason(enum.Enum):
    BAD_ARITY = "bad-arity"
    BAD_LABEL_TOKEN = "bad-label-token"
    BAD_FLAG_TOKEN = "bad-flag-token"
    EMPTY_ENTITY = "empty-entity"


@dataclasses.dataclass(frozen=True)
class RejectedSegment:
    """A generated segment that did not form a valid triplet."""

    text: str
    reason: RejectReason


@dataclasses.dataclass(frozen=True)
class ParseReport:
    """Result of parsing one generated sequence.

    Attributes
    ----------
    accepted : `TripletSet`
        Triplets from valid segments, normalized and deduplicated.
    rejected : `tuple` [ `RejectedSegment`, ... ]
        Corrupted segments with the reason each was dropped.
    segment_count : `int`
        Number of segments found; every segment is either accepted or
        rejected.
    """

    accepted: TripletSet
    rejected: tuple[RejectedSegment, ...]
    segment_count: int

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)

    @property
    def n_accepted_segments(self) -> int:
        return self.segment_count - len(self.rejected)


def linearize(triplets: TripletSet) -> str:
    """Render a triplet set as a token sequence.

    Parameters
    ----------
    triplets : `TripletSet`
        Triplets to render, in their first-appearance order.

    Returns
    -------
    sequence : `str`
        ``<s>``, then ``entity [LABEL] [FLAG]`` for each triplet joined by
        `` [ENT] ``, then ``</s>``.  An empty set renders as ``<s></s>``.
    """
    body = f" {ENT_TOKEN} ".join(
        f"{t.entity} {t.label.token} {t.flag.token}" for t in triplets.ordered
    )
    return f"{BOS_TOKEN}{body}{EOS_TOKEN}"


def _is_plain(token: str) -> bool:
    folded = token.lower()
    return not any(spelling in token or spelling in folded for spelling in RESERVED_SPELLINGS)


def _check_segment(tokens: list[str], mode: ParseMode) -> RejectReason | None:
    if len(tokens) == 2 and tokens[0] in _LABEL_TOKENS and tokens[1] in _FLAG_TOKENS:
        return RejectReason.EMPTY_ENTITY
    if mode is ParseMode.STRICT:
        if len(tokens) != 3:
            return RejectReason.BAD_ARITY
    elif len(tokens) < 3:
        return RejectReason.BAD_ARITY
    if not all(_is_plain(token) for token in tokens[:-2]):
        return RejectReason.BAD_ARITY
    if tokens[-2] not in _LABEL_TOKENS:
        return RejectReason.BAD_LABEL_TOKEN
    if tokens[-1] not in _FLAG_TOKENS:
        return RejectReason.BAD_FLAG_TOKEN
    return None


def parse(sequence: str, mode: ParseMode = ParseMode.STRICT, *, lowercase: bool = True) -> ParseReport:
    """Parse a generated token sequence into triplets, dropping corrupted
    segments.

    Parameters
    ----------
    sequence : `str`
        Generated text.  One leading ``<s>`` and one trailing ``</s>`` are
        stripped when present.
    mode : `ParseMode`, optional
        Segment validation rule; strict by default.
    lowercase : `bool`, optional
        Passed to `normalize_entity` for accepted entities.

    Returns
    -------
    report : `ParseReport`
        Accepted triplets and rejected segments.  This function never raises
        on malformed input.
    """
    body = sequence.strip()
    if body.startswith(BOS_TOKEN):
        body = body[len(BOS_TOKEN) :]
    if body.endswith(EOS_TOKEN):
        body = body[: -len(EOS_TOKEN)]
    if not body.strip():
        return ParseReport(TripletSet(), (), 0)
    segments = body.split(ENT_TOKEN)
    accepted: list[Triplet] = []
    rejected: list[RejectedSegment] = []
    for segment in segments:
        tokens = segment.split()
        if (reason := _check_segment(tokens, mode)) is not None:
            rejected.append(RejectedSegment(segment.strip(), reason))
            continue
        accepted.append(
            Triplet(
                normalize_entity(" ".join(tokens[:-2]), lowercase=lowercase),
                _LABEL_TOKENS[tokens[-2]],
                _FLAG_TOKENS[tokens[-1]],
            )
        )
    if rejected:
        _LOG.debug("Dropped %d of %d generated segments.", len(rejected), len(segments))
    return ParseReport(TripletSet(accepted), tuple(rejected), len(segments))
