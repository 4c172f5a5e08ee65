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
    "OutputFormat",
    "SerializedStrategyReport",
    "SerializedPoolBounds",
    "SerializedSelection",
    "SerializedParse",
    "SerializedStats",
    "format_report_table",
    "format_selection",
    "format_stats",
)

import enum
from collections.abc import Sequence
from typing import Literal

import pydantic

from .corpus import CorpusStats, SerializedTriplet
from .linearizer import ParseReport, RejectReason
from .metrics import AveragingMode, format_percent
from .reranker import ExampleResult, ExampleSelection, PoolBounds, StrategyReport


class OutputFormat(enum.Enum):
    """Rendering of command output."""

    TABLE = "table"
    JSONL = "jsonl"


class SerializedStrategyReport(pydantic.BaseModel):
    """Machine-readable form of a `StrategyReport`.

    Scores are ratios in [0, 1], as named by ``unit``.
    """

    strategy: str
    unit: Literal["ratio"] = "ratio"
    n_examples: int
    n_evaluated: int
    n_failures: int
    radmrr: float | None
    radgraph: float | None
    rouge1: float | None
    rouge2: float | None
    rougeL: float | None
    observation_f1: float | None
    observation_mode: AveragingMode
    n_corrupted: int

    @classmethod
    def from_report(cls, report: StrategyReport) -> SerializedStrategyReport:
        return cls(
            strategy=report.strategy.value,
            n_examples=report.n_examples,
            n_evaluated=len(report.results),
            n_failures=len(report.failures),
            radmrr=report.radmrr,
            radgraph=report.radgraph,
            rouge1=report.rouge1,
            rouge2=report.rouge2,
            rougeL=report.rougeL,
            observation_f1=report.observation_f1,
            observation_mode=report.observation_mode,
            n_corrupted=report.n_corrupted,
        )


class SerializedPoolBounds(pydantic.BaseModel):
    """Machine-readable form of `PoolBounds`, tagged so it can share a
    JSON Lines stream with strategy reports.
    """

    bound: Literal["pool-best"] = "pool-best"
    unit: Literal["ratio"] = "ratio"
    n_examples: int
    n_evaluated: int
    n_failures: int
    radgraph: float | None
    rouge1: float | None
    rouge2: float | None
    rougeL: float | None
    observation_f1: float | None

    @classmethod
    def from_bounds(cls, bounds: PoolBounds) -> SerializedPoolBounds:
        return cls(
            n_examples=bounds.n_examples,
            n_evaluated=len(bounds.example_ids),
            n_failures=len(bounds.failures),
            radgraph=bounds.radgraph,
            rouge1=bounds.rouge1,
            rouge2=bounds.rouge2,
            rougeL=bounds.rougeL,
            observation_f1=bounds.observation_f1,
        )


class SerializedSelection(pydantic.BaseModel):
    """Machine-readable form of one record's selected candidate."""

    id: str
    candidate_id: str
    text: str
    score: float

    @classmethod
    def from_result(cls, result: ExampleSelection | ExampleResult) -> SerializedSelection:
        return cls(
            id=result.example_id,
            candidate_id=result.outcome.selected,
            text=result.selected_text,
            score=result.outcome.scores[0],
        )


class SerializedRejection(pydantic.BaseModel):
    text: str
    reason: RejectReason


class SerializedParse(pydantic.BaseModel):
    """Machine-readable form of a `ParseReport`."""

    triplets: list[SerializedTriplet]
    rejected: list[SerializedRejection]
    segment_count: int

    @classmethod
    def from_report(cls, report: ParseReport) -> SerializedParse:
        return cls(
            triplets=SerializedTriplet.from_triplets(report.accepted),
            rejected=[SerializedRejection(text=r.text, reason=r.reason) for r in report.rejected],
            segment_count=report.segment_count,
        )


class SerializedStats(pydantic.BaseModel):
    count: int
    avg_findings_words: float | None
    avg_findings_sentences: float | None
    avg_impression_words: float | None
    avg_impression_sentences: float | None

    @classmethod
    def from_stats(cls, stats: CorpusStats) -> SerializedStats:
        return cls(
            count=stats.count,
            avg_findings_words=stats.avg_findings_words,
            avg_findings_sentences=stats.avg_findings_sentences,
            avg_impression_words=stats.avg_impression_words,
            avg_impression_sentences=stats.avg_impression_sentences,
        )


def _percent(value: float | None) -> str:
    return format_percent(value) if value is not None else "-"


def _align(rows: Sequence[Sequence[str]]) -> str:
    # First column left-aligned, numbers right-aligned.
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for row in rows:
        cells = [cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def format_report_table(reports: Sequence[StrategyReport], bounds: PoolBounds | None = None) -> str:
    """Render strategy reports as an aligned text table, one row per
    strategy, with scores as percentages.

    If ``bounds`` is given it is appended as a ``pool-best`` row, which has
    no RadMRR.
    """
    rows = [["strategy", "RadMRR", "RadGraph", "R-1", "R-2", "R-L", "obs-F1", "examples", "failed"]]
    for report in reports:
        rows.append(
            [
                report.strategy.value,
                _percent(report.radmrr),
                _percent(report.radgraph),
                _percent(report.rouge1),
                _percent(report.rouge2),
                _percent(report.rougeL),
                _percent(report.observation_f1),
                str(len(report.results)),
                str(len(report.failures)),
            ]
        )
    if bounds is not None:
        rows.append(
            [
                "pool-best",
                "-",
                _percent(bounds.radgraph),
                _percent(bounds.rouge1),
                _percent(bounds.rouge2),
                _percent(bounds.rougeL),
                _percent(bounds.observation_f1),
                str(len(bounds.example_ids)),
                str(len(bounds.failures)),
            ]
        )
    return _align(rows) + "\n"


def format_selection(result: ExampleSelection | ExampleResult, output_format: OutputFormat) -> str:
    """Render one selected candidate as a single line."""
    if output_format is OutputFormat.JSONL:
        return SerializedSelection.from_result(result).model_dump_json()
    text = " ".join(result.selected_text.split())
    score = format_percent(result.outcome.scores[0])
    return f"{result.example_id}\t{result.outcome.selected}\t{score}\t{text}"


def format_stats(stats: CorpusStats, output_format: OutputFormat) -> str:
    """Render corpus statistics."""
    if output_format is OutputFormat.JSONL:
        return SerializedStats.from_stats(stats).model_dump_json() + "\n"

    def fmt(value: float | None) -> str:
        return f"{value:.2f}" if value is not None else "-"

    rows = [
        ["section", "words", "sentences"],
        ["findings", fmt(stats.avg_findings_words), fmt(stats.avg_findings_sentences)],
        ["impression", fmt(stats.avg_impression_words), fmt(stats.avg_impression_sentences)],
    ]
    return f"{stats.count} record(s)\n" + _align(rows) + "\n"
