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

__all__ = ("RunConfig", "main")

import argparse
import logging
import sys
from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import Literal

import pydantic
from lsst.resources import ResourcePath
from lsst.utils.logging import VERBOSE, getLogger
from lsst.utils.timer import time_this

from .corpus import (
    CorpusLoadError,
    ExampleRecord,
    RecordFilter,
    SynthConfig,
    corpus_stats,
    load_corpus,
    save_corpus,
    synthesize,
)
from .genclient import GeneratorProvider, HeuristicConfig, TargetPredictor, make_predictor
from .linearizer import ParseMode, linearize, parse
from .metrics import AveragingMode
from .report import (
    OutputFormat,
    SerializedParse,
    SerializedPoolBounds,
    SerializedStrategyReport,
    format_report_table,
    format_selection,
    format_stats,
)
from .reranker import (
    RankingConfigurationError,
    Strategy,
    evaluate_strategy,
    pool_bounds,
    select_strategy,
)

_LOG = getLogger(__name__)

_LOG_LEVELS = {
    "DEBUG": logging.DEBUG,
    "VERBOSE": VERBOSE,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}

Subcommand = Literal["linearize", "parse", "rerank", "eval", "synth", "stats"]


class RunConfig(pydantic.BaseModel):
    """Validated options of one command-line invocation.

    Strategy and provider compatibility is checked here, before any input is
    read.
    """

    model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

    subcommand: Subcommand
    input: str | None = None
    output: str | None = None
    strategies: tuple[Strategy, ...] = ()
    provider: GeneratorProvider | None = None
    parse_mode: ParseMode = ParseMode.STRICT
    endpoint: str | None = None
    allow_oracle_leak: bool = False
    workers: int = pydantic.Field(default=1, ge=1)
    seed: int | None = pydantic.Field(default=None, ge=0)
    output_format: OutputFormat = OutputFormat.TABLE
    config: str | None = None
    filter_short: bool = False
    mode: AveragingMode = AveragingMode.MICRO
    which: Literal["source", "gold"] = "source"
    bounds: bool = False

    @pydantic.model_validator(mode="after")
    def _check_compatibility(self) -> RunConfig:
        if self.subcommand == "synth":
            if self.output is None:
                raise ValueError("synth needs --output.")
        elif self.input is None:
            raise ValueError(f"{self.subcommand} needs --input.")
        if self.subcommand == "rerank" and len(self.strategies) != 1:
            raise ValueError("rerank needs exactly one --strategy.")
        if self.subcommand == "eval" and not self.strategies:
            raise ValueError("eval needs at least one --strategy.")
        if Strategy.FACT_GUIDED in self.strategies and self.provider is None:
            raise ValueError("Strategy 'fact' needs --provider.")
        if self.provider is GeneratorProvider.ORACLE_LEAK and not self.allow_oracle_leak:
            raise ValueError("The oracle-leak provider needs --allow-oracle-leak.")
        return self

    @classmethod
    def from_namespace(cls, args: argparse.Namespace) -> RunConfig:
        strategies = getattr(args, "strategy", None) or ()
        if isinstance(strategies, str):
            strategies = (strategies,)
        values = {
            "subcommand": args.name,
            "input": getattr(args, "input", None),
            "output": getattr(args, "output", None),
            "strategies": tuple(dict.fromkeys(Strategy(s) for s in strategies)),
            "provider": getattr(args, "provider", None),
            "parse_mode": getattr(args, "parse_mode", ParseMode.STRICT.value),
            "endpoint": getattr(args, "endpoint", None),
            "allow_oracle_leak": getattr(args, "allow_oracle_leak", False),
            "workers": getattr(args, "workers", 1),
            "seed": getattr(args, "seed", None),
            "output_format": getattr(args, "format", OutputFormat.TABLE.value),
            "config": getattr(args, "config", None),
            "filter_short": getattr(args, "filter_short", False),
            "mode": getattr(args, "mode", AveragingMode.MICRO.value),
            "which": getattr(args, "which", "source"),
            "bounds": getattr(args, "bounds", False),
        }
        return cls.model_validate(values)

    def load(self) -> list[ExampleRecord]:
        assert self.input is not None, "Checked by validator."
        return load_corpus(self.input, record_filter=RecordFilter() if self.filter_short else None)

    def make_predictor(self) -> TargetPredictor | None:
        if Strategy.FACT_GUIDED not in self.strategies:
            return None
        assert self.provider is not None, "Checked by validator."
        heuristic = None
        if self.provider is GeneratorProvider.HEURISTIC and self.config is not None:
            heuristic = HeuristicConfig.read(self.config)
        return make_predictor(
            self.provider,
            mode=self.parse_mode,
            endpoint=self.endpoint,
            allow_oracle_leak=self.allow_oracle_leak,
            heuristic=heuristic,
        )

    def emit(self, text: str) -> None:
        """Write command output to ``--output``, or to standard output."""
        if self.output is None:
            sys.stdout.write(text)
        else:
            ResourcePath(self.output).write(text.encode(), overwrite=True)


def _add_input(parser: argparse.ArgumentParser, help: str = "Input corpus (JSON Lines).") -> None:
    parser.add_argument("--input", "-i", help=help)


def _add_output(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output", "-o", default=None, help="Output file; default is standard output.")


def _add_format(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format",
        choices=[f.value for f in OutputFormat],
        default=OutputFormat.TABLE.value,
        help="Render output as an aligned text table or as JSON Lines.",
    )


def _add_ranking(parser: argparse.ArgumentParser, multiple: bool) -> None:
    parser.add_argument(
        "--strategy",
        "-s",
        choices=[s.value for s in Strategy],
        nargs="+" if multiple else None,
        required=True,
        help="Ranking strateg" + ("ies to evaluate." if multiple else "y."),
    )
    parser.add_argument(
        "--provider",
        "-p",
        choices=[p.value for p in GeneratorProvider],
        default=None,
        help="Source of predicted summary triplets for the 'fact' strategy.",
    )
    parser.add_argument(
        "--parse-mode",
        choices=[m.value for m in ParseMode],
        default=ParseMode.STRICT.value,
        help="How generated sequences are parsed.",
    )
    parser.add_argument("--endpoint", default=None, help="Base URL of the remote generation service.")
    parser.add_argument(
        "--allow-oracle-leak",
        action="store_true",
        help="Permit the oracle-leak provider, which reads gold triplets.",
    )
    parser.add_argument("--config", default=None, help="YAML file with rules for the heuristic provider.")
    parser.add_argument("--workers", "-j", type=int, default=1, help="Examples evaluated concurrently.")
    parser.add_argument(
        "--filter-short",
        action="store_true",
        help="Skip records with very short findings or impressions.",
    )


class Tool(ABC):
    def __init__(self, parser: argparse.ArgumentParser, name: str):
        parser.set_defaults(subcommand=self, name=name)

    @abstractmethod
    def __call__(self, config: RunConfig) -> int:
        raise NotImplementedError()


class Linearize(Tool):
    def __init__(self, parser: argparse.ArgumentParser) -> None:
        super().__init__(parser, "linearize")
        _add_input(parser)
        _add_output(parser)
        parser.add_argument(
            "--which",
            choices=["source", "gold"],
            default="source",
            help="Linearize the findings (source) or impression (gold) triplets.",
        )

    def __call__(self, config: RunConfig) -> int:
        lines = []
        n_failed = 0
        for record in config.load():
            triplets = record.source_triplets if config.which == "source" else record.gold_triplets
            if triplets is None:
                _LOG.error("Record %r has no %s triplets or graph.", record.id, config.which)
                n_failed += 1
                continue
            lines.append(linearize(triplets) + "\n")
        config.emit("".join(lines))
        return 1 if n_failed else 0


class Parse(Tool):
    def __init__(self, parser: argparse.ArgumentParser) -> None:
        super().__init__(parser, "parse")
        _add_input(parser, "Text file with one generated sequence per line.")
        _add_output(parser)
        parser.add_argument(
            "--parse-mode",
            choices=[m.value for m in ParseMode],
            default=ParseMode.STRICT.value,
            help="How segments with the wrong number of tokens are handled.",
        )

    def __call__(self, config: RunConfig) -> int:
        assert config.input is not None, "Checked by validator."
        lines = []
        n_accepted = 0
        n_rejected = 0
        for sequence in ResourcePath(config.input).read().decode().splitlines():
            if not sequence.strip():
                continue
            report = parse(sequence, config.parse_mode)
            n_accepted += report.n_accepted_segments
            n_rejected += report.n_rejected
            lines.append(SerializedParse.from_report(report).model_dump_json() + "\n")
        config.emit("".join(lines))
        print(f"{n_accepted} accepted, {n_rejected} rejected segment(s) in {len(lines)} sequence(s).")
        return 0


class Rerank(Tool):
    def __init__(self, parser: argparse.ArgumentParser) -> None:
        super().__init__(parser, "rerank")
        _add_input(parser)
        _add_output(parser)
        _add_format(parser)
        _add_ranking(parser, multiple=False)

    def __call__(self, config: RunConfig) -> int:
        predictor = config.make_predictor()
        (strategy,) = config.strategies
        records = config.load()
        with time_this(log=_LOG, msg="Reranked with strategy %r", args=(strategy.value,), level=logging.INFO):
            selections, failures = select_strategy(records, strategy, predictor, workers=config.workers)
        config.emit("".join(format_selection(s, config.output_format) + "\n" for s in selections))
        print(f"{len(selections)} selected, {len(failures)} failed.")
        return 1 if failures else 0


class Eval(Tool):
    def __init__(self, parser: argparse.ArgumentParser) -> None:
        super().__init__(parser, "eval")
        _add_input(parser)
        _add_output(parser)
        _add_format(parser)
        _add_ranking(parser, multiple=True)
        parser.add_argument(
            "--mode",
            choices=[m.value for m in AveragingMode],
            default=AveragingMode.MICRO.value,
            help="Aggregation of observation F1.",
        )
        parser.add_argument(
            "--bounds",
            action="store_true",
            help="Also report the best score any pool candidate reaches on each metric.",
        )

    def __call__(self, config: RunConfig) -> int:
        predictor = config.make_predictor()
        records = config.load()
        reports = []
        for strategy in config.strategies:
            with time_this(
                log=_LOG, msg="Evaluated strategy %r", args=(strategy.value,), level=logging.INFO
            ):
                reports.append(
                    evaluate_strategy(
                        records,
                        strategy,
                        predictor if strategy is Strategy.FACT_GUIDED else None,
                        workers=config.workers,
                        mode=config.mode,
                    )
                )
        bounds = pool_bounds(records, workers=config.workers) if config.bounds else None
        if config.output_format is OutputFormat.JSONL:
            lines = [SerializedStrategyReport.from_report(r).model_dump_json() + "\n" for r in reports]
            if bounds is not None:
                lines.append(SerializedPoolBounds.from_bounds(bounds).model_dump_json() + "\n")
            config.emit("".join(lines))
        else:
            config.emit(format_report_table(reports, bounds))
        failed = any(r.failures for r in reports) or (bounds is not None and bounds.failures)
        return 1 if failed else 0


class Synth(Tool):
    def __init__(self, parser: argparse.ArgumentParser) -> None:
        super().__init__(parser, "synth")
        _add_output(parser)
        parser.add_argument("--config", default=None, help="YAML synthetic-corpus configuration.")
        parser.add_argument("--seed", type=int, default=None, help="Override the configured seed.")

    def __call__(self, config: RunConfig) -> int:
        synth_config = SynthConfig.read(config.config) if config.config is not None else SynthConfig()
        if config.seed is not None:
            synth_config = synth_config.model_copy(update={"seed": config.seed})
        assert config.output is not None, "Checked by validator."
        save_corpus(synthesize(synth_config), config.output)
        return 0


class Stats(Tool):
    def __init__(self, parser: argparse.ArgumentParser) -> None:
        super().__init__(parser, "stats")
        _add_input(parser)
        _add_output(parser)
        _add_format(parser)
        parser.add_argument(
            "--filter-short",
            action="store_true",
            help="Skip records with very short findings or impressions.",
        )

    def __call__(self, config: RunConfig) -> int:
        config.emit(format_stats(corpus_stats(config.load()), config.output_format))
        return 0


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command-line interface and return its exit code.

    The exit code is 0 if every record was processed, 1 if any per-record
    failure occurred, and 2 for configuration or input errors detected
    before or while loading.
    """
    parser = argparse.ArgumentParser(
        prog="radfact-rerank", description="Fact-guided reranking of radiology summary candidates."
    )
    parser.add_argument("--log-level", choices=list(_LOG_LEVELS), default="INFO", help="Logging threshold.")
    subparsers = parser.add_subparsers(required=True)
    Linearize(subparsers.add_parser("linearize", help="Write the triplet sequence of every record."))
    Parse(subparsers.add_parser("parse", help="Parse generated sequences into triplets."))
    Rerank(subparsers.add_parser("rerank", help="Select the top candidate of every record."))
    Eval(subparsers.add_parser("eval", help="Score ranking strategies over a corpus."))
    Synth(subparsers.add_parser("synth", help="Write a seeded synthetic corpus."))
    Stats(subparsers.add_parser("stats", help="Report average section lengths of a corpus."))
    args = parser.parse_args(argv)
    logging.basicConfig(level=_LOG_LEVELS[args.log_level], format="%(levelname)s %(name)s: %(message)s")
    try:
        config = RunConfig.from_namespace(args)
        return args.subcommand(config)
    except (pydantic.ValidationError, RankingConfigurationError, CorpusLoadError) as err:
        _LOG.error("%s", err)
        return 2


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
