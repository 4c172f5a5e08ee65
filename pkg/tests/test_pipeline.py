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

"""End-to-end checks of ranking strategies on a seeded synthetic corpus."""

import unittest

from radfact.rerank.corpus import SynthConfig, synthesize
from radfact.rerank.genclient import CopySourcePredictor, OracleLeakPredictor
from radfact.rerank.metrics import AveragingMode
from radfact.rerank.reranker import Strategy, StrategyReport, evaluate_strategy


class SyntheticPipelineTestCase(unittest.TestCase):
    """Tests that run every strategy over 1000 examples of 10 candidates."""

    @classmethod
    def setUpClass(cls) -> None:
        cls.config = SynthConfig(
            seed=20230707,
            examples=1000,
            candidates_per_example=10,
            drop=0.3,
            flip_label=0.1,
            flip_flag=0.1,
            first_stage_noise=0.5,
        )
        cls.records = synthesize(cls.config)
        cls.reports: dict[str, StrategyReport] = {
            "first-stage": evaluate_strategy(cls.records, Strategy.FIRST_STAGE),
            "oracle": evaluate_strategy(cls.records, Strategy.ORACLE),
            "source": evaluate_strategy(cls.records, Strategy.SOURCE_GRAPH),
            "fact+leak": evaluate_strategy(
                cls.records, Strategy.FACT_GUIDED, OracleLeakPredictor(allow=True)
            ),
            "fact+copy": evaluate_strategy(cls.records, Strategy.FACT_GUIDED, CopySourcePredictor()),
        }

    def assertSameRankings(self, a: StrategyReport, b: StrategyReport) -> None:
        self.assertEqual(len(a.results), len(self.records))
        self.assertEqual(len(b.results), len(self.records))
        for x, y in zip(a.results, b.results, strict=True):
            self.assertEqual(x.example_id, y.example_id)
            self.assertEqual(x.outcome.order, y.outcome.order)
            self.assertEqual(x.outcome.scores, y.outcome.scores)

    def test_no_failures(self) -> None:
        for name, report in self.reports.items():
            with self.subTest(strategy=name):
                self.assertEqual(report.failures, ())
                self.assertEqual(report.n_examples, 1000)

    def test_oracle_leak_matches_oracle(self) -> None:
        self.assertSameRankings(self.reports["oracle"], self.reports["fact+leak"])

    def test_copy_source_matches_source_graph(self) -> None:
        self.assertSameRankings(self.reports["source"], self.reports["fact+copy"])

    def test_strategy_ordering(self) -> None:
        oracle = self.reports["oracle"]
        leak = self.reports["fact+leak"]
        first = self.reports["first-stage"]
        self.assertEqual(oracle.radmrr, 1.0)
        self.assertEqual(leak.radmrr, 1.0)
        assert first.radmrr is not None and oracle.radgraph is not None and first.radgraph is not None
        self.assertLess(first.radmrr, oracle.radmrr)
        self.assertGreaterEqual(100.0 * (oracle.radgraph - first.radgraph), 5.0)

    def test_observation_f1_is_reported(self) -> None:
        for report in self.reports.values():
            self.assertIsNotNone(report.observation_f1)
            self.assertIs(report.observation_mode, AveragingMode.MICRO)

    def test_workers_do_not_change_results(self) -> None:
        subset = self.records[:200]
        serial = evaluate_strategy(subset, Strategy.FIRST_STAGE)
        threaded = evaluate_strategy(subset, Strategy.FIRST_STAGE, workers=4)
        self.assertEqual(serial, threaded)


if __name__ == "__main__":
    unittest.main()
