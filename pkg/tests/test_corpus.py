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

import json
import os
import tempfile
import unittest
from typing import Any

import pydantic

from radfact.rerank import OBSERVATIONS
from radfact.rerank.corpus import (
    CorpusLoadError,
    ExampleRecord,
    RecordFilter,
    SynthConfig,
    corpus_stats,
    load_corpus,
    observations_from_triplets,
    render_triplets,
    save_corpus,
    synthesize,
)
from radfact.rerank.factmodel import EntityLabel, RelationFlag, Triplet, TripletSet
from radfact.rerank.metrics import radgraph_score

TESTDIR = os.path.abspath(os.path.dirname(__file__))

RANKING_EXAMPLE = "resource://radfact.rerank/data/ranking-example.jsonl"
SYNTH_CONFIG = "resource://radfact.rerank/data/synth-config.yaml"

GOLD_TRIPLETS = [
    {"entity": "acute", "label": "OBS-DA", "flag": "REL"},
    {"entity": "process", "label": "OBS-DA", "flag": "REL"},
]


def make_line(**kwargs: Any) -> str:
    record = {
        "id": "r1",
        "findings": "No effusion.",
        "impression": "No acute process.",
        "impression_triplets": GOLD_TRIPLETS,
        "candidates": [{"text": "No acute process.", "triplets": GOLD_TRIPLETS}],
    }
    record.update(kwargs)
    return json.dumps(record)


class CorpusLoadTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory(dir=TESTDIR, ignore_cleanup_errors=True)
        self.root = self.tmp.name

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def write(self, *lines: str) -> str:
        path = os.path.join(self.root, "corpus.jsonl")
        with open(path, "w") as stream:
            stream.write("\n".join(lines) + "\n")
        return path

    def assertLoadError(self, line: int, *lines: str) -> CorpusLoadError:
        with self.assertRaises(CorpusLoadError) as cm:
            load_corpus(self.write(*lines))
        self.assertEqual(cm.exception.line, line)
        return cm.exception

    def test_valid(self) -> None:
        (record,) = load_corpus(self.write("", make_line(), ""))
        self.assertEqual(record.id, "r1")
        (candidate,) = record.candidates
        self.assertEqual(candidate.id, "1")
        self.assertEqual(candidate.source_rank, 1)
        self.assertEqual(candidate.true_score, 1.0)
        self.assertIsNone(record.source_triplets)

    def test_candidate_graph(self) -> None:
        candidate = {
            "id": "graph",
            "text": "No acute process.",
            "graph": {
                "nodes": [{"surface": "Acute", "label": "OBS-DA"}, {"surface": "process", "label": "OBS-DA"}],
                "edges": [{"src": 0, "dst": 1, "type": "Suggestive_Of"}],
            },
        }
        (record,) = load_corpus(self.write(make_line(candidates=[candidate])))
        self.assertEqual(record.candidates[0].triplets, record.gold_triplets)

    def test_malformed_json(self) -> None:
        self.assertLoadError(2, make_line(), "{not json")

    def test_unknown_label(self) -> None:
        bad = [{"entity": "acute", "label": "OBS-XX", "flag": "REL"}]
        err = self.assertLoadError(1, make_line(impression_triplets=bad))
        self.assertIn("Unknown entity label 'OBS-XX'", str(err))
        bad = [{"entity": "acute", "label": "OBS-DA", "flag": "rel"}]
        err = self.assertLoadError(1, make_line(impression_triplets=bad))
        self.assertIn("Unknown relation flag 'rel'", str(err))
        graph = {
            "nodes": [{"surface": "lung", "label": "ANAT-DP"}, {"surface": "base", "label": "ANAT-DP"}],
            "edges": [{"src": 1, "dst": 0, "type": "modify"}],
        }
        err = self.assertLoadError(1, make_line(findings_graph=graph))
        self.assertIn("Unknown relation type 'modify'", str(err))

    def test_reserved_surface_in_graph(self) -> None:
        graph = {"nodes": [{"surface": "lung [REL]", "label": "ANAT-DP"}], "edges": []}
        err = self.assertLoadError(1, make_line(findings_graph=graph))
        self.assertIn("reserved token '[REL]'", str(err))

    def test_undecodable_line(self) -> None:
        path = os.path.join(self.root, "binary.jsonl")
        with open(path, "wb") as stream:
            stream.write(make_line(id="a").encode() + b"\n")
            stream.write(b'{"id": "b", "findings": "\xff\xfe"}\n')
        with self.assertRaises(CorpusLoadError) as cm:
            load_corpus(path)
        self.assertEqual(cm.exception.line, 2)
        self.assertIsInstance(cm.exception.__cause__, UnicodeDecodeError)

    def test_edge_out_of_range(self) -> None:
        graph = {
            "nodes": [{"surface": "lung", "label": "ANAT-DP"}],
            "edges": [{"src": 0, "dst": 5, "type": "Modify"}],
        }
        lines = [make_line(id="a"), make_line(id="b"), make_line(id="c", findings_graph=graph)]
        err = self.assertLoadError(3, *lines)
        self.assertIn("5", str(err))

    def test_duplicate_id(self) -> None:
        err = self.assertLoadError(3, make_line(), "", make_line())
        self.assertIn("r1", str(err))

    def test_true_score_mismatch(self) -> None:
        candidates = [{"text": "x", "triplets": GOLD_TRIPLETS, "true_score": 0.5}]
        self.assertLoadError(1, make_line(candidates=candidates))
        candidates = [{"text": "x", "triplets": GOLD_TRIPLETS, "true_score": 1.0}]
        load_corpus(self.write(make_line(candidates=candidates)))

    def test_candidate_needs_one_fact_source(self) -> None:
        self.assertLoadError(1, make_line(candidates=[{"text": "x"}]))
        both = {"text": "x", "triplets": [], "graph": {"nodes": [], "edges": []}}
        self.assertLoadError(1, make_line(candidates=[both]))

    def test_bad_observations(self) -> None:
        self.assertLoadError(1, make_line(gold_observations=[0, 1]))
        self.assertLoadError(1, make_line(gold_observations=[2] * len(OBSERVATIONS)))

    def test_duplicate_candidate_rank_or_id(self) -> None:
        candidates = [{"id": "a", "text": "x", "triplets": []}, {"id": "a", "text": "y", "triplets": []}]
        # Pools are validated when ranked, so loading succeeds.
        (record,) = load_corpus(self.write(make_line(candidates=candidates)))
        self.assertEqual([c.source_rank for c in record.candidates], [1, 2])

    def test_case_folding(self) -> None:
        (record,) = load_corpus(RANKING_EXAMPLE, lowercase=False)
        self.assertIn(
            Triplet("Cardiomediastinal", EntityLabel.ANAT_DP, RelationFlag.NA), record.source_triplets
        )
        (record,) = load_corpus(RANKING_EXAMPLE)
        self.assertIn(
            Triplet("cardiomediastinal", EntityLabel.ANAT_DP, RelationFlag.NA), record.source_triplets
        )

    def test_record_filter(self) -> None:
        path = self.write(
            make_line(id="short", findings="No effusion."),
            make_line(
                id="long", findings="The lungs are clear and there is no pleural effusion or pneumothorax."
            ),
        )
        self.assertEqual([r.id for r in load_corpus(path)], ["short", "long"])
        self.assertEqual([r.id for r in load_corpus(path, record_filter=RecordFilter())], ["long"])
        self.assertEqual(RecordFilter().reject_reason(ExampleRecord(id="x")), "findings have 0 word(s)")

    def test_round_trip(self) -> None:
        records = load_corpus(RANKING_EXAMPLE) + synthesize(SynthConfig(examples=25, seed=3))
        first = os.path.join(self.root, "first.jsonl")
        second = os.path.join(self.root, "second.jsonl")
        save_corpus(records, first)
        self.assertEqual(load_corpus(first), records)
        save_corpus(load_corpus(first), second)
        with open(first, "rb") as a, open(second, "rb") as b:
            self.assertEqual(a.read(), b.read())

    def test_empty_corpus(self) -> None:
        path = os.path.join(self.root, "empty.jsonl")
        save_corpus([], path)
        self.assertEqual(load_corpus(path), [])


class SynthTestCase(unittest.TestCase):
    def test_packaged_config(self) -> None:
        self.assertEqual(SynthConfig.read(SYNTH_CONFIG), SynthConfig())

    def test_config_validation(self) -> None:
        with self.assertRaises(pydantic.ValidationError):
            SynthConfig(entities_per_source=(5, 3))
        with self.assertRaises(pydantic.ValidationError):
            SynthConfig(drop=1.5)
        with self.assertRaises(pydantic.ValidationError):
            SynthConfig(gold_keep_prob={EntityLabel.OBS_DA: -0.1})
        with self.assertRaises(pydantic.ValidationError):
            SynthConfig.model_validate({"candidates": 10})
        config = SynthConfig.model_validate({"gold_keep_prob": {"OBS-DA": 1.0}})
        self.assertEqual(config.gold_keep_prob[EntityLabel.OBS_DA], 1.0)
        self.assertEqual(config.gold_keep_prob[EntityLabel.ANAT_DP], 0.4)

    def test_determinism(self) -> None:
        config = SynthConfig(examples=50, seed=11)
        self.assertEqual(synthesize(config), synthesize(config))
        self.assertNotEqual(synthesize(config), synthesize(config.model_copy(update={"seed": 12})))

    def test_structure(self) -> None:
        records = synthesize(SynthConfig(examples=40, seed=5, candidates_per_example=7))
        self.assertEqual(len({r.id for r in records}), 40)
        self.assertEqual(records[3].id, "synth-5-00003")
        for record in records:
            self.assertEqual(len(record.candidates), 7)
            self.assertEqual([c.source_rank for c in record.candidates], list(range(1, 8)))
            self.assertEqual(len(record.gold_observations), len(OBSERVATIONS))
            # Repeated draws collapse, so only the upper bound is exact.
            self.assertTrue(1 <= len(record.source_triplets) <= 14)
            for candidate in record.candidates:
                expected = radgraph_score(candidate.triplets, record.gold_triplets)
                self.assertEqual(candidate.true_score, expected)
                self.assertEqual(len(candidate.observations), len(OBSERVATIONS))

    def test_no_corruption(self) -> None:
        config = SynthConfig(
            examples=30,
            drop=0.0,
            insert_from_source=0.0,
            flip_label=0.0,
            flip_flag=0.0,
            first_stage_noise=0.0,
        )
        for record in synthesize(config):
            self.assertEqual([c.id for c in record.candidates], [f"c{j:02d}" for j in range(10)])
            for candidate in record.candidates:
                self.assertEqual(candidate.triplets, record.gold_triplets)
                self.assertEqual(candidate.true_score, 1.0)


class TextTestCase(unittest.TestCase):
    def test_render_triplets(self) -> None:
        ts = TripletSet(
            [
                Triplet("effusion", EntityLabel.OBS_DA, RelationFlag.REL),
                Triplet("opacity", EntityLabel.OBS_U, RelationFlag.NA),
                Triplet("base", EntityLabel.ANAT_DP, RelationFlag.NA),
            ]
        )
        self.assertEqual(render_triplets(ts), "No effusion, possible opacity, base.")
        self.assertEqual(render_triplets(TripletSet()), "No reportable findings.")

    def test_observations_from_triplets(self) -> None:
        present = TripletSet([Triplet("effusion", EntityLabel.OBS_U, RelationFlag.REL)])
        vector = observations_from_triplets(present)
        self.assertEqual([OBSERVATIONS[i] for i, v in enumerate(vector) if v], ["Pleural Effusion"])
        absent = TripletSet([Triplet("effusion", EntityLabel.OBS_DA, RelationFlag.REL)])
        vector = observations_from_triplets(absent)
        self.assertEqual([OBSERVATIONS[i] for i, v in enumerate(vector) if v], ["No Finding"])

    def test_corpus_stats(self) -> None:
        record = ExampleRecord(
            id="toy", findings="No acute process. Lungs are clear!", impression="Normal chest."
        )
        stats = corpus_stats([record])
        self.assertEqual(stats.count, 1)
        self.assertEqual(stats.avg_findings_words, 6.0)
        self.assertEqual(stats.avg_findings_sentences, 2.0)
        self.assertEqual(stats.avg_impression_words, 2.0)
        self.assertEqual(stats.avg_impression_sentences, 1.0)
        empty = corpus_stats([])
        self.assertEqual(empty.count, 0)
        self.assertIsNone(empty.avg_findings_words)


if __name__ == "__main__":
    unittest.main()
