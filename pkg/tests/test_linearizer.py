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

import string
import unittest

from hypothesis import given, settings
from hypothesis import strategies as st

from radfact.rerank.factmodel import EntityLabel, RelationFlag, Triplet, TripletSet
from radfact.rerank.linearizer import ParseMode, RejectReason, linearize, parse

P = EntityLabel.OBS_DP
A = EntityLabel.ANAT_DP
D = EntityLabel.OBS_DA
REL = RelationFlag.REL
NA = RelationFlag.NA

GOLD_SEQUENCE = (
    "<s>acute [OBS-DA] [REL] [ENT] cardiopulmonary [ANAT-DP] [NA] [ENT] process [OBS-DA] [REL]</s>"
)

GENERATED_SEQUENCE = (
    "<s>Hazy [OBS-DP] [REL] [ENT] opacity [OBS-DP] [REL] [ENT] right [ANAT-DP] [REL] [ENT] "
    "lung [ANAT-DP] [NA] [ENT] aspiration [OBS-U] [NA] [ENT] pleural [ANAT-DP] [NA] [ENT] "
    "effusion [OBS-U] [REL] [ENT] hemorrhage [OBS-U] [NA] [ENT] Mild [OBS-DP] [REL] [ENT] "
    "pulmonary [ANAT-DP] [NA] [ENT] edema [OBS-DP] [REL]</s>"
)

words = st.text(alphabet=string.ascii_lowercase + string.digits + "-'", min_size=1, max_size=8)
phrases = st.lists(words, min_size=1, max_size=3).map(" ".join)


def triplet_sets(entities: st.SearchStrategy[str]) -> st.SearchStrategy[TripletSet]:
    triplets = st.builds(Triplet, entities, st.sampled_from(EntityLabel), st.sampled_from(RelationFlag))
    return st.lists(triplets, max_size=12).map(TripletSet)


class LinearizeTestCase(unittest.TestCase):
    def test_gold_sequence(self) -> None:
        gold = TripletSet(
            [Triplet("acute", D, REL), Triplet("cardiopulmonary", A, NA), Triplet("process", D, REL)]
        )
        self.assertEqual(linearize(gold), GOLD_SEQUENCE)

    def test_empty(self) -> None:
        self.assertEqual(linearize(TripletSet()), "<s></s>")

    def test_order_follows_first_appearance(self) -> None:
        ts = TripletSet([Triplet("b", P, NA), Triplet("a", A, REL)])
        self.assertEqual(linearize(ts), "<s>b [OBS-DP] [NA] [ENT] a [ANAT-DP] [REL]</s>")


class ParseTestCase(unittest.TestCase):
    def test_gold_sequence(self) -> None:
        report = parse(GOLD_SEQUENCE)
        self.assertEqual(linearize(report.accepted), GOLD_SEQUENCE)
        self.assertEqual(report.segment_count, 3)
        self.assertEqual(report.n_rejected, 0)

    def test_generated_sequence(self) -> None:
        report = parse(GENERATED_SEQUENCE)
        self.assertEqual(len(report.accepted), 11)
        self.assertIn(Triplet("hazy", P, REL), report.accepted)
        self.assertIn(Triplet("mild", P, REL), report.accepted)
        # Without case folding the printed sequence is reproduced exactly.
        self.assertEqual(linearize(parse(GENERATED_SEQUENCE, lowercase=False).accepted), GENERATED_SEQUENCE)

    def test_corrupted_sequences(self) -> None:
        report = parse("<s>[ [ [REL]</s>")
        self.assertEqual(report.accepted, TripletSet())
        self.assertEqual(report.segment_count, 1)
        self.assertEqual(report.n_accepted_segments, 0)
        self.assertEqual(report.n_rejected, 1)
        self.assertEqual(report.rejected[0].reason, RejectReason.BAD_LABEL_TOKEN)
        report = parse("<s></s>")
        self.assertEqual(report.accepted, TripletSet())
        self.assertEqual(report.segment_count, 0)

    def test_multi_word_entity(self) -> None:
        sequence = "<s>in place [OBS-DP] [REL]</s>"
        strict = parse(sequence, ParseMode.STRICT)
        self.assertEqual(strict.accepted, TripletSet())
        self.assertEqual([r.reason for r in strict.rejected], [RejectReason.BAD_ARITY])
        lenient = parse(sequence, ParseMode.LENIENT)
        self.assertEqual(lenient.accepted, TripletSet([Triplet("in place", P, REL)]))

    def test_reject_reasons(self) -> None:
        cases = {
            "[OBS-DP] [REL]": RejectReason.EMPTY_ENTITY,
            "opacity [OBS-DP]": RejectReason.BAD_ARITY,
            "[REL] [OBS-DP] [REL]": RejectReason.BAD_ARITY,
            "<S> [OBS-DP] [REL]": RejectReason.BAD_ARITY,
            "opacity [OBS-XX] [REL]": RejectReason.BAD_LABEL_TOKEN,
            "opacity [OBS-DP] [YES]": RejectReason.BAD_FLAG_TOKEN,
            "opacity [REL] [OBS-DP]": RejectReason.BAD_LABEL_TOKEN,
        }
        for mode in ParseMode:
            for segment, reason in cases.items():
                with self.subTest(segment=segment, mode=mode):
                    report = parse(f"<s>{segment}</s>", mode)
                    self.assertEqual(report.accepted, TripletSet())
                    self.assertEqual([r.reason for r in report.rejected], [reason])

    def test_partial_corruption(self) -> None:
        report = parse("<s>acute [OBS-DA] [REL] [ENT] [ [ [ENT] process [OBS-DA] [REL] [ENT]</s>")
        self.assertEqual(report.accepted, TripletSet([Triplet("acute", D, REL), Triplet("process", D, REL)]))
        self.assertEqual(report.segment_count, 4)
        self.assertEqual(report.n_rejected, 2)

    def test_duplicates_and_missing_markers(self) -> None:
        report = parse("acute [OBS-DA] [REL] [ENT] Acute [OBS-DA] [REL]")
        self.assertEqual(report.accepted, TripletSet([Triplet("acute", D, REL)]))
        self.assertEqual(report.segment_count, 2)
        self.assertEqual(report.n_rejected, 0)

    @settings(max_examples=1000, deadline=None)
    @given(triplet_sets(words))
    def test_strict_round_trip(self, ts: TripletSet) -> None:
        report = parse(linearize(ts), ParseMode.STRICT)
        self.assertEqual(report.accepted, ts)
        self.assertEqual(report.accepted.ordered, ts.ordered)
        self.assertEqual(report.n_rejected, 0)

    @settings(max_examples=1000, deadline=None)
    @given(triplet_sets(phrases))
    def test_lenient_round_trip(self, ts: TripletSet) -> None:
        self.assertEqual(parse(linearize(ts), ParseMode.LENIENT).accepted, ts)

    @settings(max_examples=300, deadline=None)
    @given(triplet_sets(phrases))
    def test_one_separator_between_triplets(self, ts: TripletSet) -> None:
        self.assertEqual(linearize(ts).count("[ENT]"), max(len(ts) - 1, 0))

    @settings(max_examples=300, deadline=None)
    @given(st.text(), st.sampled_from(ParseMode))
    def test_parse_is_total(self, sequence: str, mode: ParseMode) -> None:
        report = parse(sequence, mode)
        self.assertEqual(report.n_accepted_segments + report.n_rejected, report.segment_count)
        self.assertLessEqual(len(report.accepted), report.n_accepted_segments)


if __name__ == "__main__":
    unittest.main()
