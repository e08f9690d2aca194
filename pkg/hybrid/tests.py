"""
Tests for hybrid app
"""

from collections import Counter

from django.test import SimpleTestCase

from Hybridsim.exceptions import AccountingError, ConfigError, ProtocolError
from radio.services import RatKind
from .services import (
    AckRecord,
    CommMode,
    HybridConfig,
    Message,
    ReceptionVector,
    complete_reports,
    duplicate_percentage,
    duplicated_message_stats,
    finalize_round,
    mode_for_segments,
    prr_game,
    reception_report,
    record_ack,
    transmit,
)

G5 = RatKind.ITS_G5
LTE = RatKind.LTE_V2X_PC5


def make_message(mode, id=0):
    return Message.create(id=id, sender=0, sequence=id, mode=mode, send_time=0.0)


class TransmitTestCase(SimpleTestCase):
    """Test message fan-out"""

    def test_redundant(self):
        """Redundant sends the full message on both RATs"""
        transmissions = transmit(make_message(CommMode.HYBRID_REDUNDANT))
        self.assertEqual([t.rat for t in transmissions], [G5, LTE])
        self.assertEqual([t.payload_fraction for t in transmissions], [1.0, 1.0])

    def test_single_g5(self):
        """Single ITS-G5 sends once on ITS-G5"""
        transmissions = transmit(make_message(CommMode.SINGLE_ITS_G5))
        self.assertEqual(len(transmissions), 1)
        self.assertEqual(transmissions[0].rat, G5)

    def test_division(self):
        """Division splits the payload in halves"""
        transmissions = transmit(make_message(CommMode.HYBRID_DIVISION))
        self.assertEqual([t.payload_fraction for t in transmissions], [0.5, 0.5])
        self.assertEqual(transmissions[0].payload_bytes, 150)

    def test_inconsistent_segments(self):
        """Segments that do not match the mode are refused"""
        bad = Message(id=1, sender=0, sequence=0, mode=CommMode.SINGLE_LTE, send_time=0.0,
                      segments=((G5, 1.0),))
        with self.assertRaises(ProtocolError):
            transmit(bad)

    def test_unknown_segment_list(self):
        """A segment list of no mode raises"""
        with self.assertRaises(ProtocolError):
            mode_for_segments(((G5, 0.5),))


class ReceptionReportTestCase(SimpleTestCase):
    """Test per-neighbor reports"""

    def test_redundant_both(self):
        """Two copies report 2"""
        self.assertEqual(reception_report(CommMode.HYBRID_REDUNDANT, [True, True]), 2)

    def test_redundant_one(self):
        """One copy reports 1"""
        self.assertEqual(reception_report(CommMode.HYBRID_REDUNDANT, [True, False]), 1)

    def test_division_incomplete(self):
        """Half a message reports 0"""
        self.assertEqual(reception_report(CommMode.HYBRID_DIVISION, [True, False]), 0)
        self.assertEqual(reception_report(CommMode.HYBRID_DIVISION, [True, True]), 1)

    def test_single(self):
        """Single modes report delivery"""
        self.assertEqual(reception_report(CommMode.SINGLE_LTE, [True]), 1)
        self.assertEqual(reception_report(CommMode.SINGLE_ITS_G5, [False]), 0)

    def test_wrong_arity(self):
        """Outcome count must match the segments"""
        with self.assertRaises(ProtocolError):
            reception_report(CommMode.SINGLE_LTE, [True, True])


class AckTestCase(SimpleTestCase):
    """Test acknowledgment bookkeeping"""

    def test_first_ack(self):
        """One ack fills one report"""
        vec = record_ack(ReceptionVector(), AckRecord(7, 0, 1, 5.0, frozenset({G5})), CommMode.SINGLE_ITS_G5)
        self.assertEqual(vec.reports, {7: 1})

    def test_missing_neighbor(self):
        """A silent neighbor reports 0"""
        vec = record_ack(ReceptionVector(), AckRecord(1, 0, 1, 5.0, frozenset({G5})), CommMode.SINGLE_ITS_G5)
        self.assertEqual(complete_reports(vec, [1, 2]), {1: 1, 2: 0})

    def test_idempotent(self):
        """Repeated acks from one receiver keep one entry with the highest count"""
        vec = ReceptionVector()
        record_ack(vec, AckRecord(3, 0, 1, 2.0, frozenset({G5})), CommMode.HYBRID_REDUNDANT)
        record_ack(vec, AckRecord(3, 0, 2, 10.0, frozenset({G5, LTE})), CommMode.HYBRID_REDUNDANT)
        record_ack(vec, AckRecord(3, 0, 2, 10.0, frozenset({G5, LTE})), CommMode.HYBRID_REDUNDANT)
        self.assertEqual(vec.reports, {3: 2})
        self.assertEqual(vec.acks[3].first_copy_latency_ms, 2.0)

    def test_ack_validation(self):
        """Acks need a copy and a latency below 100 ms"""
        with self.assertRaises(ProtocolError):
            AckRecord(1, 0, 0, 5.0)
        with self.assertRaises(ProtocolError):
            AckRecord(1, 0, 1, 100.0)

    def test_ack_latency_budget(self):
        """The ack leg must stay under 1 ms"""
        with self.assertRaises(ConfigError):
            HybridConfig(ack_latency_ms=1.0).validate()


class FinalizeRoundTestCase(SimpleTestCase):
    """Test SR counting"""

    def _vector(self, copies):
        vec = ReceptionVector()
        for receiver, n in copies.items():
            rats = frozenset([G5, LTE][:n])
            record_ack(vec, AckRecord(receiver, 0, n, 5.0, rats), CommMode.HYBRID_REDUNDANT)
        return vec

    def test_perfect_round(self):
        """All reports equal one increments SR"""
        vec, perfect = finalize_round(self._vector({1: 1, 2: 1, 3: 1, 4: 1}), [1, 2, 3, 4])
        self.assertTrue(perfect)
        self.assertEqual(vec.sr_counter, 1)
        self.assertEqual(vec.reports, {})

    def test_duplicate_breaks_round(self):
        """A doubly received message is not a perfect reception"""
        vec, perfect = finalize_round(self._vector({1: 2, 2: 1, 3: 1, 4: 1}), [1, 2, 3, 4])
        self.assertFalse(perfect)
        self.assertEqual(vec.sr_counter, 0)

    def test_no_neighbors(self):
        """An empty neighborhood is vacuously perfect"""
        vec, perfect = finalize_round(ReceptionVector(), [])
        self.assertTrue(perfect)
        self.assertEqual(vec.sr_counter, 1)


class AccountingTestCase(SimpleTestCase):
    """Test PRR and duplication statistics"""

    def test_prr_game(self):
        """PRR is SR target over messages sent"""
        self.assertEqual(prr_game(100, 100), 1.0)
        self.assertEqual(prr_game(100, 125), 0.8)

    def test_prr_preconditions(self):
        """Fewer messages than the target is impossible"""
        with self.assertRaises(AccountingError):
            prr_game(100, 99)
        with self.assertRaises(AccountingError):
            prr_game(0, 10)

    def test_single_mode_no_duplicates(self):
        """Single-copy acks never count as duplicated"""
        acks = [AckRecord(r, m, 1, 3.0) for r in range(4) for m in range(10)]
        self.assertEqual(duplicated_message_stats(acks), 0.0)

    def test_reported_share(self):
        """7119 double receptions out of 10718 is 66.4 %"""
        self.assertAlmostEqual(duplicate_percentage(Counter({2: 7119, 1: 10718 - 7119})), 66.42, places=2)

    def test_all_duplicated(self):
        """Every message received twice is 100 %"""
        acks = [AckRecord(r, m, 2, 3.0) for r in range(4) for m in range(10)]
        self.assertEqual(duplicated_message_stats(acks), 100.0)

    def test_duplicate_merge(self):
        """Acks of one reception are merged before counting"""
        acks = [AckRecord(1, 0, 1, 3.0), AckRecord(1, 0, 2, 9.0), AckRecord(2, 0, 1, 3.0)]
        self.assertEqual(duplicated_message_stats(acks), 50.0)
