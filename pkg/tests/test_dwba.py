"""Tests for grant sizing, prediction, excess sharing and First-Fit placement."""

import unittest

from mfhpon.dwba import (
    CustomerGroup,
    InvalidSla,
    PredictionUnavailable,
    PrematureRollover,
    RateMeter,
    Scheme,
    SchemeConfig,
    SharedGrant,
    SharingMode,
    Sizing,
    SlaProfile,
    compute_w_max,
    cycle_rollover,
    first_fit_assign,
    mos_ipact_batch,
    mos_ipact_lenders,
    predict_request,
    proposed_grant,
    size_grant,
    size_grant_fixed,
    size_grant_gated,
    size_grant_limited,
)
from mfhpon.engine import us_to_ps
from mfhpon.pon import Onu, OnuKind, ReportMsg, WavelengthChannel
from mfhpon.traffic import HorizonExceeded, ScriptedMfhSource, WsiLedger

T_MAX = us_to_ps(250)


class TestSla(unittest.TestCase):
    def test_w_max_from_guaranteed_bandwidth(self):
        self.assertEqual(compute_w_max(8_000_000_000, T_MAX), 250_000)
        self.assertEqual(compute_w_max(4_445_000_000, T_MAX), 138_906)
        self.assertEqual(compute_w_max(64_000_000, T_MAX), 2000)

    def test_invalid_sla(self):
        with self.assertRaises(InvalidSla):
            compute_w_max(0, T_MAX)
        with self.assertRaises(InvalidSla):
            compute_w_max(1_000_000, 0)
        with self.assertRaises(InvalidSla):
            SlaProfile.derive(1, 1, customer_id=0)

    def test_derive(self):
        sla = SlaProfile.derive(4_170_000_000, T_MAX, customer_id=3)
        self.assertEqual(sla.w_max_bytes, 130_312)
        self.assertEqual(sla.customer_id, 3)


class TestSizing(unittest.TestCase):
    def test_policies(self):
        self.assertEqual(size_grant_limited(500, 1000), 500)
        self.assertEqual(size_grant_limited(1500, 1000), 1000)
        self.assertEqual(size_grant_gated(1500), 1500)
        self.assertEqual(size_grant_fixed(1000), 1000)
        self.assertEqual(size_grant(Sizing.FIXED, 0, 1000), 1000)
        self.assertEqual(size_grant(Sizing.GATED, 0, 1000), 0)

    def test_scheme_traits(self):
        proposed = SchemeConfig.for_scheme(Scheme.PROPOSED)
        self.assertTrue(proposed.prediction_enabled)
        self.assertIs(proposed.sharing_mode, SharingMode.ONLINE)
        self.assertIs(SchemeConfig.for_scheme(Scheme.MOS_IPACT).sharing_mode, SharingMode.OFFLINE)
        self.assertFalse(SchemeConfig.for_scheme(Scheme.FIRST_FIT).prediction_enabled)

    def test_proposed_requires_limited_sizing(self):
        with self.assertRaises(ValueError):
            SchemeConfig.for_scheme(Scheme.PROPOSED, Sizing.GATED)
        with self.assertRaises(ValueError):
            SchemeConfig(Scheme.FIRST_FIT, False, SharingMode.ONLINE)


class TestPrediction(unittest.TestCase):
    def setUp(self):
        self.onu = Onu(0, 0, 0.0, OnuKind.MFH, 1_000_000_000, 100_000_000_000)
        self.ledger = WsiLedger()
        self.source = ScriptedMfhSource(0, self.onu.queue, [(1_000_000, 3036), (2_000_000, 1518)], self.ledger)

    def test_adds_bursts_emitted_before_grant_start(self):
        self.source.advance(3_000_000)
        report = ReportMsg(0, 500, gen_time=500_000)
        self.assertEqual(predict_request(report, self.onu, 1_500_000, self.ledger), 500 + 3036)
        self.assertEqual(predict_request(report, self.onu, 2_500_000, self.ledger), 500 + 3036 + 1518)

    def test_counts_bytes_still_crossing_ingress(self):
        """A burst emitted before the report but not fully arrived is still predicted."""
        self.source.advance(3_000_000)
        # 1518 B take 121 440 ps at 100G; at +100 000 ps nothing has fully arrived.
        report = ReportMsg(0, 0, gen_time=1_100_000)
        self.assertEqual(predict_request(report, self.onu, 1_100_000, self.ledger), 3036)
        report = ReportMsg(0, 1518, gen_time=1_200_000)
        self.assertEqual(predict_request(report, self.onu, 1_200_000, self.ledger), 1518 + 1518)

    def test_error_factor(self):
        self.source.advance(3_000_000)
        report = ReportMsg(0, 100, gen_time=500_000)
        self.assertEqual(predict_request(report, self.onu, 1_500_000, self.ledger, epsilon=-1.0), 100)
        self.assertEqual(predict_request(report, self.onu, 1_500_000, self.ledger, epsilon=0.5), 100 + 4554)

    def test_horizon_exceeded_before_bursts_are_drawn(self):
        with self.assertRaises(HorizonExceeded):
            predict_request(ReportMsg(0, 0, 0), self.onu, 10, self.ledger)

    def test_conventional_onu_has_no_prediction(self):
        onu = Onu(1, 1, 0.0, OnuKind.CONVENTIONAL, 1_000_000)
        with self.assertRaises(PredictionUnavailable):
            predict_request(ReportMsg(1, 0, 0), onu, 10, self.ledger)


class TestRateMeter(unittest.TestCase):
    """1 Gbit/s over a 100 us cycle: W_max = 12500 B, one byte of credit every 8000 ps."""

    def setUp(self):
        self.meter = RateMeter.for_sla(1_000_000_000, us_to_ps(100))

    def test_starts_with_one_full_window(self):
        self.assertEqual(self.meter.available(0), 12_500)
        self.assertEqual(self.meter.ready_at(12_500), 0)

    def test_refills_at_the_guaranteed_rate(self):
        self.meter.spend(12_500, 1_000)
        self.assertEqual(self.meter.available(1_000), 0)
        self.assertEqual(self.meter.available(1_000 + 8_000 * 100), 100)
        self.assertEqual(self.meter.ready_at(100), 1_000 + 8_000 * 100)
        self.assertEqual(self.meter.ready_at(12_500), 1_000 + us_to_ps(100))

    def test_credit_never_exceeds_one_window(self):
        self.meter.spend(500, 0)
        self.assertEqual(self.meter.available(us_to_ps(10_000)), 12_500)

    def test_lent_bytes_can_push_the_balance_negative(self):
        self.meter.spend(12_500, 0)
        self.meter.spend(50, 0)
        self.assertEqual(self.meter.available(8_000 * 50), 0)
        self.assertEqual(self.meter.ready_at(1), 8_000 * 51)

    def test_spending_in_the_past_counts_from_the_last_stamp(self):
        self.meter.spend(12_500, 80_000)
        self.meter.spend(0, 0)
        self.assertEqual(self.meter.stamp, 80_000)
        self.assertEqual(self.meter.available(88_000), 1)

    def test_invalid_rate(self):
        with self.assertRaises(InvalidSla):
            RateMeter.for_sla(0, us_to_ps(100))


class TestProposedSharing(unittest.TestCase):
    def setUp(self):
        self.group = CustomerGroup(0, frozenset({1, 2, 3}))

    def test_underloaded_banks_slack(self):
        shared = proposed_grant(400, 1, 1000, self.group)
        self.assertEqual(shared, SharedGrant(400, 400, banked_bytes=600))
        self.assertEqual(self.group.excess_curr, 600)

    def test_banked_slack_limited_by_available_credit(self):
        shared = proposed_grant(400, 1, 1000, self.group, available_bytes=700)
        self.assertEqual(shared.banked_bytes, 300)
        self.assertEqual(proposed_grant(400, 2, 1000, self.group, available_bytes=100).banked_bytes, 0)
        self.assertEqual(self.group.excess_curr, 300)

    def test_overloaded_draws_prev_before_curr(self):
        self.group.excess_prev = 100
        self.group.excess_curr = 300
        shared = proposed_grant(1250, 1, 1000, self.group)
        self.assertEqual(shared, SharedGrant(1250, 1000, from_prev=100, from_curr=150))
        self.assertEqual((self.group.excess_prev, self.group.excess_curr), (0, 150))

    def test_overloaded_capped_by_pools(self):
        self.group.excess_curr = 100
        shared = proposed_grant(5000, 2, 1000, self.group)
        self.assertEqual((shared.grant_bytes, shared.own_bytes), (1100, 1000))
        self.assertEqual(self.group.excess_curr, 0)

    def test_repeat_service_banks_nothing_and_shares_one_window(self):
        proposed_grant(300, 1, 1000, self.group)
        self.assertEqual(self.group.excess_curr, 700)
        # the first service already used the whole window as grant plus bank
        shared = proposed_grant(200, 1, 1000, self.group)
        self.assertEqual(shared, SharedGrant(200, 0, from_curr=200))
        self.assertEqual(self.group.excess_curr, 500)
        self.assertEqual(self.group.cycle_used[1], 1000)

    def test_repeat_service_uses_the_rest_of_the_window(self):
        proposed_grant(600, 2, 1000, self.group, available_bytes=600)
        shared = proposed_grant(300, 2, 1000, self.group)
        self.assertEqual(shared, SharedGrant(300, 300))
        self.assertEqual(self.group.cycle_used[2], 900)

    def test_cycle_window_counts_each_member_once(self):
        self.group = CustomerGroup(0, frozenset({1, 2}))
        proposed_grant(100, 1, 1000, self.group)
        proposed_grant(100, 1, 1000, self.group)
        proposed_grant(100, 1, 1000, self.group)
        proposed_grant(2000, 2, 1500, self.group)
        self.assertEqual(self.group.cycle_w_max, 2500)
        cycle_rollover(self.group)
        record = self.group.history[-1]
        self.assertEqual((record.granted_bytes, record.w_max_bytes), (300 + 2000, 2500))
        self.assertLessEqual(record.granted_bytes, record.w_max_bytes + record.excess_prev_at_start)

    def test_rollover_keeps_current_and_drops_previous(self):
        self.group.excess_prev = 999
        self.group.prev_at_start = 999
        proposed_grant(200, 1, 1000, self.group)
        proposed_grant(1000, 2, 1000, self.group)
        proposed_grant(1500, 3, 1000, self.group)
        self.assertTrue(self.group.at_boundary())
        cycle_rollover(self.group)
        self.assertEqual(self.group.excess_prev, 800)
        self.assertEqual(self.group.excess_curr, 0)
        self.assertEqual(self.group.cycle_index, 1)
        self.assertEqual(self.group.cycle_used, {})
        record = self.group.history[-1]
        self.assertEqual((record.granted_bytes, record.w_max_bytes, record.excess_prev_at_start), (2700, 3000, 999))

    def test_premature_rollover(self):
        proposed_grant(10, 1, 1000, self.group)
        with self.assertRaises(PrematureRollover):
            cycle_rollover(self.group)

    def test_pinned_pool_reduces_to_limited(self):
        group = CustomerGroup(0, frozenset({1, 2}), pinned=True)
        self.assertEqual(proposed_grant(10, 1, 1000, group).grant_bytes, 10)
        self.assertEqual(proposed_grant(5000, 2, 1000, group).grant_bytes, size_grant_limited(5000, 1000))
        self.assertEqual(proposed_grant(5000, 2, 1000, group).grant_bytes, 1000)
        self.assertEqual((group.excess_prev, group.excess_curr), (0, 0))
        self.assertFalse(group.served_this_cycle)

    def test_non_member_rejected(self):
        with self.assertRaises(ValueError):
            proposed_grant(10, 9, 1000, self.group)


class TestMosIpactBatch(unittest.TestCase):
    def test_pool_shared_in_ascending_id_order(self):
        grants = mos_ipact_batch({3: 1800, 1: 1500, 2: 200}, dict.fromkeys((1, 2, 3), 1000))
        self.assertEqual(grants, {1: 1500, 2: 200, 3: 1300})

    def test_no_overload_grants_requests(self):
        self.assertEqual(mos_ipact_batch({1: 10, 2: 20}, {1: 100, 2: 100}), {1: 10, 2: 20})

    def test_lenders_debited_in_ascending_id_order(self):
        requests = {1: 1500, 2: 200, 4: 900, 3: 1800}
        caps = {1: 1000, 2: 1000, 3: 1000, 4: 1000}
        self.assertEqual(mos_ipact_lenders({2: 200, 4: 900}, caps, 850), {2: 800, 4: 50})
        self.assertEqual(mos_ipact_lenders(requests, caps, 0), {})
        self.assertEqual(mos_ipact_lenders({2: 200}, caps, 5000), {2: 800})


class TestFirstFit(unittest.TestCase):
    def setUp(self):
        self.channels = [WavelengthChannel(0, 25_000_000_000, 1000), WavelengthChannel(1, 25_000_000_000, 1000)]

    def test_earliest_channel_wins_and_ties_go_low(self):
        onu = Onu(0, 0, 0.0, OnuKind.CONVENTIONAL, 1)
        self.assertEqual(first_fit_assign(self.channels, 100, onu, 0), (0, 0))
        self.assertEqual(first_fit_assign(self.channels, 100, onu, 0), (1, 0))
        self.channels[0].horizon = 50_000
        self.channels[1].horizon = 60_000
        self.assertEqual(first_fit_assign(self.channels, 0, onu, 0), (0, 50_000))

    def test_reservation_includes_report(self):
        onu = Onu(0, 0, 0.0, OnuKind.CONVENTIONAL, 1)
        first_fit_assign(self.channels[:1], 100, onu, 0)
        self.assertEqual(self.channels[0].horizon, (100 + 64) * 320 + 1000)

    def test_start_is_onu_side_instant(self):
        onu = Onu(0, 0, 1000.0, OnuKind.CONVENTIONAL, 1)
        wavelength, start = first_fit_assign(self.channels, 0, onu, 2_000_000)
        self.assertEqual((wavelength, start), (0, 2_000_000))
        self.channels[0].horizon = 10_000_000
        self.channels[1].horizon = 10_000_000
        _, start = first_fit_assign(self.channels, 0, onu, 0)
        self.assertEqual(start, 10_000_000 - 5_000_000)


if __name__ == "__main__":
    unittest.main()
