"""Tests for the seeded traffic sources and the WSI ledger."""

import unittest

import numpy as np

from mfhpon.engine import us_to_ps
from mfhpon.pon import OnuQueue
from mfhpon.traffic import (
    MEAN_FRAME_BYTES,
    UNBOUNDED,
    ConventionalSource,
    HorizonExceeded,
    MfhSource,
    MfhSourceConfig,
    ScenarioLoadTable,
    ScriptedMfhSource,
    WsiLedger,
    byte_rate,
    conventional_arrivals,
    make_rng,
    mfh_burst_bytes,
    serialize_burst,
)


class TestMfhBursts(unittest.TestCase):
    def test_mean_burst_size(self):
        config = MfhSourceConfig(4_170_000_000, us_to_ps(250))
        self.assertAlmostEqual(config.mean_burst_bytes, 130_312.5)

    def test_zero_load_gives_empty_bursts(self):
        self.assertEqual(mfh_burst_bytes(make_rng(1, 0), 0.0, us_to_ps(250)), 0)

    def test_load_must_fit_ingress(self):
        with self.assertRaises(ValueError):
            MfhSourceConfig(200e9)

    def test_serialize_burst(self):
        self.assertEqual(serialize_burst(3000).tolist(), [1518, 1482])
        self.assertEqual(serialize_burst(1518 + 10).tolist(), [1518, 64])
        self.assertEqual(serialize_burst(0).tolist(), [])

    def test_source_feeds_queue_and_ledger(self):
        queue = OnuQueue()
        ledger = WsiLedger()
        source = MfhSource(0, queue, MfhSourceConfig(4_000_000_000), make_rng(7, 0), ledger)
        source.advance(us_to_ps(1000))
        self.assertEqual(source.bursts_drawn, 5)
        self.assertEqual(ledger.horizon(0), us_to_ps(1250))
        self.assertEqual(ledger.emitted_bytes(0, -1, us_to_ps(1000)), queue.enqueued_bytes)

    def test_lookup_beyond_horizon_and_extend(self):
        queue = OnuQueue()
        ledger = WsiLedger()
        MfhSource(0, queue, MfhSourceConfig(4_000_000_000), make_rng(7, 0), ledger)
        with self.assertRaises(HorizonExceeded):
            ledger.wsi_lookup(0, 0, us_to_ps(600))
        ledger.extend(0, us_to_ps(600))
        self.assertEqual(ledger.horizon(0), us_to_ps(750))
        self.assertGreater(ledger.wsi_lookup(0, 0, us_to_ps(600)), 0)

    def test_calibration_over_thirty_seconds(self):
        """Empirical MFH byte rate within 1% of the configured mean."""
        rng = make_rng(11, 0)
        period = us_to_ps(250)
        n = 120_000
        total = sum(mfh_burst_bytes(rng, 4_170_000_000, period) for _ in range(n))
        rate = total * 8 / (n * 250e-6)
        self.assertLess(abs(rate / 4_170_000_000 - 1), 0.01)


class TestConventional(unittest.TestCase):
    def test_mean_frame_size(self):
        self.assertAlmostEqual(MEAN_FRAME_BYTES, 788.42)

    def test_arrivals_sorted_and_sized(self):
        arrivals, sizes = conventional_arrivals(make_rng(3, 9), 500_000_000, us_to_ps(10_000))
        self.assertTrue(np.all(np.diff(arrivals) >= 1))
        self.assertTrue(set(np.unique(sizes).tolist()) <= {64, 594, 1518})
        self.assertTrue(np.all(arrivals <= us_to_ps(10_000)))

    def test_calibration_over_thirty_seconds(self):
        duration = 30 * 10**12
        arrivals, sizes = conventional_arrivals(make_rng(5, 12), 100_000_000, duration)
        self.assertLess(abs(byte_rate(sizes, duration) / 100_000_000 - 1), 0.01)

    def test_advance_is_lazy_and_covers_until(self):
        queue = OnuQueue()
        source = ConventionalSource(6, queue, 1_000_000_000, make_rng(1, 6), chunk=16)
        source.advance(us_to_ps(100))
        self.assertGreaterEqual(queue.last_arrival, us_to_ps(100))
        drawn = source.frames_drawn
        source.advance(us_to_ps(50))
        self.assertEqual(source.frames_drawn, drawn)

    def test_zero_load_never_draws(self):
        queue = OnuQueue()
        ConventionalSource(6, queue, 0.0, make_rng(1, 6)).advance(10**12)
        self.assertEqual(len(queue), 0)


class TestSeeding(unittest.TestCase):
    def test_same_seed_same_stream(self):
        a = make_rng(42, 3).poisson(1000, 10)
        b = make_rng(42, 3).poisson(1000, 10)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent(self):
        a = make_rng(42, 3).poisson(1000, 10)
        b = make_rng(42, 4).poisson(1000, 10)
        self.assertFalse(np.array_equal(a, b))


class TestScenarioLoads(unittest.TestCase):
    def test_tidal_scenarios(self):
        table = ScenarioLoadTable()
        loads_24h = table.mean_loads("24h")
        self.assertEqual(loads_24h[:3], (4_170_000_000, 4_445_000_000, 3_927_000_000))
        self.assertAlmostEqual(loads_24h[3], 4_287_000_000 * 0.081)
        loads_18h = table.mean_loads("18h")
        self.assertAlmostEqual(loads_18h[0], 4_170_000_000 * 0.381)
        self.assertEqual(table.peak_mask("18h"), (False, False, False, True, True, True))

    def test_unknown_scenario(self):
        with self.assertRaises(KeyError):
            ScenarioLoadTable().mean_loads("12h")


class TestScriptedLedger(unittest.TestCase):
    def test_horizon_becomes_unbounded_after_last_burst(self):
        ledger = WsiLedger()
        source = ScriptedMfhSource(0, OnuQueue(), [(100, 64), (200, 64)], ledger)
        source.advance(100)
        self.assertEqual(ledger.horizon(0), 200)
        source.advance(200)
        self.assertEqual(ledger.horizon(0), UNBOUNDED)
        self.assertEqual(ledger.wsi_lookup(0, 0, 10**9), 128)
        self.assertEqual(ledger.wsi_lookup(0, 100, 200), 64)

    def test_record_rejects_non_increasing_times(self):
        ledger = WsiLedger()
        ScriptedMfhSource(0, OnuQueue(), [], ledger)
        ledger.record(0, 10, 64)
        with self.assertRaises(ValueError):
            ledger.record(0, 10, 64)


if __name__ == "__main__":
    unittest.main()
