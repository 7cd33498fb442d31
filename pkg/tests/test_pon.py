"""Tests for channels, ONU queues, reports and grant execution."""

import unittest

import numpy as np

from mfhpon.pon import (
    REPORT_BYTES,
    Frame,
    GateMsg,
    Onu,
    OnuKind,
    OnuQueue,
    OverlapDetected,
    WavelengthChannel,
    enqueue_frame,
    execute_grant,
    generate_report,
    propagation_ps,
)

LINE_RATE = 25_000_000_000
BYTE_PS = 320


def make_onu(onu_id=0, distance_m=0.0, kind=OnuKind.CONVENTIONAL):
    return Onu(onu_id, onu_id, distance_m, kind, 100_000_000)


class TestWavelengthChannel(unittest.TestCase):
    def test_reserve_moves_horizon_past_guard(self):
        channel = WavelengthChannel(0, LINE_RATE, guard_ps=624_000)
        end = channel.reserve(1000, 100)
        self.assertEqual(end, 1000 + 100 * BYTE_PS)
        self.assertEqual(channel.horizon, end + 624_000)

    def test_reserve_before_horizon_raises(self):
        channel = WavelengthChannel(0, LINE_RATE, guard_ps=1000)
        channel.reserve(0, 10)
        with self.assertRaises(OverlapDetected):
            channel.reserve(channel.horizon - 1, 10)

    def test_propagation(self):
        self.assertEqual(propagation_ps(1000), 5_000_000)
        self.assertEqual(propagation_ps(0), 0)


class TestFrame(unittest.TestCase):
    def test_size_bounds(self):
        Frame(64, 0, 0)
        Frame(1518, 0, 0)
        with self.assertRaises(ValueError):
            Frame(63, 0, 0)
        with self.assertRaises(ValueError):
            Frame(1519, 0, 0)


class TestOnuQueue(unittest.TestCase):
    def test_future_frames_are_invisible(self):
        queue = OnuQueue()
        queue.append(100, 500)
        queue.append(300, 64)
        self.assertEqual(queue.backlog_at(99), 0)
        self.assertEqual(queue.backlog_at(100), 500)
        self.assertEqual(queue.backlog_at(1000), 564)
        self.assertEqual(queue.future_bytes(100), 64)
        self.assertEqual(len(queue), 2)

    def test_out_of_order_append_rejected(self):
        queue = OnuQueue()
        queue.append(100, 64)
        with self.assertRaises(ValueError):
            queue.append(50, 64)

    def test_drain_stops_at_first_frame_that_does_not_fit(self):
        """FIFO: a small later frame does not jump a large one that misses the window."""
        queue = OnuQueue()
        queue.extend(np.array([0, 0, 0]), np.array([1000, 1518, 64]))
        arrivals, sizes, ends = queue.drain(0, 2000, BYTE_PS)
        self.assertEqual(sizes.tolist(), [1000])
        self.assertEqual(ends.tolist(), [1000 * BYTE_PS])
        self.assertEqual(queue.backlog_at(0), 1582)

    def test_drain_waits_for_mid_window_arrivals(self):
        queue = OnuQueue()
        queue.extend(np.array([0, 500_000]), np.array([100, 100]))
        _, sizes, ends = queue.drain(0, 2000, BYTE_PS)
        self.assertEqual(sizes.tolist(), [100, 100])
        self.assertEqual(ends.tolist(), [32_000, 532_000])

    def test_drain_ignores_frames_arriving_after_window(self):
        queue = OnuQueue()
        queue.extend(np.array([10**9]), np.array([64]))
        _, sizes, _ = queue.drain(0, 10_000, BYTE_PS)
        self.assertEqual(len(sizes), 0)
        self.assertEqual(queue.drained_bytes, 0)

    def test_zero_length_window_sends_nothing(self):
        queue = OnuQueue()
        queue.append(0, 64)
        _, sizes, _ = queue.drain(0, 0, BYTE_PS)
        self.assertEqual(len(sizes), 0)

    def test_byte_accounting(self):
        queue = OnuQueue()
        queue.extend(np.array([0, 1, 2]), np.array([64, 64, 64]))
        queue.drain(0, 128, BYTE_PS)
        self.assertEqual(queue.enqueued_bytes, 192)
        self.assertEqual(queue.drained_bytes, 128)
        self.assertEqual(len(queue.frames()), 1)

    def test_long_backlog_matches_frame_by_frame_drain(self):
        """Many small appends and drains across buffer growth keep FIFO timing exact."""
        rng = np.random.default_rng(7)
        queue = OnuQueue()
        model = []
        clock = 0
        for step in range(600):
            n = int(rng.integers(1, 6))
            arrivals = clock + np.cumsum(rng.integers(0, 50_000, n))
            sizes = rng.integers(64, 1519, n)
            queue.extend(arrivals, sizes)
            model.extend(zip(arrivals.tolist(), sizes.tolist()))
            clock = int(arrivals[-1])
            if step % 3:
                continue
            start = clock - int(rng.integers(0, 200_000))
            length = int(rng.integers(0, 6000))
            limit = start + length * BYTE_PS
            expected, cursor = [], start
            for arrival, size in model:
                end = max(cursor, arrival) + size * BYTE_PS
                if arrival >= limit or end > limit:
                    break
                expected.append((arrival, size, end))
                cursor = end
            del model[: len(expected)]
            sent_a, sent_s, ends = queue.drain(start, length, BYTE_PS)
            self.assertEqual(list(zip(sent_a.tolist(), sent_s.tolist(), ends.tolist())), expected)
            self.assertEqual(len(queue), len(model))
            self.assertEqual(queue.backlog_at(start), sum(s for a, s in model if a <= start))
        self.assertEqual(queue.enqueued_bytes - queue.drained_bytes, sum(s for _, s in model))
        self.assertEqual(queue.future_bytes(0), sum(s for a, s in model if a > 0))


class TestGrantExecution(unittest.TestCase):
    def setUp(self):
        self.channel = WavelengthChannel(0, LINE_RATE, guard_ps=1000, record_bursts=True)

    def test_enqueue_and_report(self):
        onu = make_onu()
        enqueue_frame(onu, Frame(64, 0, 0))
        enqueue_frame(onu, Frame(1518, 10, 0))
        report = generate_report(onu, 5)
        self.assertEqual((report.queue_bytes, report.gen_time), (64, 5))
        self.assertEqual(generate_report(onu, 10).queue_bytes, 1582)

    def test_limited_window_with_report(self):
        """Five 1518 B frames, 4000 B window: two fit, report follows the last one."""
        onu = make_onu(distance_m=1000)
        onu.queue.extend(np.zeros(5, dtype=np.int64), np.full(5, 1518, dtype=np.int64))
        gate = GateMsg(0, 0, 0, 4000)
        onu.pending_grant = gate
        burst = execute_grant(onu, gate, self.channel)
        self.assertEqual(burst.payload_bytes, 3036)
        self.assertEqual(burst.wasted_bytes, 964)
        self.assertEqual(burst.report.gen_time, 3036 * BYTE_PS)
        self.assertEqual(burst.report.queue_bytes, 3 * 1518)
        self.assertEqual(burst.completions.tolist(), [1518 * BYTE_PS + 5_000_000, 3036 * BYTE_PS + 5_000_000])
        self.assertEqual(burst.report_arrival, (3036 + REPORT_BYTES) * BYTE_PS + 5_000_000)
        self.assertEqual(self.channel.busy_ps, (4000 + REPORT_BYTES) * BYTE_PS)
        self.assertEqual(self.channel.bursts, [(5_000_000, 5_000_000 + 4064 * BYTE_PS, 0)])
        self.assertIsNone(onu.pending_grant)

    def test_empty_grant_is_a_pure_report(self):
        onu = make_onu()
        gate = GateMsg(0, 0, 1000, 0)
        onu.pending_grant = gate
        burst = execute_grant(onu, gate, self.channel)
        self.assertEqual(burst.payload_bytes, 0)
        self.assertEqual(burst.report.gen_time, 1000)
        self.assertEqual(burst.transmission_end, 1000)

    def test_transmitting_without_gate_raises(self):
        onu = make_onu()
        with self.assertRaises(OverlapDetected):
            execute_grant(onu, GateMsg(0, 0, 0, 100), self.channel)

    def test_busy_time_is_clipped_at_run_end(self):
        channel = WavelengthChannel(0, LINE_RATE, guard_ps=0, clip_end=10_000)
        onu = make_onu()
        gate = GateMsg(0, 0, 0, 1000)
        onu.pending_grant = gate
        execute_grant(onu, gate, channel)
        self.assertEqual(channel.busy_ps, 10_000)


if __name__ == "__main__":
    unittest.main()
