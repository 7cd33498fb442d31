"""Tests for the discrete-event engine."""

import io
import unittest

from mfhpon.engine import (
    Engine,
    EventKind,
    SchedulingInPast,
    SimulationError,
    byte_time_ps,
    seconds_to_ps,
    us_to_ps,
)


class TestTimeBase(unittest.TestCase):
    def test_byte_time_at_line_rates(self):
        self.assertEqual(byte_time_ps(25_000_000_000), 320)
        self.assertEqual(byte_time_ps(100_000_000_000), 80)

    def test_byte_time_rejects_fractional_rates(self):
        with self.assertRaises(ValueError):
            byte_time_ps(3_000_000_000_000)
        with self.assertRaises(ValueError):
            byte_time_ps(0)

    def test_conversions(self):
        self.assertEqual(us_to_ps(250), 250_000_000)
        self.assertEqual(us_to_ps(0.624), 624_000)
        self.assertEqual(seconds_to_ps(5.0), 5 * 10**12)


class TestEngine(unittest.TestCase):
    def setUp(self):
        self.engine = Engine()
        self.seen = []
        for kind in EventKind:
            self.engine.register(kind, self.seen.append)

    def test_equal_times_dispatch_in_insertion_order(self):
        """(time, seq) ordering: ties break by insertion."""
        self.engine.schedule_event(100, EventKind.REPORT_ARRIVAL_AT_OLT, 2)
        self.engine.schedule_event(100, EventKind.GATE_ARRIVAL_AT_ONU, 1)
        self.engine.schedule_event(50, EventKind.TRANSMISSION_END, 3)
        self.engine.run_until(1000)
        self.assertEqual([e.entity for e in self.seen], [3, 2, 1])
        self.assertEqual([e.seq for e in self.seen], [2, 0, 1])

    def test_schedule_returns_increasing_ids(self):
        a = self.engine.schedule_event(10, EventKind.SIM_END)
        b = self.engine.schedule_event(5, EventKind.SIM_END)
        self.assertEqual((a, b), (0, 1))
        self.assertEqual(self.engine.pending(), 2)
        self.assertEqual(self.engine.peek_time(), 5)

    def test_event_at_current_clock_is_allowed(self):
        self.engine.schedule_event(100, EventKind.SIM_END)
        self.engine.run_until(100)
        self.engine.schedule_event(100, EventKind.SIM_END)
        self.assertEqual(self.engine.run_until(100), 1)

    def test_scheduling_in_the_past_raises(self):
        self.engine.run_until(500)
        with self.assertRaises(SchedulingInPast):
            self.engine.schedule_event(499, EventKind.SIM_END)

    def test_run_until_leaves_later_events_and_advances_clock(self):
        self.engine.schedule_event(10, EventKind.SIM_END)
        self.engine.schedule_event(2000, EventKind.SIM_END)
        self.assertEqual(self.engine.run_until(1000), 1)
        self.assertEqual(self.engine.clock, 1000)
        self.assertEqual(self.engine.pending(), 1)
        self.assertEqual(self.engine.dispatched, 1)

    def test_empty_queue_run_returns_immediately(self):
        self.assertEqual(self.engine.run_until(10**12), 0)
        self.assertIsNone(self.engine.peek_time())

    def test_handlers_may_schedule_follow_ups(self):
        engine = Engine()
        times = []

        def chain(event):
            times.append(event.time)
            if event.time < 300:
                engine.schedule_event(event.time + 100, EventKind.BURST_EMISSION)

        engine.register(EventKind.BURST_EMISSION, chain)
        engine.schedule_event(0, EventKind.BURST_EMISSION)
        engine.run_until(1000)
        self.assertEqual(times, [0, 100, 200, 300])

    def test_missing_handler_raises(self):
        engine = Engine()
        engine.schedule_event(0, EventKind.FRAME_ARRIVAL)
        with self.assertRaises(SimulationError):
            engine.run_until(10)

    def test_trace_lines(self):
        trace = io.StringIO()
        engine = Engine(trace=trace)
        engine.register(EventKind.SIM_END, lambda e: None)
        engine.schedule_event(42, EventKind.SIM_END, 7)
        engine.run_until(42)
        self.assertEqual(trace.getvalue(), "42 0 SIM_END 7\n")


if __name__ == "__main__":
    unittest.main()
