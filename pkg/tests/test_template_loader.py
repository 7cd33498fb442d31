"""Tests for the Markdown summary templates."""

import unittest

import numpy as np
from jinja2 import TemplateNotFound

from mfhpon.metrics import CONVENTIONAL_CLASS, DelayStats, mfh_class, summarize
from mfhpon.template_loader import (
    SUMMARY_TEMPLATE,
    _format_us,
    get_template,
    get_templates_path,
    render_summary,
)


def record(scheme, tail_ps):
    stats = DelayStats([mfh_class(0), CONVENTIONAL_CLASS])
    stats.record_frames(mfh_class(0), np.zeros(3, dtype=np.int64), np.array([1_000_000, 2_000_000, tail_ps]))
    return summarize(stats, {0: 250, 1: 750}, 1000, scenario="18h", scheme=scheme, b_factor=0.95, budget_ps=250_000_000)


class TestTemplateLoader(unittest.TestCase):
    def test_bundled_template_exists(self):
        self.assertTrue((get_templates_path() / SUMMARY_TEMPLATE).is_file())
        self.assertIsNotNone(get_template(SUMMARY_TEMPLATE))

    def test_missing_template(self):
        with self.assertRaises(TemplateNotFound):
            get_template("nope.md.j2")

    def test_microsecond_filter(self):
        self.assertEqual(_format_us(250_000_000), "250.000")
        self.assertEqual(_format_us(1_500), "0.002")
        self.assertEqual(_format_us(None), "-")
        self.assertEqual(_format_us(""), "-")


class TestRenderSummary(unittest.TestCase):
    def test_cells_and_budget(self):
        markdown = render_summary(
            [record("proposed", 100_000_000), record("first-fit", 400_000_000)],
            title="mfhpon sweep (18h)",
            split="6",
            replications=2,
            duration_s=0.5,
        )
        self.assertTrue(markdown.startswith("# mfhpon sweep (18h)\n"))
        self.assertIn("- Split option: 6 (budget 250.000 µs)", markdown)
        self.assertIn("- Replications per cell: 2 × 0.500 s", markdown)
        self.assertIn("| proposed | 0.95 | 18h | 0.5000 | yes |", markdown)
        self.assertIn("| first-fit | 0.95 | 18h | 0.5000 | no |", markdown)
        self.assertIn("| mfh-0 | 3 | 2.000 | 100.000 | 100.000 | 100.000 | true |", markdown)
        self.assertIn("| conventional | 0 | - | - | - | - | - |", markdown)
        self.assertNotIn("Failed cells", markdown)

    def test_failures_listed(self):
        markdown = render_summary(
            [], title="empty", split="6", replications=1, duration_s=1.0, failures=[("mos-ipact", 1.2, "failed: x")]
        )
        self.assertIn("## Failed cells", markdown)
        self.assertIn("- mos-ipact @ 1.20: failed: x", markdown)


if __name__ == "__main__":
    unittest.main()
