"""
Template loader for Jinja2 result templates.

Loads the bundled Markdown summary template from the package templates/
directory and renders sweep and run summaries with it.
"""

import logging
from collections.abc import Sequence
from functools import lru_cache
from pathlib import Path

from jinja2 import Environment, FileSystemLoader, Template

from mfhpon.metrics import CONVENTIONAL_CLASS, SummaryRecord

logger = logging.getLogger(__name__)

TEMPLATES_DIR = "templates"

SUMMARY_TEMPLATE = "summary.md.j2"


def get_templates_path() -> Path:
    """Get the path to the bundled templates directory."""
    return Path(__file__).resolve().parent / TEMPLATES_DIR


def _format_us(value: int | float | None) -> str:
    if value is None or value == "":
        return "-"
    return f"{float(value) / 1e6:.3f}"


@lru_cache(maxsize=1)
def _get_jinja_env() -> Environment:
    """Get or create a cached Jinja2 environment.

    Returns:
        Configured Jinja2 Environment instance.
    """
    templates_path = get_templates_path()
    logger.debug("Loading templates from: %s", templates_path)

    env = Environment(
        loader=FileSystemLoader(str(templates_path)),
        trim_blocks=True,
        lstrip_blocks=False,
        keep_trailing_newline=True,
    )
    env.filters["us"] = _format_us
    return env


def get_template(template_name: str) -> Template:
    """Load a Jinja2 template by name.

    Raises:
        jinja2.TemplateNotFound: If the template file doesn't exist.
    """
    return _get_jinja_env().get_template(template_name)


def render_summary(
    records: Sequence[SummaryRecord],
    *,
    title: str,
    split: str,
    replications: int,
    duration_s: float,
    failures: Sequence[tuple[str, float, str]] = (),
) -> str:
    """Render the Markdown summary of one run or sweep.

    Args:
        records: Pooled results, one per (scheme, b_factor) cell.
        title: Heading of the document.
        split: Functional split option the budget was taken from.
        replications: Replications pooled per cell.
        duration_s: Simulated seconds per replication.
        failures: (scheme, b_factor, reason) of cells that did not finish.

    Returns:
        Rendered markdown content string.
    """
    logger.debug("Rendering summary template for %d cells", len(records))
    cells = []
    for record in records:
        rows = record.rows()
        mfh_rows = [row for row in rows if row["class"] != CONVENTIONAL_CLASS]
        cells.append(
            {
                "scheme": record.scheme,
                "b_factor": record.b_factor,
                "scenario": record.scenario,
                "utilization": record.mean_utilization,
                "all_met": all(row["meets_budget"] == "true" for row in mfh_rows) if mfh_rows else False,
                "rows": rows,
            }
        )
    budget_ps = records[0].budget_ps if records else 0
    return get_template(SUMMARY_TEMPLATE).render(
        title=title,
        split=split,
        budget_ps=budget_ps,
        replications=replications,
        duration_s=duration_s,
        cells=cells,
        failures=list(failures),
    )
