"""Adversarial course-of-action planning engine.

Expands goal tasks into a scheduled, resourced plan over a terrain graph,
interleaving hierarchical expansion, temporal propagation, routing,
attrition, consumption and enemy reaction inference; renders the result
as a synchronization matrix.
"""

from .engine import plan, replan, utilization_report
from .adversarial import wargame, contact_decision
from .kb import applicable_methods, kb_digest, lint_kb, load_kb, load_kb_files
from .plan import EditCommand, Overlay, PlanConfig, PlanningError
from .scenario import (
    load_scenario,
    load_scenario_file,
    scenario_digest,
    serialize_scenario,
    validate_scenario,
)
from .syncmatrix import build_matrix, export_plan, import_plan

__version__ = "0.1.0"

__all__ = [
    "plan", "replan", "wargame", "utilization_report", "contact_decision",
    "load_kb", "load_kb_files", "applicable_methods", "lint_kb", "kb_digest",
    "load_scenario", "load_scenario_file", "scenario_digest",
    "serialize_scenario", "validate_scenario",
    "build_matrix", "export_plan", "import_plan",
    "EditCommand", "Overlay", "PlanConfig", "PlanningError",
    "__version__",
]
