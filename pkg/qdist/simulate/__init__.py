"""Simulated repeated-measures cohorts with known distributional effects."""

from .generator import (
    CURVES,
    DISTRIBUTIONS,
    MECHANISMS,
    OUTCOMES,
    SURFACES,
    ScenarioSpec,
    SubjectLaw,
    beta_curve,
    generate,
    load_scenario,
    load_scenarios_from_dir,
    surface_function,
    write_dataset,
)

__all__ = [
    "CURVES",
    "DISTRIBUTIONS",
    "MECHANISMS",
    "OUTCOMES",
    "SURFACES",
    "ScenarioSpec",
    "SubjectLaw",
    "beta_curve",
    "generate",
    "load_scenario",
    "load_scenarios_from_dir",
    "surface_function",
    "write_dataset",
]
