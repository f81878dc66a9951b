"""Nested vertex copulas with prescribed tail dependence at the origin."""

from .analysis import Reference, TailFit, TailScan, fit_tail, gof_report, reference_cdf, tail_scan
from .margins import Margin, MarginSpec
from .nesting import (
    BudgetExceeded,
    GridMeasure,
    NestSequence,
    SequenceError,
    exact_cdf,
    nest_grid,
    obox_mass,
    refine_to_grid,
)
from .sampler import WorkStats, draw_one, sample, transform_margins
from .tail_shaper import (
    ShapingError,
    TailSpec,
    build_degree_one,
    build_eventually_constant,
    build_increasing,
    build_pareto,
    build_subsequence_targets,
    validate_nc_k,
)
from .vertex_algebra import VertexCopula, check_order, gk_member, project, s_inverse, s_transform

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "GridMeasure",
    "Margin",
    "MarginSpec",
    "NestSequence",
    "Reference",
    "SequenceError",
    "ShapingError",
    "TailFit",
    "TailScan",
    "TailSpec",
    "VertexCopula",
    "WorkStats",
    "build_degree_one",
    "build_eventually_constant",
    "build_increasing",
    "build_pareto",
    "build_subsequence_targets",
    "check_order",
    "draw_one",
    "exact_cdf",
    "fit_tail",
    "gk_member",
    "gof_report",
    "nest_grid",
    "obox_mass",
    "project",
    "reference_cdf",
    "refine_to_grid",
    "s_inverse",
    "s_transform",
    "sample",
    "tail_scan",
    "transform_margins",
    "validate_nc_k",
]
