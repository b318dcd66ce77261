"""Locally projected (Bezier B-bar) spline discretizations and benchmarks.

Subpackages by theme: spline bases (:mod:`bezbar.splines`), extraction and
projection dual bases (:mod:`bezbar.extraction`, :mod:`bezbar.projection`),
numerical utilities (:mod:`bezbar.numerics`), the Timoshenko beam and
plane-strain elasticity solvers (:mod:`bezbar.beam`,
:mod:`bezbar.elasticity2d`), and study orchestration (:mod:`bezbar.bench`).
"""

from .splines import (
    KnotVector,
    SplineSpace,
    NurbsSpace,
    TensorSpace2D,
    eval_bernstein,
    eval_bspline,
    eval_nurbs,
    eval_tensor2d,
)
from .extraction import (
    LineGeometry,
    build_extraction,
    bernstein_gramian,
    projection_weights,
    build_dual_extraction,
    rational_dualize,
)
from .projection import bezier_project, global_l2_project
from .numerics import (
    NumericsError,
    gauss_rule,
    solve,
    smallest_nonzero_gen_eig,
    bandwidth,
)

__all__ = [
    "KnotVector", "SplineSpace", "NurbsSpace", "TensorSpace2D",
    "eval_bernstein", "eval_bspline", "eval_nurbs", "eval_tensor2d",
    "LineGeometry", "build_extraction", "bernstein_gramian",
    "projection_weights", "build_dual_extraction", "rational_dualize",
    "bezier_project", "global_l2_project",
    "NumericsError", "gauss_rule", "solve", "smallest_nonzero_gen_eig",
    "bandwidth",
]

__version__ = "0.1.0"
