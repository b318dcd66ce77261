"""Local Bezier projection onto spline spaces, plus a global L2 oracle.

The local pipeline per element: fit the target in the element Bernstein
basis (Q^e = (G^e)^-1 F^e), convert to spline control values through the
reconstruction operator, then average contributions across elements with
the support weights.  The same coefficients are obtained from inner
products with the dual basis; both routes are provided.
"""

import numpy as np

from .extraction import (
    LineGeometry,
    build_extraction,
    build_dual_extraction,
    default_rule,
    duals_from_element_data,
)
from .numerics import QuadratureRule
from .splines import SplineSpace, eval_bernstein

__all__ = ["element_bezier_coeffs", "bezier_project", "global_l2_project"]


def _sample(f, x):
    vals = np.asarray([np.asarray(f(xi), dtype=float) for xi in x])
    return vals if vals.ndim > 1 else vals[:, None]


def element_bezier_coeffs(f, x_phys, w_phys, bern_values, gramian):
    """Best-L2 Bernstein control values of ``f`` on one element.

    ``x_phys`` and ``w_phys`` are physical quadrature points and weights,
    ``bern_values`` the Bernstein samples (nq, p+1).  Vector-valued targets
    produce one column per component.
    """
    fv = _sample(f, x_phys)
    rhs = bern_values.T @ (fv * w_phys[:, None])
    q = np.linalg.solve(gramian, rhs)
    return q[:, 0] if q.shape[1] == 1 else q


def _element_data(space, geometry, rule):
    ext = build_extraction(space)
    b = eval_bernstein(space.degree, rule.points)
    data = []
    for e, (lo, hi) in enumerate(space.element_spans):
        xq = geometry.map(lo + (hi - lo) * rule.points)
        wq = rule.weights * (hi - lo) * geometry.jacobian()
        data.append((ext[e], xq, wq, b))
    return data


def bezier_project(f, space: SplineSpace, geometry: LineGeometry | None = None,
                   rule: QuadratureRule | None = None, use_duals: bool = False):
    """Project ``f`` onto the spline space by local fits and weighted averaging.

    With ``use_duals=True`` the coefficients are instead computed as inner
    products with the dual basis; both routes agree to roundoff.
    """
    geometry = geometry or LineGeometry()
    rule = rule or default_rule(space.degree)
    data = _element_data(space, geometry, rule)
    duals = duals_from_element_data(
        [d[0].connectivity for d in data], [d[0] for d in data],
        [d[3] for d in data], [d[2] for d in data], space.n)
    width = np.asarray(f(geometry.map(0.0)), dtype=float).size
    coeffs = np.zeros((space.n, width))
    for (ext, xq, wq, b), dual in zip(data, duals):
        fv = _sample(f, xq)
        fe = b.T @ (fv * wq[:, None])
        if use_duals:
            contrib = dual.D @ fe
        else:
            qe = np.linalg.solve(dual.G, fe)
            contrib = dual.omega[:, None] * (ext.R.T @ qe)
        coeffs[ext.connectivity] += contrib
    return coeffs[:, 0] if width == 1 else coeffs


def global_l2_project(f, space: SplineSpace, geometry: LineGeometry | None = None,
                      rule: QuadratureRule | None = None):
    """L2-orthogonal projection via the full mass matrix (comparison oracle)."""
    geometry = geometry or LineGeometry()
    rule = rule or default_rule(space.degree)
    width = np.asarray(f(geometry.map(0.0)), dtype=float).size
    mass = np.zeros((space.n, space.n))
    rhs = np.zeros((space.n, width))
    for ext, xq, wq, b in _element_data(space, geometry, rule):
        nvals = b @ ext.C.T
        conn = ext.connectivity
        mass[np.ix_(conn, conn)] += nvals.T @ (nvals * wq[:, None])
        rhs[conn] += nvals.T @ (_sample(f, xq) * wq[:, None])
    coeffs = np.linalg.solve(mass, rhs)
    return coeffs[:, 0] if width == 1 else coeffs
