"""Bezier extraction, reconstruction, projection weights, and dual bases.

Extraction expresses the smooth spline basis on each element in terms of the
local Bernstein basis, N(xi) = C^e B(xi_local).  The reconstruction operator
is R^e = (C^e)^-1.  Projection duals combine the element Bernstein Gramian
G^e with support-averaging weights into the dual extraction operator

    D^e = diag(omega^e) (R^e)^T (G^e)^-1,

whose rows span compactly supported dual functions N_hat that are
biorthogonal to the primal basis after assembly.  Gramians and weights are
integrated in the physical domain through the supplied geometry mapping.
"""

import math

import numpy as np

from .numerics import QuadratureRule, gauss_rule
from .splines import SplineSpace, NurbsSpace, TensorSpace2D, eval_bernstein

__all__ = [
    "LineGeometry",
    "ElementExtraction",
    "DualExtraction",
    "RationalDualBasis",
    "insert_knot_matrix",
    "refine_knots_matrix",
    "bernstein_elevation_matrix",
    "build_extraction",
    "build_extraction_2d",
    "bernstein_gramian",
    "projection_weights",
    "build_dual_extraction",
    "duals_from_element_data",
    "rational_dualize",
    "default_rule",
]


class LineGeometry:
    """Affine map from the parametric interval [0, 1] to [x0, x1]."""

    def __init__(self, x0: float = 0.0, x1: float = 1.0):
        if not x1 > x0:
            raise ValueError("interval must have positive length")
        self.x0 = float(x0)
        self.x1 = float(x1)

    @property
    def length(self):
        return self.x1 - self.x0

    def map(self, xi):
        return self.x0 + self.length * np.asarray(xi, dtype=float)

    def jacobian(self):
        return self.length


class ElementExtraction:
    """Per-element extraction operator C, reconstruction R = C^-1, and connectivity."""

    def __init__(self, e, c_matrix, connectivity):
        self.e = int(e)
        self.C = np.asarray(c_matrix, dtype=float)
        self.R = np.linalg.inv(self.C)
        self.connectivity = np.asarray(connectivity, dtype=np.int64)


class DualExtraction:
    """Element Gramian, averaging weights, and dual extraction operator."""

    def __init__(self, e, gramian, omega, d_matrix, connectivity):
        self.e = int(e)
        self.G = np.asarray(gramian, dtype=float)
        self.omega = np.asarray(omega, dtype=float)
        self.D = np.asarray(d_matrix, dtype=float)
        self.connectivity = np.asarray(connectivity, dtype=np.int64)


def insert_knot_matrix(knots, degree, u):
    """Single-knot refinement matrix T with N_coarse = T N_fine.

    Control points refine through the transpose, Q = T^T P.  Returns
    ``(T, new_knots)``.
    """
    p = degree
    kn = np.asarray(knots, dtype=float)
    n = len(kn) - p - 1
    if not kn[p] <= u <= kn[n]:
        raise ValueError("knot to insert lies outside the domain")
    k = n - 1 if u >= kn[n] else max(np.searchsorted(kn, u, side="right") - 1, p)
    alpha = np.zeros(n + 1)
    alpha[: k - p + 1] = 1.0
    lo = np.arange(k - p + 1, k + 1)
    alpha[lo] = (u - kn[lo]) / (kn[lo + p] - kn[lo])
    t = np.zeros((n, n + 1))
    idx = np.arange(n)
    t[idx, idx] = alpha[:n]
    t[idx, idx + 1] = 1.0 - alpha[1:]
    return t, np.insert(kn, k + 1, u)


def refine_knots_matrix(knots, degree, new_knots):
    """Refinement matrix for inserting a batch of knots (values may repeat)."""
    kn = np.asarray(knots, dtype=float)
    t = np.eye(len(kn) - degree - 1)
    for u in sorted(new_knots):
        step, kn = insert_knot_matrix(kn, degree, u)
        t = t @ step
    return t, kn


def bernstein_elevation_matrix(degree, raise_by=1):
    """Degree elevation matrix E for Bernstein control points, Q = E P.

    Valid on a single Bezier element; E has shape
    (degree + raise_by + 1, degree + 1).
    """
    e_total = np.eye(degree + 1)
    q = degree
    for _ in range(raise_by):
        e = np.zeros((q + 2, q + 1))
        for i in range(q + 2):
            a = i / (q + 1)
            if i >= 1:
                e[i, i - 1] = a
            if i <= q:
                e[i, i] += 1.0 - a
        e_total = e @ e_total
        q += 1
    return e_total


def build_extraction(space: SplineSpace):
    """Element extraction operators for a univariate spline space."""
    p = space.degree
    kn = space.kv.knots
    if p == 0:
        return [
            ElementExtraction(e, np.ones((1, 1)), space.element_connectivity(e))
            for e in range(space.n_elements)
        ]
    interior, counts = np.unique(kn[p + 1:len(kn) - p - 1], return_counts=True)
    to_insert = np.repeat(interior, np.maximum(p - counts, 0))
    t, _ = refine_knots_matrix(kn, p, to_insert)
    out = []
    for e in range(space.n_elements):
        conn = space.element_connectivity(e)
        c = t[np.ix_(conn, np.arange(e * p, e * p + p + 1))]
        out.append(ElementExtraction(e, c, conn))
    return out


def build_extraction_2d(space: TensorSpace2D):
    """Tensor-product extraction: C^e = kron(C_xi, C_eta), row-major in eta."""
    ext_xi = build_extraction(space.space_xi)
    ext_eta = build_extraction(space.space_eta)
    ne = space.space_eta.n_elements
    out = []
    for ex in ext_xi:
        for ee in ext_eta:
            conn = (space.n_eta * ex.connectivity[:, None]
                    + ee.connectivity[None, :]).ravel()
            out.append(ElementExtraction(ex.e * ne + ee.e,
                                         np.kron(ex.C, ee.C), conn))
    return out


def bernstein_gramian(degree: int, length: float = 1.0):
    """Closed-form Gramian of the Bernstein basis on an interval of given length."""
    if length <= 0.0:
        raise ValueError("element length must be positive")
    p = degree
    g = np.empty((p + 1, p + 1))
    for i in range(p + 1):
        for j in range(p + 1):
            g[i, j] = (math.comb(p, i) * math.comb(p, j)
                       / ((2 * p + 1) * math.comb(2 * p, i + j)))
    return length * g


def default_rule(degree: int) -> QuadratureRule:
    """Shared Gauss rule: exact for element Gramians with margin for mappings."""
    return gauss_rule(math.ceil((2 * degree + 1) / 2) + 1)


def duals_from_element_data(connectivity, extractions, bern_values, phys_weights, n):
    """Assemble dual extraction operators from per-element sample data.

    Parameters
    ----------
    connectivity : per-element global indices of the active functions
    extractions : per-element :class:`ElementExtraction`
    bern_values : per-element Bernstein values at the quadrature points, (nq, m)
    phys_weights : per-element physical quadrature weights (measure included), (nq,)
    n : total number of basis functions

    The same samples define the Gramians, the averaging weights, and every
    inner product downstream, which keeps biorthogonality exact in floating
    point rather than up to quadrature error.
    """
    n_el = len(connectivity)
    support = np.zeros(n)
    element_int = []
    grams = []
    for e in range(n_el):
        w = np.asarray(phys_weights[e], dtype=float)
        if w.sum() <= 0.0:
            raise ValueError(f"element {e} has nonpositive measure")
        b = np.asarray(bern_values[e], dtype=float)
        grams.append(b.T @ (b * w[:, None]))
        int_b = b.T @ w
        int_n = extractions[e].C @ int_b
        element_int.append(int_n)
        support[connectivity[e]] += int_n
    duals = []
    for e in range(n_el):
        omega = element_int[e] / support[connectivity[e]]
        d = (omega[:, None] * extractions[e].R.T) @ np.linalg.inv(grams[e])
        duals.append(DualExtraction(e, grams[e], omega, d, connectivity[e]))
    return duals


def _line_element_data(space: SplineSpace, geometry: LineGeometry, rule: QuadratureRule):
    ext = build_extraction(space)
    conn = [x.connectivity for x in ext]
    bvals = []
    wq = []
    jac = geometry.jacobian()
    b = eval_bernstein(space.degree, rule.points)
    for lo, hi in space.element_spans:
        bvals.append(b)
        wq.append(rule.weights * (hi - lo) * jac)
    return ext, conn, bvals, wq


def projection_weights(space: SplineSpace, geometry: LineGeometry | None = None,
                       rule: QuadratureRule | None = None):
    """Per-element averaging weight vectors; each function's weights sum to 1."""
    geometry = geometry or LineGeometry()
    rule = rule or default_rule(space.degree)
    ext, conn, bvals, wq = _line_element_data(space, geometry, rule)
    duals = duals_from_element_data(conn, ext, bvals, wq, space.n)
    return [d.omega for d in duals]


def build_dual_extraction(space: SplineSpace, geometry: LineGeometry | None = None,
                          rule: QuadratureRule | None = None):
    """Dual extraction operators of a univariate space under an affine map."""
    geometry = geometry or LineGeometry()
    rule = rule or default_rule(space.degree)
    ext, conn, bvals, wq = _line_element_data(space, geometry, rule)
    return duals_from_element_data(conn, ext, bvals, wq, space.n)


class RationalDualBasis:
    """Duals of a rational basis: polynomial duals rescaled by W(x) / w_A.

    The weight-function factor cancels pointwise against the rational primal
    basis, so biorthogonality carries over from the underlying polynomial
    dual basis unchanged.
    """

    def __init__(self, duals, weights):
        self.duals = list(duals)
        self.weights = np.asarray(weights, dtype=float)
        if np.any(self.weights <= 0.0):
            raise ValueError("weights must be positive")

    def element_pair_values(self, extraction: ElementExtraction, e: int, bern_values):
        """Rational primal and dual values on element e at Bernstein samples.

        Returns ``(primal, dual)`` arrays of shape (nq, m) for the active
        functions, evaluated from Bernstein values of shape (nq, m).
        """
        dual = self.duals[e]
        w_loc = self.weights[extraction.connectivity]
        nvals = bern_values @ extraction.C.T
        wfun = nvals @ w_loc
        primal = nvals * w_loc[None, :] / wfun[:, None]
        dualv = (bern_values @ dual.D.T) * (wfun[:, None] / w_loc[None, :])
        return primal, dualv


def rational_dualize(duals, weights) -> RationalDualBasis:
    """Wrap polynomial duals as duals of the rational basis with given weights."""
    return RationalDualBasis(duals, weights)
