"""Univariate and tensor-product Bernstein, B-spline, and NURBS bases.

All parametric domains are [0, 1] per direction.  Evaluation routines return
only the values of the basis functions that are active at the query point,
together with the index of the first active function.  Types are immutable
after construction and evaluation is pure, so everything here is safe to use
from multiple threads.
"""

import bisect
import math

import numpy as np

__all__ = [
    "KnotVector",
    "SplineSpace",
    "NurbsSpace",
    "TensorSpace2D",
    "eval_bernstein",
    "eval_bspline",
    "eval_nurbs",
    "eval_tensor2d",
]


def eval_bernstein(p: int, xi, deriv_order: int = 0):
    """Values (or first derivatives) of the p+1 Bernstein polynomials at xi.

    ``xi`` may be a scalar or an array; the basis index is the last axis of
    the result.  Points outside [0, 1] raise ``ValueError``.
    """
    if p < 0:
        raise ValueError("degree must be nonnegative")
    if deriv_order not in (0, 1):
        raise ValueError("deriv_order must be 0 or 1")
    x = np.asarray(xi, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("Bernstein evaluation point outside [0, 1]")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)[..., None]

    def all_values(q):
        vals = np.ones(x.shape[:-1] + (1,))
        for _ in range(q):
            lo = np.concatenate([(1.0 - x) * vals, np.zeros_like(x)], axis=-1)
            hi = np.concatenate([np.zeros_like(x), x * vals], axis=-1)
            vals = lo + hi
        return vals

    if deriv_order == 0:
        out = all_values(p)
    elif p == 0:
        out = np.zeros(x.shape[:-1] + (1,))
    else:
        lower = all_values(p - 1)
        pad = np.zeros_like(x)
        out = p * (np.concatenate([pad, lower], axis=-1)
                   - np.concatenate([lower, pad], axis=-1))
    return out[0] if scalar else out


class KnotVector:
    """Open knot vector on [0, 1] together with a polynomial degree."""

    def __init__(self, degree: int, knots):
        self.degree = int(degree)
        self.knots = np.array(knots, dtype=float)
        self.knots.flags.writeable = False
        p = self.degree
        if p < 0:
            raise ValueError("degree must be nonnegative")
        if self.knots.ndim != 1 or len(self.knots) < 2 * (p + 1):
            raise ValueError("knot vector too short for the requested degree")
        if np.any(np.diff(self.knots) < 0):
            raise ValueError("knots must be nondecreasing")
        if self.knots[0] != 0.0 or self.knots[-1] != 1.0:
            raise ValueError("knot vector must span [0, 1]")
        if np.any(self.knots[: p + 1] != 0.0) or np.any(self.knots[-(p + 1):] != 1.0):
            raise ValueError("knot vector must be open (endpoint multiplicity p+1)")
        interior = self.knots[p + 1:len(self.knots) - p - 1]
        vals, counts = np.unique(interior, return_counts=True)
        if np.any((vals <= 0.0) | (vals >= 1.0)):
            raise ValueError("interior knots must lie strictly inside (0, 1)")
        # multiplicity 1 is always allowed so degree-0 spaces can carry breaks
        if np.any(counts > max(p, 1)):
            raise ValueError("interior knot multiplicity exceeds the degree")
        if self.n < p + 1:
            raise ValueError("basis dimension must be at least degree + 1")

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return len(self.knots) - self.degree - 1

    @property
    def breakpoints(self):
        return np.unique(self.knots)

    @classmethod
    def open_uniform(cls, degree: int, n_elements: int) -> "KnotVector":
        """Open knot vector with ``n_elements`` uniform spans and plain interior knots."""
        if n_elements < 1:
            raise ValueError("need at least one element")
        interior = np.arange(1, n_elements) / n_elements
        p = degree
        knots = np.concatenate([np.zeros(p + 1), interior, np.ones(p + 1)])
        return cls(degree, knots)


def _find_span(knots, p, xi):
    """Index k with knots[k] <= xi < knots[k+1]; the last span is right-closed."""
    n = len(knots) - p - 1
    if xi >= knots[n]:
        return n - 1
    if xi <= knots[p]:
        return p
    return bisect.bisect_right(knots, xi) - 1


def _ders_basis(knots, p, span, xi, n_ders):
    """Active B-spline values and derivatives (rows: order, cols: local index)."""
    ndu = np.empty((p + 1, p + 1))
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = xi - knots[span + 1 - j]
        right[j] = knots[span + j] - xi
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved
    ders = np.zeros((n_ders + 1, p + 1))
    ders[0, :] = ndu[:, p]
    for r in range(p + 1):
        s1, s2 = 0, 1
        a = np.zeros((2, p + 1))
        a[0, 0] = 1.0
        for k in range(1, min(n_ders, p) + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, min(n_ders, p) + 1):
        ders[k, :] *= fac
        fac *= p - k
    return ders


class SplineSpace:
    """Univariate B-spline space: knot vector plus its element decomposition."""

    def __init__(self, knot_vector: KnotVector):
        self.kv = knot_vector
        self.degree = knot_vector.degree
        self.n = knot_vector.n
        bp = knot_vector.breakpoints
        self.element_spans = [(bp[i], bp[i + 1]) for i in range(len(bp) - 1)]
        self._breaks = bp
        # knot-span index of each element, for connectivity
        self._span_of_element = [
            _find_span(self.kv.knots, self.degree, 0.5 * (lo + hi))
            for lo, hi in self.element_spans
        ]

    @classmethod
    def uniform(cls, degree: int, n_elements: int) -> "SplineSpace":
        return cls(KnotVector.open_uniform(degree, n_elements))

    @property
    def n_elements(self) -> int:
        return len(self.element_spans)

    def find_span(self, xi: float) -> int:
        return _find_span(self.kv.knots, self.degree, xi)

    def element_index(self, xi: float) -> int:
        """Index of the element containing xi (right-open, last span closed)."""
        if xi < 0.0 or xi > 1.0:
            raise ValueError("parametric point outside [0, 1]")
        k = bisect.bisect_right(self._breaks, xi) - 1
        return min(k, self.n_elements - 1)

    def element_connectivity(self, e: int):
        """Global indices of the degree+1 functions active on element e."""
        span = self._span_of_element[e]
        return np.arange(span - self.degree, span + 1)

    def active_values(self, xi: float, n_ders: int = 0):
        """(first_active_index, table) with table rows 0..n_ders."""
        span = self.find_span(xi)
        ders = _ders_basis(self.kv.knots, self.degree, span, xi, n_ders)
        return span - self.degree, ders

    def greville(self):
        p, kn = self.degree, self.kv.knots
        if p == 0:
            return 0.5 * (kn[:-1] + kn[1:])
        return np.array([kn[a + 1:a + p + 1].mean() for a in range(self.n)])


def eval_bspline(space: SplineSpace, xi: float, deriv_order: int = 0):
    """Active B-spline values (deriv_order 0) or first derivatives (1) at xi."""
    if deriv_order not in (0, 1):
        raise ValueError("deriv_order must be 0 or 1")
    if xi < 0.0 or xi > 1.0:
        raise ValueError("parametric point outside [0, 1]")
    first, ders = space.active_values(xi, n_ders=deriv_order)
    return first, ders[deriv_order].copy()


class NurbsSpace:
    """Rational basis built from a B-spline space and positive weights."""

    def __init__(self, space: SplineSpace, weights):
        self.space = space
        self.weights = np.array(weights, dtype=float)
        self.weights.flags.writeable = False
        if self.weights.shape != (space.n,):
            raise ValueError("one weight per basis function required")
        if np.any(self.weights <= 0.0):
            raise ValueError("weights must be positive")
        self.degree = space.degree
        self.n = space.n

    @property
    def n_elements(self):
        return self.space.n_elements


def eval_nurbs(space: NurbsSpace, xi: float, deriv_order: int = 0):
    """Active rational basis values or first derivatives at xi."""
    if deriv_order not in (0, 1):
        raise ValueError("deriv_order must be 0 or 1")
    first, ders = space.space.active_values(xi, n_ders=deriv_order)
    w = space.weights[first:first + space.degree + 1]
    wn = ders[0] * w
    W = wn.sum()
    if W <= 0.0:
        raise ValueError("weight function must be positive")
    if deriv_order == 0:
        return first, wn / W
    dW = float(np.dot(ders[1], w))
    return first, (ders[1] * w * W - wn * dW) / W ** 2


class TensorSpace2D:
    """Tensor-product space with global index A(i, j) = n_eta * i + j.

    Either direction may be a :class:`SplineSpace` or a :class:`NurbsSpace`;
    a full 2d weight grid may also be supplied directly (as produced by knot
    refinement of a rational geometry), in which case the per-direction
    spaces must be plain spline spaces.
    """

    def __init__(self, space_xi, space_eta, weights=None):
        def split(sp):
            if isinstance(sp, NurbsSpace):
                return sp.space, sp.weights
            return sp, None

        self.space_xi, w_xi = split(space_xi)
        self.space_eta, w_eta = split(space_eta)
        if weights is not None:
            if w_xi is not None or w_eta is not None:
                raise ValueError("give either per-direction weights or a grid, not both")
            grid = np.array(weights, dtype=float)
        elif w_xi is not None or w_eta is not None:
            wx = w_xi if w_xi is not None else np.ones(self.space_xi.n)
            we = w_eta if w_eta is not None else np.ones(self.space_eta.n)
            grid = np.outer(wx, we)
        else:
            grid = None
        if grid is not None:
            if grid.shape != (self.space_xi.n, self.space_eta.n):
                raise ValueError("weight grid shape must be (n_xi, n_eta)")
            if np.any(grid <= 0.0):
                raise ValueError("weights must be positive")
            grid.flags.writeable = False
        self.weights = grid

    @property
    def n_xi(self):
        return self.space_xi.n

    @property
    def n_eta(self):
        return self.space_eta.n

    @property
    def n(self):
        return self.n_xi * self.n_eta

    @property
    def rational(self):
        return self.weights is not None

    def index(self, i: int, j: int) -> int:
        return self.n_eta * i + j

    def global_indices(self, first_xi, first_eta, m_xi, m_eta):
        ii = np.arange(first_xi, first_xi + m_xi)
        jj = np.arange(first_eta, first_eta + m_eta)
        return (self.n_eta * ii[:, None] + jj[None, :]).ravel()


def eval_tensor2d(space: TensorSpace2D, point, deriv_order: int = 0):
    """Active 2d basis values and, for deriv_order 1, parametric gradients.

    Returns ``(indices, values)`` or ``(indices, values, grads)`` where
    ``grads[:, 0]`` is d/dxi and ``grads[:, 1]`` is d/deta.  Local ordering
    follows the global index map (xi index varies slowest).
    """
    xi, eta = point
    fx, dx = space.space_xi.active_values(xi, n_ders=deriv_order)
    fe, de = space.space_eta.active_values(eta, n_ders=deriv_order)
    mx, me = dx.shape[1], de.shape[1]
    idx = space.global_indices(fx, fe, mx, me)
    vals = np.kron(dx[0], de[0])
    if deriv_order == 0:
        if space.rational:
            w = space.weights[fx:fx + mx, fe:fe + me].ravel()
            vw = vals * w
            vals = vw / vw.sum()
        return idx, vals
    grads = np.column_stack([np.kron(dx[1], de[0]), np.kron(dx[0], de[1])])
    if space.rational:
        w = space.weights[fx:fx + mx, fe:fe + me].ravel()
        vw = vals * w
        gw = grads * w[:, None]
        W = vw.sum()
        dW = gw.sum(axis=0)
        vals_out = vw / W
        grads = (gw * W - vw[:, None] * dW[None, :]) / W ** 2
        vals = vals_out
    return idx, vals, grads
