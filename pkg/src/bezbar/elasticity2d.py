"""Plane-strain nearly incompressible elasticity with a volumetric B-bar split.

The strain is split into deviatoric and volumetric parts; the volumetric
part is replaced by its projection onto the degree p-1 spline space, either
through a global L2 projector (dense reference method), or through the
local projection dual basis (symmetric and non-symmetric variants).  The
plane-strain reduction keeps the three-dimensional 1/3-factor split, so the
deviatoric operator carries an out-of-plane row and the volumetric modulus
is lambda + 2 mu / 3.

Geometry is a tensor-product B-spline or NURBS patch; meshes are produced
by degree elevation of the coarse Bezier patch followed by uniform knot
insertion, which preserves the geometry exactly.  Element data is sampled
once at a shared Gauss rule and stored stacked over elements, so assembly
and error evaluation run as whole-mesh array operations.
"""

import math

import numpy as np
import scipy.sparse

from .extraction import (
    DualExtraction,
    bernstein_elevation_matrix,
    build_extraction_2d,
    default_rule,
    refine_knots_matrix,
)
from .numerics import (
    NumericsError,
    SparseMatrix,
    bandwidth,
    coupling_width,
    gauss_rule,
    smallest_nonzero_gen_eig,
    solve,
)
from .splines import KnotVector, SplineSpace, TensorSpace2D, eval_bernstein

__all__ = [
    "METHODS",
    "EDGES",
    "Material",
    "Geometry2D",
    "Discretization2D",
    "ElasticProblem",
    "ElasticSolution",
    "strain_displacement",
    "assemble",
    "solve_elastic",
    "solve_elastic_mixed",
    "exact_plate_stresses",
    "plate_stress_cartesian",
    "exact_plate_displacement",
    "quarter_annulus",
    "cook_quad",
    "plate_problem",
    "cook_problem",
    "infsup_beta",
    "stress_errors",
    "displacement_error",
]

METHODS = ("standard", "global-bbar", "sym-bbar", "ns-bbar")
EDGES = ("xi0", "xi1", "eta0", "eta1")

# quarter annulus of the benchmark plate: biquadratic NURBS patch data
ANNULUS_WEIGHTS = (1.0, 1.0 / math.sqrt(2.0), 1.0)
ANNULUS_POINTS = (
    ((0.0, 1.0), (1.0, 1.0), (1.0, 0.0)),
    ((0.0, 2.5), (2.5, 2.5), (2.5, 0.0)),
    ((0.0, 4.0), (4.0, 4.0), (4.0, 0.0)),
)


class Material:
    """Isotropic material with plane-strain Lame parameters."""

    def __init__(self, youngs_modulus: float, poisson: float):
        if youngs_modulus <= 0.0:
            raise ValueError("Young's modulus must be positive")
        if not 0.0 <= poisson < 0.5:
            raise ValueError("Poisson ratio must lie in [0, 1/2)")
        self.youngs_modulus = float(youngs_modulus)
        self.poisson = float(poisson)

    @property
    def lam(self):
        e, nu = self.youngs_modulus, self.poisson
        return nu * e / ((1.0 + nu) * (1.0 - 2.0 * nu))

    @property
    def mu(self):
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson))

    @property
    def bulk_like(self):
        """Volumetric modulus lambda + 2 mu / 3 of the pressure relation."""
        return self.lam + 2.0 * self.mu / 3.0


class Geometry2D:
    """Tensor-product patch: knot vectors, control grid, optional weights."""

    def __init__(self, kv_xi: KnotVector, kv_eta: KnotVector, control, weights=None):
        self.kv_xi = kv_xi
        self.kv_eta = kv_eta
        self.control = np.asarray(control, dtype=float)
        if self.control.shape != (kv_xi.n, kv_eta.n, 2):
            raise ValueError("control grid must have shape (n_xi, n_eta, 2)")
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (kv_xi.n, kv_eta.n):
                raise ValueError("weight grid must have shape (n_xi, n_eta)")
            if np.any(weights <= 0.0):
                raise ValueError("weights must be positive")
        self.weights = weights

    @property
    def degrees(self):
        return self.kv_xi.degree, self.kv_eta.degree

    def _homogeneous(self):
        if self.weights is None:
            return self.control.copy(), None
        return self.control * self.weights[..., None], self.weights.copy()

    def elevated(self, degree: int) -> "Geometry2D":
        """Raise both directions to the target degree (single-element patch only)."""
        px, pe = self.degrees
        if degree < max(px, pe):
            raise ValueError("cannot lower the geometry degree")
        if len(self.kv_xi.breakpoints) > 2 or len(self.kv_eta.breakpoints) > 2:
            raise ValueError("degree elevation requires an unrefined Bezier patch")
        pw, w = self._homogeneous()
        ex = bernstein_elevation_matrix(px, degree - px)
        ee = bernstein_elevation_matrix(pe, degree - pe)
        pw = np.tensordot(ex, pw, axes=(1, 0))
        pw = np.tensordot(ee, pw, axes=(1, 1)).swapaxes(0, 1)
        if w is not None:
            w = ex @ w @ ee.T
        kvx = KnotVector(degree, np.concatenate([np.zeros(degree + 1), np.ones(degree + 1)]))
        kve = KnotVector(degree, np.concatenate([np.zeros(degree + 1), np.ones(degree + 1)]))
        return self._rebuild(kvx, kve, pw, w)

    def refined(self, n_xi: int, n_eta: int) -> "Geometry2D":
        """Insert uniform interior knots to reach the requested element counts."""
        pw, w = self._homogeneous()

        def refine(kv, n_target, grid, wgrid, axis):
            existing = kv.breakpoints
            if n_target % (len(existing) - 1):
                raise ValueError("element count must refine the existing mesh")
            new = np.setdiff1d(np.arange(1, n_target) / n_target, existing)
            t, knots = refine_knots_matrix(kv.knots, kv.degree, new)
            grid = np.tensordot(t, grid, axes=(0, axis))
            if axis == 1:
                grid = grid.swapaxes(0, 1)
            if wgrid is not None:
                wgrid = np.tensordot(t, wgrid, axes=(0, axis))
                if axis == 1:
                    wgrid = wgrid.swapaxes(0, 1)
            return KnotVector(kv.degree, knots), grid, wgrid

        kvx, pw, w = refine(self.kv_xi, n_xi, pw, w, 0)
        kve, pw, w = refine(self.kv_eta, n_eta, pw, w, 1)
        return self._rebuild(kvx, kve, pw, w)

    @staticmethod
    def _rebuild(kvx, kve, pw, w):
        if w is None:
            return Geometry2D(kvx, kve, pw, None)
        return Geometry2D(kvx, kve, pw / w[..., None], w)

    def tensor_space(self) -> TensorSpace2D:
        return TensorSpace2D(SplineSpace(self.kv_xi), SplineSpace(self.kv_eta),
                             weights=self.weights)

    def rotated(self, angle: float) -> "Geometry2D":
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        return Geometry2D(self.kv_xi, self.kv_eta,
                          self.control @ rot.T, self.weights)


def quarter_annulus(r_inner: float = 1.0, r_outer: float = 4.0) -> Geometry2D:
    """Biquadratic exact quarter annulus; xi runs radially, eta along the arc.

    The control table rows index the radius and the columns the arc; the
    column order is reversed here so eta runs from the x axis (eta=0) to
    the y axis (eta=1), which keeps det J > 0.
    """
    pts = np.asarray(ANNULUS_POINTS, dtype=float)[:, ::-1, :].copy()
    if (r_inner, r_outer) != (1.0, 4.0):
        radii = np.array([r_inner, 0.5 * (r_inner + r_outer), r_outer])
        pts = pts / np.array([1.0, 2.5, 4.0])[:, None, None] * radii[:, None, None]
    w = np.tile(np.asarray(ANNULUS_WEIGHTS), (3, 1))
    kv = KnotVector(2, np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0]))
    return Geometry2D(kv, kv, pts, w)


def cook_quad(corners=((0.0, 0.0), (48.0, 44.0), (0.0, 44.0), (48.0, 60.0))) -> Geometry2D:
    """Bilinear patch for the tapered membrane benchmark.

    Corner order: (xi0,eta0), (xi1,eta0), (xi0,eta1), (xi1,eta1).
    """
    p00, p10, p01, p11 = (np.asarray(c, dtype=float) for c in corners)
    ctrl = np.array([[p00, p01], [p10, p11]])
    kv = KnotVector(1, np.array([0.0, 0.0, 1.0, 1.0]))
    return Geometry2D(kv, kv, ctrl, None)


class _ElementView(dict):
    """Per-element slice view into the stacked sample arrays."""


class Discretization2D:
    """Analysis basis on a refined patch plus the projected pressure space.

    The displacement basis is the refined geometry basis (isoparametric);
    the projected space has degree p-1 in both directions with the same
    interior knots and is polynomial even on rational geometry.  Element
    data sampled at the shared Gauss rule feeds every matrix, so the dual
    biorthogonality identities hold to roundoff.
    """

    def __init__(self, geometry: Geometry2D, degree: int, n_per_side: int,
                 rule=None):
        if degree < 1:
            raise ValueError("degree must be at least 1")
        self.degree = degree
        self.n_per_side = n_per_side
        self.geom = geometry.elevated(degree).refined(n_per_side, n_per_side)
        self.space = self.geom.tensor_space()
        interior = self.geom.kv_xi.knots[degree + 1:-(degree + 1)]
        pb = degree - 1
        kb = KnotVector(pb, np.concatenate([np.zeros(pb + 1), interior, np.ones(pb + 1)]))
        self.projected = TensorSpace2D(SplineSpace(kb), SplineSpace(kb))
        self.rule = rule or default_rule(degree)

        self.extraction = build_extraction_2d(self.space)
        self.extraction_bar = build_extraction_2d(self.projected)
        sx, se = self.space.space_xi, self.space.space_eta
        self.spans_xi = sx.element_spans
        self.spans_eta = se.element_spans
        self.n_el = len(self.extraction)
        self._ctrl_flat = self.geom.control.reshape(-1, 2)
        self._w_flat = (self.geom.weights.ravel()
                        if self.geom.weights is not None else None)

        # stacked per-element operators (uniform local sizes on one patch)
        self._c2 = np.stack([x.C for x in self.extraction])
        self._conn = np.stack([x.connectivity for x in self.extraction])
        self._cb = np.stack([x.C for x in self.extraction_bar])
        self._conn_b = np.stack([x.connectivity for x in self.extraction_bar])
        nee = se.n_elements
        spans_x = np.asarray(self.spans_xi)
        spans_e = np.asarray(self.spans_eta)
        ex_idx = np.arange(self.n_el) // nee
        ee_idx = np.arange(self.n_el) % nee
        self._len_x = spans_x[ex_idx, 1] - spans_x[ex_idx, 0]
        self._len_e = spans_e[ee_idx, 1] - spans_e[ee_idx, 0]
        self._lo_x = spans_x[ex_idx, 0]
        self._lo_e = spans_e[ee_idx, 0]

        data = self.batched_eval(self.rule.points, self.rule.points,
                                 weights=self.rule.weights, need_bbar=True)
        if np.any(data["detJ"] <= 0.0):
            raise NumericsError("nonpositive Jacobian in the mesh")
        self._data = data
        self.duals_bar = self._build_duals(data)
        dstack = np.stack([d.D for d in self.duals_bar])
        data["nhat"] = np.einsum("qm,eam->eqa", data["bbar2"], dstack)
        self.elements = [
            _ElementView(
                e=e, conn=self._conn[e], x=data["x"][e], J=data["J"][e],
                detJ=data["detJ"][e], vals=data["vals"][e],
                grads=data["grads"][e], w=data["w"][e],
                bbar=data["bbar"][e], nbar=data["nbar"][e],
                nhat=data["nhat"][e],
            )
            for e in range(self.n_el)
        ]

    # -- batched sampling ----------------------------------------------------

    def batched_eval(self, u_pts, v_pts, weights=None, need_bbar=False,
                     elements=None):
        """Sample geometry and bases for all (or selected) elements at once.

        ``u_pts``/``v_pts`` are local coordinates in [0, 1]; the tensor grid
        is traversed row-major in v.  With ``weights`` (the 1d rule weights)
        the physical quadrature weights land in ``"w"``.  Returns stacked
        arrays over the element axis.
        """
        u_pts = np.asarray(u_pts, dtype=float)
        v_pts = np.asarray(v_pts, dtype=float)
        sel = np.arange(self.n_el) if elements is None else np.asarray(elements)
        p, pb = self.degree, self.degree - 1
        bu, dbu = eval_bernstein(p, u_pts), eval_bernstein(p, u_pts, 1)
        bv, dbv = eval_bernstein(p, v_pts), eval_bernstein(p, v_pts, 1)
        nu, nv = len(u_pts), len(v_pts)
        nq = nu * nv
        m = (p + 1) ** 2
        b2 = np.einsum("qa,rb->qrab", bu, bv).reshape(nq, m)
        du2 = np.einsum("qa,rb->qrab", dbu, bv).reshape(nq, m)
        dv2 = np.einsum("qa,rb->qrab", bu, dbv).reshape(nq, m)

        c2 = self._c2[sel]
        conn = self._conn[sel]
        nvals = np.einsum("qm,eam->eqa", b2, c2)
        gxi = np.einsum("qm,eam->eqa", du2, c2) / self._len_x[sel, None, None]
        geta = np.einsum("qm,eam->eqa", dv2, c2) / self._len_e[sel, None, None]
        if self._w_flat is not None:
            wloc = self._w_flat[conn]
            vw = nvals * wloc[:, None, :]
            gxw = gxi * wloc[:, None, :]
            gew = geta * wloc[:, None, :]
            wfun = vw.sum(axis=2)
            dwx = gxw.sum(axis=2)
            dwe = gew.sum(axis=2)
            nvals = vw / wfun[..., None]
            gxi = (gxw * wfun[..., None] - vw * dwx[..., None]) / wfun[..., None] ** 2
            geta = (gew * wfun[..., None] - vw * dwe[..., None]) / wfun[..., None] ** 2

        ctrl = self._ctrl_flat[conn]
        x = np.einsum("eqa,eax->eqx", nvals, ctrl)
        jac = np.empty((len(sel), nq, 2, 2))
        jac[:, :, :, 0] = np.einsum("eqa,eax->eqx", gxi, ctrl)
        jac[:, :, :, 1] = np.einsum("eqa,eax->eqx", geta, ctrl)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        # grads_phys[..., k] = gxi * dxi/dx_k + geta * deta/dx_k
        inv00 = jac[..., 1, 1] / det
        inv01 = -jac[..., 0, 1] / det
        inv10 = -jac[..., 1, 0] / det
        inv11 = jac[..., 0, 0] / det
        grads = np.empty(nvals.shape + (2,))
        grads[..., 0] = gxi * inv00[..., None] + geta * inv10[..., None]
        grads[..., 1] = gxi * inv01[..., None] + geta * inv11[..., None]

        out = {"sel": sel, "x": x, "J": jac, "detJ": det,
               "vals": nvals, "grads": grads}
        if weights is not None:
            w2 = np.repeat(np.asarray(weights), nv) * np.tile(np.asarray(weights), nu)
            out["w"] = w2[None, :] * (self._len_x[sel] * self._len_e[sel])[:, None] * det
        if need_bbar:
            bbu = eval_bernstein(pb, u_pts)
            bbv = eval_bernstein(pb, v_pts)
            mb = (pb + 1) ** 2
            bb2 = np.einsum("qa,rb->qrab", bbu, bbv).reshape(nq, mb)
            out["bbar2"] = bb2
            out["bbar"] = np.broadcast_to(bb2, (len(sel), nq, mb))
            out["nbar"] = np.einsum("qm,eam->eqa", bb2, self._cb[sel])
        return out

    def _build_duals(self, data):
        """Dual extraction operators of the projected space, physical measure."""
        w = data["w"]
        bb = data["bbar2"]
        grams = np.einsum("qa,qb,eq->eab", bb, bb, w)
        int_b = np.einsum("qa,eq->ea", bb, w)
        int_n = np.einsum("eab,eb->ea", self._cb, int_b)
        support = np.zeros(self.projected.n)
        np.add.at(support, self._conn_b, int_n)
        omega = int_n / support[self._conn_b]
        r_all = np.linalg.inv(self._cb)
        d_all = omega[:, :, None] * np.transpose(r_all, (0, 2, 1)) @ np.linalg.inv(grams)
        return [
            DualExtraction(e, grams[e], omega[e], d_all[e], self._conn_b[e])
            for e in range(self.n_el)
        ]

    def element_eval(self, e, u_pts, v_pts, need_bbar=False):
        """Single-element sampling on a local tensor grid (view of batched)."""
        data = self.batched_eval(u_pts, v_pts, need_bbar=need_bbar, elements=[e])
        ev = _ElementView(e=e, conn=self._conn[e], x=data["x"][0],
                          J=data["J"][0], detJ=data["detJ"][0],
                          vals=data["vals"][0], grads=data["grads"][0])
        if need_bbar:
            ev["bbar"] = data["bbar"][0]
            ev["nbar"] = data["nbar"][0]
            ev["nhat"] = data["bbar2"] @ self.duals_bar[e].D.T
        return ev

    def element_params(self, e, u_pts, v_pts):
        """Global parametric coordinates of a local tensor grid on element e."""
        u = self._lo_x[e] + self._len_x[e] * np.asarray(u_pts, float)
        v = self._lo_e[e] + self._len_e[e] * np.asarray(v_pts, float)
        return (np.repeat(u, len(v_pts)), np.tile(v, len(u_pts)))

    def eval_scattered(self, params_xi, params_eta):
        """Grouped evaluation at scattered parametric points.

        Returns a list of per-group dicts carrying the original point
        indices under ``"rows"``.
        """
        sx, se = self.space.space_xi, self.space.space_eta
        bx = np.array([sx.element_index(v) for v in params_xi])
        be = np.array([se.element_index(v) for v in params_eta])
        el = bx * se.n_elements + be
        out = []
        p = self.degree
        m = (p + 1) ** 2
        for e in np.unique(el):
            rows = np.nonzero(el == e)[0]
            u = (params_xi[rows] - self._lo_x[e]) / self._len_x[e]
            v = (params_eta[rows] - self._lo_e[e]) / self._len_e[e]
            bu = eval_bernstein(p, np.clip(u, 0.0, 1.0))
            bv = eval_bernstein(p, np.clip(v, 0.0, 1.0))
            b2 = np.einsum("qa,qb->qab", bu, bv).reshape(len(rows), m)
            nvals = b2 @ self._c2[e].T
            conn = self._conn[e]
            if self._w_flat is not None:
                vw = nvals * self._w_flat[conn]
                nvals = vw / vw.sum(axis=1, keepdims=True)
            out.append({"e": int(e), "conn": conn, "vals": nvals, "rows": rows})
        return out

    # -- dof utilities -----------------------------------------------------

    @property
    def n(self):
        return self.space.n

    @property
    def n_bar(self):
        return self.projected.n

    @property
    def n_dofs(self):
        return 2 * self.space.n

    @staticmethod
    def dof_indices(conn):
        conn = np.asarray(conn)
        out = np.empty(conn.shape + (2,), dtype=np.int64)
        out[..., 0] = 2 * conn
        out[..., 1] = 2 * conn + 1
        return out.reshape(conn.shape[:-1] + (-1,)) if conn.ndim > 1 \
            else out.reshape(-1)

    def edge_functions(self, edge: str):
        """Scalar basis indices whose trace on the given edge is nonzero."""
        nx, ne = self.space.n_xi, self.space.n_eta
        if edge == "xi0":
            return np.arange(ne)
        if edge == "xi1":
            return (nx - 1) * ne + np.arange(ne)
        if edge == "eta0":
            return ne * np.arange(nx)
        if edge == "eta1":
            return ne * np.arange(nx) + ne - 1
        raise ValueError(f"unknown edge {edge!r}")

    def edge_elements(self, edge: str):
        nex = len(self.spans_xi)
        nee = len(self.spans_eta)
        if edge == "xi0":
            return [k for k in range(nee)]
        if edge == "xi1":
            return [(nex - 1) * nee + k for k in range(nee)]
        if edge == "eta0":
            return [i * nee for i in range(nex)]
        if edge == "eta1":
            return [i * nee + nee - 1 for i in range(nex)]
        raise ValueError(f"unknown edge {edge!r}")


def strain_displacement(grads):
    """Plane-strain B-matrices from physical basis gradients of one element.

    ``grads`` has shape (nq, m, 2).  Returns ``(b_std, b_dev, b_vol)`` with
    row layouts (exx, eyy, gxy), (dev_xx, dev_yy, dev_zz, gxy), and the
    volumetric row tr(eps); columns interleave (ux, uy) per basis function.
    """
    nq, m, _ = grads.shape
    gx = grads[:, :, 0]
    gy = grads[:, :, 1]
    b_std = np.zeros((nq, 3, 2 * m))
    b_std[:, 0, 0::2] = gx
    b_std[:, 1, 1::2] = gy
    b_std[:, 2, 0::2] = gy
    b_std[:, 2, 1::2] = gx
    b_dev = np.zeros((nq, 4, 2 * m))
    b_dev[:, 0, 0::2] = 2.0 / 3.0 * gx
    b_dev[:, 0, 1::2] = -1.0 / 3.0 * gy
    b_dev[:, 1, 0::2] = -1.0 / 3.0 * gx
    b_dev[:, 1, 1::2] = 2.0 / 3.0 * gy
    b_dev[:, 2, 0::2] = -1.0 / 3.0 * gx
    b_dev[:, 2, 1::2] = -1.0 / 3.0 * gy
    b_dev[:, 3, 0::2] = gy
    b_dev[:, 3, 1::2] = gx
    b_vol = np.zeros((nq, 2 * m))
    b_vol[:, 0::2] = gx
    b_vol[:, 1::2] = gy
    return b_std, b_dev, b_vol


def element_matrices(disc: Discretization2D, e: int, material: Material):
    """Deviatoric stiffness, pressure mass, and the two volumetric couplings."""
    ev = disc.elements[e]
    w = ev["w"]
    b_std, b_dev, b_vol = strain_displacement(ev["grads"])
    lam, mu, bulk = material.lam, material.mu, material.bulk_like
    d_dev = np.diag([2 * mu, 2 * mu, 2 * mu, mu])
    k_dev = np.einsum("qim,ij,qjn,q->mn", b_dev, d_dev, b_dev, w, optimize=True)
    d_full = np.array([[lam + 2 * mu, lam, 0.0],
                       [lam, lam + 2 * mu, 0.0],
                       [0.0, 0.0, mu]])
    k_std = np.einsum("qim,ij,qjn,q->mn", b_std, d_full, b_std, w, optimize=True)
    mbar0 = ev["nbar"].T @ (ev["nbar"] * w[:, None])
    p_mat = ev["nbar"].T @ (b_vol * w[:, None])
    p_hat = ev["nhat"].T @ (b_vol * w[:, None])
    return {"k_dev": k_dev, "k_std": k_std, "mbar0": mbar0,
            "p": p_mat, "phat": p_hat,
            "mbar": bulk * mbar0}


def _interleave_blocks(kxx, kxy, kyx, kyy):
    """Assemble (E, 2m, 2m) dof blocks from scalar-function blocks."""
    n_el, m, _ = kxx.shape
    out = np.zeros((n_el, 2 * m, 2 * m))
    out[:, 0::2, 0::2] = kxx
    out[:, 0::2, 1::2] = kxy
    out[:, 1::2, 0::2] = kyx
    out[:, 1::2, 1::2] = kyy
    return out


def _interleave_cols(px, py):
    n_el, mb, m = px.shape
    out = np.zeros((n_el, mb, 2 * m))
    out[:, :, 0::2] = px
    out[:, :, 1::2] = py
    return out


def _coo(rows, cols, blocks, shape):
    """Build a csr matrix from stacked per-element blocks."""
    r = np.repeat(rows[:, :, None], cols.shape[1], axis=2).ravel()
    c = np.repeat(cols[:, None, :], rows.shape[1], axis=1).ravel()
    return scipy.sparse.coo_matrix(
        (blocks.ravel(), (r, c)), shape=shape).tocsr()


class ElasticProblem:
    """Discretization, material, and boundary data for one benchmark run."""

    def __init__(self, disc: Discretization2D, material: Material,
                 dirichlet=(), tractions=(), body_force=None):
        self.disc = disc
        self.material = material
        self.dirichlet = list(dirichlet)
        self.tractions = list(tractions)
        self.body_force = body_force
        constrained = set()
        for spec in self.dirichlet:
            edge, comp = spec[0], spec[1]
            if edge not in EDGES or comp not in ("x", "y", "both"):
                raise ValueError(f"bad dirichlet spec {spec!r}")
            comps = ("x", "y") if comp == "both" else (comp,)
            for c in comps:
                constrained.add((edge, c))
        for spec in self.tractions:
            edge = spec[0]
            comps = spec[2] if len(spec) > 2 else ("x", "y")
            if edge not in EDGES:
                raise ValueError(f"bad traction spec {spec!r}")
            for c in comps:
                if (edge, c) in constrained:
                    raise ValueError(
                        f"edge {edge} component {c} has both displacement and "
                        "traction data")

    def dirichlet_dofs(self):
        """Constrained dof indices and their prescribed values."""
        dofs, vals = [], []
        for spec in self.dirichlet:
            edge, comp = spec[0], spec[1]
            value = float(spec[2]) if len(spec) > 2 else 0.0
            funcs = self.disc.edge_functions(edge)
            comps = (0, 1) if comp == "both" else (0 if comp == "x" else 1,)
            for c in comps:
                dofs.append(2 * funcs + c)
                vals.append(np.full(len(funcs), value))
        if not dofs:
            return np.zeros(0, dtype=int), np.zeros(0)
        dofs = np.concatenate(dofs)
        vals = np.concatenate(vals)
        uniq, idx = np.unique(dofs, return_index=True)
        return uniq, vals[idx]


def _assemble_parts(problem: ElasticProblem):
    disc, mat = problem.disc, problem.material
    data = disc._data
    n2, nb = disc.n_dofs, disc.n_bar
    lam, mu = mat.lam, mat.mu
    w = data["w"]
    gx = data["grads"][..., 0]
    gy = data["grads"][..., 1]
    gxx = np.einsum("eqa,eqb,eq->eab", gx, gx, w)
    gyy = np.einsum("eqa,eqb,eq->eab", gy, gy, w)
    gxy = np.einsum("eqa,eqb,eq->eab", gx, gy, w)
    gyx = np.transpose(gxy, (0, 2, 1))

    k_dev = _interleave_blocks(
        4.0 / 3.0 * mu * gxx + mu * gyy,
        -2.0 / 3.0 * mu * gxy + mu * gyx,
        -2.0 / 3.0 * mu * gyx + mu * gxy,
        4.0 / 3.0 * mu * gyy + mu * gxx,
    )
    k_std = _interleave_blocks(
        (lam + 2 * mu) * gxx + mu * gyy,
        lam * gxy + mu * gyx,
        lam * gyx + mu * gxy,
        (lam + 2 * mu) * gyy + mu * gxx,
    )
    nbar, nhat = data["nbar"], data["nhat"]
    mbar0 = np.einsum("eqa,eqb,eq->eab", nbar, nbar, w)
    p_blk = _interleave_cols(np.einsum("eqb,eqa,eq->eba", nbar, gx, w),
                             np.einsum("eqb,eqa,eq->eba", nbar, gy, w))
    phat_blk = _interleave_cols(np.einsum("eqb,eqa,eq->eba", nhat, gx, w),
                                np.einsum("eqb,eqa,eq->eba", nhat, gy, w))

    dof_rows = disc.dof_indices(disc._conn)
    k_dev_m = _coo(dof_rows, dof_rows, k_dev, (n2, n2))
    k_std_m = _coo(dof_rows, dof_rows, k_std, (n2, n2))
    mbar0_m = _coo(disc._conn_b, disc._conn_b, mbar0, (nb, nb))
    p_m = _coo(disc._conn_b, dof_rows, p_blk, (nb, n2))
    phat_m = _coo(disc._conn_b, dof_rows, phat_blk, (nb, n2))

    rhs = np.zeros(n2)
    if problem.body_force is not None:
        fv = np.asarray([[problem.body_force(x, y) for x, y in exy]
                         for exy in data["x"]])
        fe = np.einsum("eqa,eqx,eq->eax", data["vals"], fv, w)
        np.add.at(rhs, dof_rows, fe.reshape(disc.n_el, -1))
    rhs += _traction_rhs(problem)
    return k_dev_m, k_std_m, mbar0_m, p_m, phat_m, rhs


def _traction_rhs(problem: ElasticProblem):
    disc = problem.disc
    rhs = np.zeros(disc.n_dofs)
    rule = gauss_rule(disc.degree + 2)
    for spec in problem.tractions:
        edge, h = spec[0], spec[1]
        run_axis = 1 if edge.startswith("xi") else 0
        fixed = np.array([0.0 if edge.endswith("0") else 1.0])
        for e in disc.edge_elements(edge):
            if run_axis == 1:
                ev = disc.element_eval(e, fixed, rule.points)
                span_len = disc._len_e[e]
            else:
                ev = disc.element_eval(e, rule.points, fixed)
                span_len = disc._len_x[e]
            tangent = ev["J"][:, :, run_axis]
            ds = np.linalg.norm(tangent, axis=1) * span_len * rule.weights
            hv = np.asarray([h(x, y) for x, y in ev["x"]], dtype=float)
            fe = ev["vals"].T @ (hv * ds[:, None])
            rhs[disc.dof_indices(ev["conn"])] += fe.ravel()
    return rhs


def assemble(problem: ElasticProblem, method: str):
    """Stiffness (csr), load vector, and the intermediate coupling matrices."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    k_dev, k_std, mbar0, pmat, phat, rhs = _assemble_parts(problem)
    bulk = problem.material.bulk_like
    if method == "standard":
        k = k_std
    elif method == "sym-bbar":
        k = k_dev + phat.T @ (bulk * mbar0) @ phat
    elif method == "ns-bbar":
        k = k_dev + bulk * (pmat.T @ phat)
    else:
        minv_p = np.linalg.solve(mbar0.toarray(), pmat.toarray())
        k = k_dev + scipy.sparse.csr_matrix(bulk * pmat.toarray().T @ minv_p)
    return k.tocsr(), rhs, (k_dev, mbar0, pmat, phat)


class ElasticSolution:
    """Control displacements plus stress and error evaluators."""

    def __init__(self, problem, method, coeffs, k_matrix, tr_bar=None):
        self.problem = problem
        self.disc = problem.disc
        self.material = problem.material
        self.method = method
        self.coeffs = coeffs
        self._k = k_matrix if not callable(k_matrix) else None
        self._k_factory = k_matrix if callable(k_matrix) else None
        self.tr_bar = tr_bar
        self._stats = None

    @property
    def K(self):
        """Condensed stiffness matrix (built on first use for sparsity stats)."""
        if self._k is None:
            self._k = self._k_factory()
        return self._k

    @property
    def nnz(self):
        if self._stats is None:
            self._stats = bandwidth(self.K)
        return self._stats[1]

    @property
    def matrix_bandwidth(self):
        if self._stats is None:
            self._stats = bandwidth(self.K)
        return self._stats[0]

    @property
    def coupling_width(self):
        return coupling_width(self.K, block=2)

    def _disp_from_eval(self, ev):
        d = self.coeffs[self.disc.dof_indices(ev["conn"])].reshape(-1, 2)
        return ev["vals"] @ d

    def _stress_batched(self, data):
        """Stacked (sxx, syy, sxy, szz) at sample points of ``batched_eval``."""
        mat = self.material
        sel = data["sel"]
        dref = self.coeffs[self.disc.dof_indices(self.disc._conn[sel])]
        d = dref.reshape(len(sel), -1, 2)
        gu = np.einsum("eqak,eax->eqxk", data["grads"], d)
        exx = gu[..., 0, 0]
        eyy = gu[..., 1, 1]
        gxy = gu[..., 0, 1] + gu[..., 1, 0]
        tr = exx + eyy
        if self.tr_bar is None:
            lam, mu = mat.lam, mat.mu
            sxx = lam * tr + 2 * mu * exx
            syy = lam * tr + 2 * mu * eyy
            szz = lam * tr
        else:
            cb = self.disc._conn_b[sel]
            trb = np.einsum("eqa,ea->eq", data["nbar"], self.tr_bar[cb])
            mu, bulk = mat.mu, mat.bulk_like
            sxx = 2 * mu * (exx - tr / 3.0) + bulk * trb
            syy = 2 * mu * (eyy - tr / 3.0) + bulk * trb
            szz = 2 * mu * (-tr / 3.0) + bulk * trb
        sxy = mat.mu * gxy
        return np.stack([sxx, syy, sxy, szz], axis=-1)

    def corner_displacement(self, corner=(1.0, 1.0)):
        """Displacement vector at a parametric corner (interpolatory)."""
        i = self.disc.space.n_xi - 1 if corner[0] > 0.5 else 0
        j = self.disc.space.n_eta - 1 if corner[1] > 0.5 else 0
        a = self.disc.space.index(i, j)
        return self.coeffs[2 * a:2 * a + 2].copy()


def solve_elastic(problem: ElasticProblem, method: str) -> ElasticSolution:
    """Assemble, eliminate Dirichlet dofs (with lift), and solve.

    The projected formulations go through their augmented two-field block
    systems (equivalent to the condensed stiffness, numerically cleaner in
    the nearly incompressible regime); the condensed matrix is available
    lazily for sparsity and bandwidth reporting.
    """
    k_dev, k_std, mbar0, pmat, phat, rhs = _assemble_parts(problem)
    disc = problem.disc
    bulk = problem.material.bulk_like
    fixed, values = problem.dirichlet_dofs()
    free = np.setdiff1d(np.arange(disc.n_dofs), fixed)
    x = np.zeros(disc.n_dofs)
    x[fixed] = values

    def condensed():
        if method == "standard":
            return k_std
        if method == "sym-bbar":
            return (k_dev + phat.T @ (bulk * mbar0) @ phat).tocsr()
        if method == "ns-bbar":
            return (k_dev + bulk * (pmat.T @ phat)).tocsr()
        minv_p = np.linalg.solve(mbar0.toarray(), pmat.toarray())
        return (k_dev + scipy.sparse.csr_matrix(
            bulk * pmat.toarray().T @ minv_p)).tocsr()

    if method == "standard":
        lift = k_std[np.ix_(free, fixed)] @ values if len(fixed) else 0.0
        x[free] = solve(k_std[np.ix_(free, free)], rhs[free] - lift)
        return ElasticSolution(problem, method, x, k_std, None)
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")

    nb = disc.n_bar
    if method == "ns-bbar":
        coupling_top = pmat.T
        coupling_bottom = bulk * phat
        lower_right = -scipy.sparse.identity(nb, format="csr")
        tr_scale = 1.0 / bulk
    elif method == "sym-bbar":
        coupling_top = (phat.T @ (bulk * mbar0)).tocsr()
        coupling_bottom = phat
        lower_right = -scipy.sparse.identity(nb, format="csr")
        tr_scale = 1.0
    else:  # global-bbar
        coupling_top = pmat.T
        coupling_bottom = bulk * pmat
        lower_right = -mbar0
        tr_scale = 1.0 / bulk
    all_b = np.arange(nb)
    aug = scipy.sparse.vstack([
        scipy.sparse.hstack([k_dev[np.ix_(free, free)],
                             coupling_top[np.ix_(free, all_b)]]),
        scipy.sparse.hstack([coupling_bottom[np.ix_(all_b, free)],
                             lower_right]),
    ]).tocsr()
    rhs_aug = np.concatenate([rhs[free], np.zeros(nb)])
    if len(fixed) and np.any(values != 0.0):
        rhs_aug[:len(free)] -= k_dev[np.ix_(free, fixed)] @ values
        rhs_aug[len(free):] -= coupling_bottom[np.ix_(all_b, fixed)] @ values
    sol = solve(aug, rhs_aug)
    x[free] = sol[:len(free)]
    tr_bar = tr_scale * sol[len(free):]
    return ElasticSolution(problem, method, x, condensed, tr_bar)


def solve_elastic_mixed(problem: ElasticProblem):
    """Two-field (displacement, pressure) solve of the non-symmetric variant.

    Pressure trial functions are the projected splines, pressure tests their
    duals; eliminating the pressure reproduces the condensed system.
    """
    k_dev, _, mbar0, pmat, phat, rhs = _assemble_parts(problem)
    disc = problem.disc
    bulk = problem.material.bulk_like
    fixed, values = problem.dirichlet_dofs()
    if len(fixed) and np.any(values != 0.0):
        raise NotImplementedError("mixed solve supports homogeneous constraints")
    free = np.setdiff1d(np.arange(disc.n_dofs), fixed)
    nb = disc.n_bar
    top = scipy.sparse.hstack([k_dev[np.ix_(free, free)],
                               -pmat.T[np.ix_(free, np.arange(nb))]])
    bottom = scipy.sparse.hstack([
        -phat[np.ix_(np.arange(nb), free)],
        -(1.0 / bulk) * scipy.sparse.identity(nb, format="csr"),
    ])
    k_mix = scipy.sparse.vstack([top, bottom]).tocsr()
    rhs_mix = np.concatenate([rhs[free], np.zeros(nb)])
    sol = solve(k_mix, rhs_mix)
    x = np.zeros(disc.n_dofs)
    x[free] = sol[:len(free)]
    pressure = sol[len(free):]
    k_cond = (k_dev + bulk * (pmat.T @ phat)).tocsr()
    tr_bar = phat @ x
    return ElasticSolution(problem, "ns-bbar", x, k_cond, tr_bar), pressure


# -- benchmark problems ----------------------------------------------------


def exact_plate_stresses(r, theta, tension, r_inner):
    """Polar stresses of the uniaxially loaded infinite plate with a hole."""
    r = np.asarray(r, dtype=float)
    if np.any(r < r_inner * (1.0 - 1e-12)):
        raise ValueError("radius inside the hole")
    t = tension
    f = (r_inner / r) ** 2
    g = (r_inner / r) ** 4
    c2 = np.cos(2 * np.asarray(theta))
    s2 = np.sin(2 * np.asarray(theta))
    srr = 0.5 * t * (1 - f) + 0.5 * t * (1 - 4 * f + 3 * g) * c2
    stt = 0.5 * t * (1 + f) - 0.5 * t * (1 + 3 * g) * c2
    srt = -0.5 * t * (1 + 2 * f - 3 * g) * s2
    return srr, stt, srt


def exact_plate_displacement(x, y, tension, r_inner, material: Material):
    """Closed-form displacement of the plate-with-hole solution (plane strain).

    The field satisfies the traction-free hole, the far-field tension, and
    the two symmetry conditions used by the quarter model; differentiating
    it and applying the constitutive law reproduces the exact stresses
    (verified in the test suite by a finite-difference oracle).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mu = material.mu
    kap = 3.0 - 4.0 * material.poisson
    t, rr = tension, r_inner
    r = np.hypot(x, y)
    if np.any(r < rr * (1.0 - 1e-12)):
        raise ValueError("radius inside the hole")
    th = np.arctan2(y, x)
    c, s = np.cos(th), np.sin(th)
    c3, s3 = np.cos(3 * th), np.sin(3 * th)
    ux = t * rr / (8 * mu) * ((r / rr) * (kap + 1) * c
                              + 2 * (rr / r) * ((1 + kap) * c + c3)
                              - 2 * (rr / r) ** 3 * c3)
    uy = t * rr / (8 * mu) * ((r / rr) * (kap - 3) * s
                              + 2 * (rr / r) * ((1 - kap) * s + s3)
                              - 2 * (rr / r) ** 3 * s3)
    return ux, uy


def plate_stress_cartesian(x, y, tension, r_inner):
    """Cartesian (sxx, syy, sxy) of the exact plate-with-hole solution."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    theta = np.arctan2(y, x)
    srr, stt, srt = exact_plate_stresses(r, theta, tension, r_inner)
    c, s = np.cos(theta), np.sin(theta)
    sxx = srr * c ** 2 + stt * s ** 2 - 2 * srt * s * c
    syy = srr * s ** 2 + stt * c ** 2 + 2 * srt * s * c
    sxy = (srr - stt) * s * c + srt * (c ** 2 - s ** 2)
    return sxx, syy, sxy


def plate_problem(material: Material, degree: int, n_per_side: int,
                  tension: float = 10.0, r_inner: float = 1.0,
                  r_outer: float = 4.0) -> ElasticProblem:
    """Quarter-annulus model: symmetry on the straight edges, exact traction
    on the outer arc, traction-free hole."""
    disc = Discretization2D(quarter_annulus(r_inner, r_outer), degree, n_per_side)

    def outer_traction(x, y):
        r = math.hypot(x, y)
        sxx, syy, sxy = plate_stress_cartesian(x, y, tension, r_inner)
        nx, ny = x / r, y / r
        return (sxx * nx + sxy * ny, sxy * nx + syy * ny)

    return ElasticProblem(
        disc, material,
        dirichlet=[("eta0", "y"), ("eta1", "x")],
        tractions=[("xi1", outer_traction)],
    )


def cook_problem(material: Material, degree: int, n_per_side: int,
                 shear_load: float = 6.25) -> ElasticProblem:
    """Tapered membrane clamped on the left, sheared on the right edge."""
    disc = Discretization2D(cook_quad(), degree, n_per_side)
    return ElasticProblem(
        disc, material,
        dirichlet=[("xi0", "both")],
        tractions=[("xi1", lambda x, y: (0.0, shear_load))],
    )


# -- error measures --------------------------------------------------------


def stress_errors(sol: ElasticSolution, tension: float, r_inner: float,
                  rule=None, sample: int = 4):
    """Relative stress L2, complementary energy, and max sigma_xx errors.

    The exact fields are those of the plate-with-hole solution; the max
    pointwise sigma_xx error is taken over a closed tensor sample grid per
    element and reported relative to the maximum exact sigma_xx (3 T).
    """
    disc = sol.disc
    mat = sol.material
    rule = rule or gauss_rule(disc.degree + 3)
    nu, e_mod = mat.poisson, mat.youngs_modulus

    def exact_voigt(xy):
        sxx, syy, sxy = plate_stress_cartesian(xy[..., 0], xy[..., 1],
                                               tension, r_inner)
        szz = nu * (sxx + syy)
        return np.stack([sxx, syy, sxy, szz], axis=-1)

    def frob(s):
        return (s[..., 0] ** 2 + s[..., 1] ** 2 + s[..., 3] ** 2
                + 2 * s[..., 2] ** 2)

    def comp_energy(s):
        ss = frob(s)
        tr = s[..., 0] + s[..., 1] + s[..., 3]
        return (1 + nu) / e_mod * ss - nu / e_mod * tr ** 2

    data = disc.batched_eval(rule.points, rule.points, weights=rule.weights,
                             need_bbar=True)
    s_h = sol._stress_batched(data)
    s_ex = exact_voigt(data["x"])
    diff = s_ex - s_h
    w = data["w"]
    num_l2 = float(np.sum(frob(diff) * w))
    den_l2 = float(np.sum(frob(s_ex) * w))
    num_en = float(np.sum(comp_energy(diff) * w))
    den_en = float(np.sum(comp_energy(s_ex) * w))

    grid = np.linspace(0.0, 1.0, sample)
    sdata = disc.batched_eval(grid, grid, need_bbar=True)
    sh = sol._stress_batched(sdata)
    sx = exact_voigt(sdata["x"])
    max_err = float(np.abs(sx[..., 0] - sh[..., 0]).max())
    return {
        "err_stress": math.sqrt(num_l2 / den_l2),
        "err_energy": math.sqrt(num_en / den_en),
        "max_sxx_err_rel": max_err / (3.0 * tension),
    }


def displacement_error(sol: ElasticSolution, reference=None, rule=None,
                       exact=None):
    """Relative L2 displacement error.

    ``exact`` is a callable (x, y) -> (ux, uy); alternatively ``reference``
    is an overkill :class:`ElasticSolution` on the same parametric domain.
    """
    if (reference is None) == (exact is None):
        raise ValueError("give exactly one of reference or exact")
    disc = sol.disc
    rule = rule or gauss_rule(disc.degree + 3)
    data = disc.batched_eval(rule.points, rule.points, weights=rule.weights)
    d = sol.coeffs[disc.dof_indices(disc._conn)].reshape(disc.n_el, -1, 2)
    uh = np.einsum("eqa,eax->eqx", data["vals"], d)
    if exact is not None:
        ux, uy = exact(data["x"][..., 0], data["x"][..., 1])
        uref = np.stack([ux, uy], axis=-1)
    else:
        uref = np.empty_like(uh)
        npts = uh.shape[1]
        for e in range(disc.n_el):
            pxi, peta = disc.element_params(e, rule.points, rule.points)
            for group in reference.disc.eval_scattered(pxi, peta):
                uref[e, group["rows"]] = reference._disp_from_eval(group)
    diff = uh - uref
    w = data["w"]
    num = float(np.sum((diff ** 2).sum(axis=-1) * w))
    den = float(np.sum((uref ** 2).sum(axis=-1) * w))
    return math.sqrt(num / den)


# -- inf-sup test ----------------------------------------------------------


def _h1_scalar_matrix(disc: Discretization2D):
    data = disc._data
    w = data["w"]
    blocks = (np.einsum("eqa,eqb,eq->eab", data["vals"], data["vals"], w)
              + np.einsum("eqak,eqbk,eq->eab", data["grads"], data["grads"], w))
    return _coo(disc._conn, disc._conn, blocks, (disc.n, disc.n))


def infsup_beta(disc: Discretization2D, pair: str, clamp_edge: str = "eta0",
                zero_tol: float = 1e-10) -> float:
    """Numerical inf-sup constant of the volumetric coupling.

    ``pair`` selects the pressure pairing: "global" tests the divergence
    against the projected splines directly, "ns" tests its local-projection
    image (the constraint actually enforced by the non-symmetric variant,
    paired with the same pressure space), and "equal" puts the pressure in
    the displacement-degree space.  The displacement is measured in the
    full H1 norm, the pressure in L2; the clamped edge is removed from the
    displacement space.
    """
    if pair not in ("global", "ns", "equal"):
        raise ValueError(f"unknown pair {pair!r}")
    data = disc._data
    w = data["w"]
    gx = data["grads"][..., 0]
    gy = data["grads"][..., 1]
    n2 = disc.n_dofs
    dof_cols = disc.dof_indices(disc._conn)
    if pair == "equal":
        nb = disc.n
        rows = disc._conn
        pvals = data["vals"]
    else:
        nb = disc.n_bar
        rows = disc._conn_b
        pvals = data["nbar"] if pair == "global" else data["nhat"]
    b_blocks = _interleave_cols(np.einsum("eqb,eqa,eq->eba", pvals, gx, w),
                                np.einsum("eqb,eqa,eq->eba", pvals, gy, w))
    b = _coo(rows, dof_cols, b_blocks, (nb, n2))
    normvals = data["vals"] if pair == "equal" else data["nbar"]
    sp = _coo(rows, rows,
              np.einsum("eqa,eqb,eq->eab", normvals, normvals, w), (nb, nb))
    if pair == "ns":
        # coupling through the projector image, in the L2 pairing
        b = (sp @ b).tocsr()

    s_scalar = _h1_scalar_matrix(disc)
    s_u = scipy.sparse.kron(s_scalar, scipy.sparse.identity(2)).tocsr()
    clamped = disc.edge_functions(clamp_edge)
    fixed = np.concatenate([2 * clamped, 2 * clamped + 1])
    free = np.setdiff1d(np.arange(n2), fixed)
    b_free = b[:, free].toarray()
    s_free = s_u[np.ix_(free, free)].toarray()
    a = b_free @ np.linalg.solve(s_free, b_free.T)
    lam = smallest_nonzero_gen_eig(a, sp.toarray(), zero_tol=zero_tol)
    return math.sqrt(lam)
