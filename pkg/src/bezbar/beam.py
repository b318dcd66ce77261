"""Timoshenko cantilever in four flavors: standard displacement, global
L2-projected shear, and the symmetric / non-symmetric locally projected
(Bezier B-bar) formulations, with the closed-form sinusoidal-load solution
and error/convergence studies.

Unknowns are the transverse displacement w and the cross-section rotation
phi, discretized by the same degree-p spline basis and interleaved in the
dof vector as (w_0, phi_0, w_1, phi_1, ...).  The projected shear strain
lives in the degree p-1 space sharing the interior knots.
"""

import math

import numpy as np
import scipy.sparse

from .extraction import (
    LineGeometry,
    build_extraction,
    default_rule,
    duals_from_element_data,
)
from .numerics import (
    SparseMatrix,
    bandwidth,
    coupling_width,
    gauss_rule,
    solve,
)
from .splines import KnotVector, SplineSpace, eval_bernstein

__all__ = [
    "METHODS",
    "BeamProblem",
    "BeamDiscretization",
    "BeamSolution",
    "sinusoidal_load",
    "analytical_solution",
    "element_matrices_symmetric",
    "assemble_beam",
    "solve_beam",
    "solve_beam_mixed",
    "solution_errors",
    "beam_study",
    "slenderness_study",
]

#: supported formulations
METHODS = ("standard", "global-bbar", "sym-bbar", "ns-bbar")


class BeamProblem:
    """Cantilever geometry, section, material, and load data."""

    def __init__(self, length=10.0, width=1.0, thickness=0.01,
                 youngs_modulus=1e9, poisson=0.3, shear_correction=5.0 / 6.0,
                 load=None, tip_force=0.0, tip_moment=0.0):
        if min(length, width, thickness, youngs_modulus) <= 0.0:
            raise ValueError("length, section, and modulus must be positive")
        if not 0.0 <= poisson < 0.5:
            raise ValueError("poisson ratio must lie in [0, 1/2)")
        if not 0.0 < shear_correction <= 1.0:
            raise ValueError("shear correction must lie in (0, 1]")
        self.length = float(length)
        self.width = float(width)
        self.thickness = float(thickness)
        self.youngs_modulus = float(youngs_modulus)
        self.poisson = float(poisson)
        self.shear_correction = float(shear_correction)
        self.load = load if load is not None else sinusoidal_load(length)
        self.tip_force = float(tip_force)
        self.tip_moment = float(tip_moment)

    @property
    def area(self):
        return self.width * self.thickness

    @property
    def inertia(self):
        return self.width * self.thickness ** 3 / 12.0

    @property
    def shear_modulus(self):
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson))

    @property
    def slenderness(self):
        return self.length / self.thickness

    def with_slenderness(self, ratio):
        """Same beam with the thickness set so that length/thickness = ratio."""
        return BeamProblem(self.length, self.width, self.length / ratio,
                           self.youngs_modulus, self.poisson,
                           self.shear_correction, self.load,
                           self.tip_force, self.tip_moment)


def sinusoidal_load(length):
    """Distributed load f(x) = sin(pi x / length)."""
    return lambda x: np.sin(np.pi * x / length)


def analytical_solution(problem: BeamProblem, x):
    """Closed-form (w, phi, M, Q) for the sinusoidal load on a clamped-free beam.

    Valid for f(x) = sin(pi x / l) with zero tip force and moment.  The
    returned shear force convention satisfies Q(x) = -sGA (w' - phi).
    """
    x = np.asarray(x, dtype=float)
    l = problem.length
    ei = problem.youngs_modulus * problem.inertia
    sga = (problem.shear_correction * problem.shear_modulus * problem.area)
    pi = math.pi
    s = np.sin(pi * x / l)
    c = np.cos(pi * x / l)
    w = (ei * (6 * pi ** 2 * l ** 2 * s + 6 * pi ** 3 * l * x)
         + sga * (6 * l ** 4 * s - 6 * pi * l ** 3 * x
                  + 3 * pi ** 3 * l ** 2 * x ** 2 - pi ** 3 * l * x ** 3)) \
        / (6 * pi ** 4 * sga * ei)
    phi = (2 * l ** 3 * c - 2 * l ** 3 + 2 * pi ** 2 * l ** 2 * x
           - pi ** 2 * l * x ** 2) / (2 * pi ** 3 * ei)
    moment = (l ** 2 * s - pi * l ** 2 + pi * l * x) / pi ** 2
    shear = (-l * c - l) / pi
    return w, phi, moment, shear


class BeamDiscretization:
    """Spline spaces, extraction/dual operators, and per-element sample data."""

    def __init__(self, problem: BeamProblem, degree: int, n_elements: int,
                 rule=None):
        if degree < 1:
            raise ValueError("degree must be at least 1")
        self.problem = problem
        self.degree = degree
        self.space = SplineSpace.uniform(degree, n_elements)
        interior = self.space.kv.knots[degree + 1:-(degree + 1)]
        p_bar = degree - 1
        knots_bar = np.concatenate([np.zeros(p_bar + 1), interior, np.ones(p_bar + 1)])
        self.projected = SplineSpace(KnotVector(p_bar, knots_bar))
        self.geometry = LineGeometry(0.0, problem.length)
        self.rule = rule or default_rule(degree)

        self.extraction = build_extraction(self.space)
        self.extraction_bar = build_extraction(self.projected)

        b = eval_bernstein(degree, self.rule.points)
        db = eval_bernstein(degree, self.rule.points, deriv_order=1)
        bbar = eval_bernstein(p_bar, self.rule.points)
        self.elements = []
        wq_list = []
        for e, (lo, hi) in enumerate(self.space.element_spans):
            h = (hi - lo) * self.geometry.length
            xq = self.geometry.map(lo + (hi - lo) * self.rule.points)
            wq = self.rule.weights * h
            self.elements.append({
                "h": h, "xq": xq, "wq": wq,
                "B": b, "dB": db / h, "Bbar": bbar,
            })
            wq_list.append(wq)
        self.duals_bar = duals_from_element_data(
            [x.connectivity for x in self.extraction_bar],
            self.extraction_bar, [bbar] * n_elements, wq_list,
            self.projected.n)

    @property
    def n(self):
        return self.space.n

    @property
    def n_bar(self):
        return self.projected.n

    @property
    def n_dofs(self):
        return 2 * self.space.n

    def dof_indices(self, conn):
        """Interleaved (w, phi) dof indices for scalar connectivity."""
        return np.column_stack([2 * conn, 2 * conn + 1]).ravel()


def _bern_strain_rows(elem, degree):
    """Bernstein-basis bending and shear strain-displacement arrays (nq, 2m)."""
    nq, m = elem["B"].shape
    bk = np.zeros((nq, 2 * m))
    bg = np.zeros((nq, 2 * m))
    bk[:, 1::2] = -elem["dB"]
    bg[:, 0::2] = elem["dB"]
    bg[:, 1::2] = -elem["B"]
    return bk, bg


def element_matrices_symmetric(disc: BeamDiscretization, e: int):
    """Element bending stiffness, projected shear mass, and dual coupling.

    Returns (K_b, M_bar, P_hat) where K_b and the coupling carry the
    interleaved (w, phi) dof ordering and M_bar includes the shear modulus
    factor sGA.
    """
    pr = disc.problem
    elem = disc.elements[e]
    ext = disc.extraction[e]
    ext_bar = disc.extraction_bar[e]
    dual = disc.duals_bar[e]
    wq = elem["wq"]
    bk, bg = _bern_strain_rows(elem, disc.degree)
    c2 = np.kron(ext.C, np.eye(2))
    ei = pr.youngs_modulus * pr.inertia
    sga = pr.shear_correction * pr.shear_modulus * pr.area
    kb = ei * c2 @ (bk.T @ (bk * wq[:, None])) @ c2.T
    mbar = sga * ext_bar.C @ (elem["Bbar"].T @ (elem["Bbar"] * wq[:, None])) @ ext_bar.C.T
    phat = dual.D @ (elem["Bbar"].T @ (bg * wq[:, None])) @ c2.T
    return kb, mbar, phat


def _element_all(disc, e):
    """All per-element arrays used by the four formulations."""
    pr = disc.problem
    elem = disc.elements[e]
    ext = disc.extraction[e]
    ext_bar = disc.extraction_bar[e]
    dual = disc.duals_bar[e]
    wq = elem["wq"]
    bk, bg = _bern_strain_rows(elem, disc.degree)
    c2 = np.kron(ext.C, np.eye(2))
    ei = pr.youngs_modulus * pr.inertia
    sga = pr.shear_correction * pr.shear_modulus * pr.area
    gram_bar = elem["Bbar"].T @ (elem["Bbar"] * wq[:, None])
    cross = elem["Bbar"].T @ (bg * wq[:, None])
    return {
        "kb": ei * c2 @ (bk.T @ (bk * wq[:, None])) @ c2.T,
        "ks_std": sga * c2 @ (bg.T @ (bg * wq[:, None])) @ c2.T,
        "mbar0": ext_bar.C @ gram_bar @ ext_bar.C.T,
        "p": ext_bar.C @ cross @ c2.T,
        "phat": dual.D @ cross @ c2.T,
        "conn": ext.connectivity,
        "conn_bar": ext_bar.connectivity,
    }


def _assemble_parts(disc):
    n, nb = disc.n, disc.n_bar
    kb = SparseMatrix(2 * n, 2 * n)
    ks = SparseMatrix(2 * n, 2 * n)
    mbar0 = SparseMatrix(nb, nb)
    pmat = SparseMatrix(nb, 2 * n)
    phat = SparseMatrix(nb, 2 * n)
    rhs = np.zeros(2 * n)
    f = disc.problem.load
    for e in range(disc.space.n_elements):
        arr = _element_all(disc, e)
        dofs = disc.dof_indices(arr["conn"])
        kb.add_block(dofs, dofs, arr["kb"])
        ks.add_block(dofs, dofs, arr["ks_std"])
        mbar0.add_block(arr["conn_bar"], arr["conn_bar"], arr["mbar0"])
        pmat.add_block(arr["conn_bar"], dofs, arr["p"])
        phat.add_block(arr["conn_bar"], dofs, arr["phat"])
        elem = disc.elements[e]
        nvals = elem["B"] @ disc.extraction[e].C.T
        fe = nvals.T @ (np.asarray(f(elem["xq"]), dtype=float) * elem["wq"])
        rhs[2 * arr["conn"]] += fe
    rhs[2 * (n - 1)] += disc.problem.tip_force
    rhs[2 * (n - 1) + 1] += disc.problem.tip_moment
    return kb.tocsr(), ks.tocsr(), mbar0.tocsr(), pmat.tocsr(), phat.tocsr(), rhs


def assemble_beam(disc: BeamDiscretization, method: str):
    """Assembled stiffness (csr) and load vector for one formulation."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    pr = disc.problem
    sga = pr.shear_correction * pr.shear_modulus * pr.area
    kb, ks_std, mbar0, pmat, phat, rhs = _assemble_parts(disc)
    if method == "standard":
        k = kb + ks_std
    elif method == "sym-bbar":
        k = kb + phat.T @ (sga * mbar0) @ phat
    elif method == "ns-bbar":
        k = kb + sga * (pmat.T @ phat)
    else:  # global-bbar: dense projector through the inverse mass
        minv_p = np.linalg.solve(mbar0.toarray(), pmat.toarray())
        k = kb + scipy.sparse.csr_matrix(sga * pmat.toarray().T @ minv_p)
    return k.tocsr(), rhs, (mbar0, pmat, phat)


class BeamSolution:
    """Control values of both fields plus evaluators for derived quantities."""

    def __init__(self, disc, method, coeffs, k_matrix, gamma_bar=None):
        self.disc = disc
        self.method = method
        self.coeffs = coeffs
        self.w_coeffs = coeffs[0::2]
        self.phi_coeffs = coeffs[1::2]
        self.K = k_matrix
        self.gamma_bar = gamma_bar
        self.bandwidth, self.nnz = bandwidth(k_matrix)
        self.coupling_width = coupling_width(k_matrix, block=2)

    def _field(self, coeffs, x, deriv=0):
        sp = self.disc.space
        length = self.disc.problem.length
        out = np.empty(np.shape(x))
        for idx, xv in np.ndenumerate(np.asarray(x, dtype=float)):
            first, ders = sp.active_values(min(max(xv / length, 0.0), 1.0), deriv)
            val = ders[deriv] @ coeffs[first:first + sp.degree + 1]
            out[idx] = val / length ** deriv
        return out if out.shape else float(out)

    def w(self, x):
        return self._field(self.w_coeffs, x)

    def phi(self, x):
        return self._field(self.phi_coeffs, x)

    def moment(self, x):
        ei = self.disc.problem.youngs_modulus * self.disc.problem.inertia
        return -ei * self._field(self.phi_coeffs, x, deriv=1)

    def shear(self, x):
        """Shear force -sGA gamma, using the projected strain for B-bar runs."""
        pr = self.disc.problem
        sga = pr.shear_correction * pr.shear_modulus * pr.area
        if self.gamma_bar is None:
            gamma = self._field(self.w_coeffs, x, deriv=1) - self.phi(x)
            return -sga * gamma
        sp = self.disc.projected
        out = np.empty(np.shape(x))
        for idx, xv in np.ndenumerate(np.asarray(x, dtype=float)):
            first, ders = sp.active_values(min(max(xv / pr.length, 0.0), 1.0), 0)
            out[idx] = ders[0] @ self.gamma_bar[first:first + sp.degree + 1]
        gamma = out if out.shape else float(out)
        return -sga * gamma


def _fixed_dofs():
    # clamped end: first control value of each field (open knots interpolate x=0)
    return np.array([0, 1])


def solve_beam(problem: BeamProblem, degree: int, n_elements: int,
               method: str, disc: BeamDiscretization | None = None) -> BeamSolution:
    """Assemble, apply the clamp, and solve one formulation.

    The projected formulations are solved through their augmented two-field
    block systems, which are algebraically equivalent to the condensed
    stiffness but avoid the cancellation-prone matrix products; the
    condensed matrix is still assembled and attached for sparsity and
    bandwidth reporting.
    """
    disc = disc or BeamDiscretization(problem, degree, n_elements)
    k, rhs, (mbar0, pmat, phat) = assemble_beam(disc, method)
    pr = disc.problem
    sga = pr.shear_correction * pr.shear_modulus * pr.area
    fixed = _fixed_dofs()
    free = np.setdiff1d(np.arange(disc.n_dofs), fixed)
    x = np.zeros(disc.n_dofs)
    if method == "standard":
        x[free] = solve(k[np.ix_(free, free)], rhs[free])
        return BeamSolution(disc, method, x, k, None)

    kb = _assemble_parts(disc)[0]
    nb = disc.n_bar
    if method == "ns-bbar":
        coupling_top = pmat.T
        coupling_bottom = sga * phat
        lower_right = -scipy.sparse.identity(nb, format="csr")
        gamma_scale = 1.0 / sga
    elif method == "sym-bbar":
        coupling_top = (phat.T @ (sga * mbar0)).tocsr()
        coupling_bottom = phat
        lower_right = -scipy.sparse.identity(nb, format="csr")
        gamma_scale = 1.0
    else:  # global-bbar
        coupling_top = pmat.T
        coupling_bottom = sga * pmat
        lower_right = -mbar0
        gamma_scale = 1.0 / sga
    aug = scipy.sparse.vstack([
        scipy.sparse.hstack([kb[np.ix_(free, free)],
                             coupling_top[np.ix_(free, np.arange(nb))]]),
        scipy.sparse.hstack([coupling_bottom[np.ix_(np.arange(nb), free)],
                             lower_right]),
    ]).tocsr()
    sol = solve(aug, np.concatenate([rhs[free], np.zeros(nb)]))
    x[free] = sol[:len(free)]
    gamma_bar = gamma_scale * sol[len(free):]
    return BeamSolution(disc, method, x, k, gamma_bar)


def solve_beam_mixed(problem: BeamProblem, degree: int, n_elements: int,
                     disc: BeamDiscretization | None = None):
    """Solve the two-field (displacement, shear stress) block system.

    The stress trial space is the projected spline space; the stress test
    space is its dual basis.  Returns the displacement solution and the
    stress control values; condensing the stress reproduces the
    non-symmetric stiffness exactly.
    """
    disc = disc or BeamDiscretization(problem, degree, n_elements)
    kb, _, mbar0, pmat, phat, rhs = _assemble_parts(disc)
    sga = (problem.shear_correction * problem.shear_modulus * problem.area)
    n2, nb = disc.n_dofs, disc.n_bar
    fixed = _fixed_dofs()
    free = np.setdiff1d(np.arange(n2), fixed)
    top = scipy.sparse.hstack([kb[np.ix_(free, free)], pmat.T[np.ix_(free, np.arange(nb))]])
    bottom = scipy.sparse.hstack([
        sga * phat[np.ix_(np.arange(nb), free)],
        -scipy.sparse.identity(nb, format="csr"),
    ])
    k_mix = scipy.sparse.vstack([top, bottom]).tocsr()
    rhs_mix = np.concatenate([rhs[free], np.zeros(nb)])
    sol = solve(k_mix.toarray(), rhs_mix)
    x = np.zeros(n2)
    x[free] = sol[:len(free)]
    tau = sol[len(free):]
    gamma_bar = tau / sga
    k_cond = (kb + sga * (pmat.T @ phat)).tocsr()
    return BeamSolution(disc, "ns-bbar", x, k_cond, gamma_bar), tau


def solution_errors(sol: BeamSolution, rule_points: int | None = None):
    """Normalized L2 errors of (w, phi, M, Q) against the closed-form fields."""
    disc = sol.disc
    pr = disc.problem
    npts = rule_points or (disc.degree + 3)
    rule = gauss_rule(npts)
    num = np.zeros(4)
    den = np.zeros(4)
    for lo, hi in disc.space.element_spans:
        xq = pr.length * (lo + (hi - lo) * rule.points)
        wq = rule.weights * (hi - lo) * pr.length
        exact = analytical_solution(pr, xq)
        approx = (sol.w(xq), sol.phi(xq), sol.moment(xq), sol.shear(xq))
        for k in range(4):
            num[k] += np.sum((approx[k] - exact[k]) ** 2 * wq)
            den[k] += np.sum(exact[k] ** 2 * wq)
    err = np.sqrt(num / den)
    return {"err_w": err[0], "err_phi": err[1], "err_M": err[2], "err_Q": err[3]}


def beam_study(problem: BeamProblem, methods, degrees, meshes):
    """Error table over (method, degree, mesh); one row dict per run."""
    rows = []
    for p in degrees:
        for n_el in meshes:
            disc = BeamDiscretization(problem, p, n_el)
            for method in methods:
                sol = solve_beam(problem, p, n_el, method, disc=disc)
                row = {"method": method, "p": p, "n_elem": n_el,
                       "dofs": disc.n_dofs}
                row.update(solution_errors(sol))
                row["bandwidth_sym_measure"] = sol.coupling_width
                row["nnz"] = sol.nnz
                rows.append(row)
    return rows


def slenderness_study(problem: BeamProblem, ratios, methods, degree: int = 2,
                      dof_target: int = 32):
    """Fixed-dof sweep over length/thickness ratios.

    Rows are emitted for both readings of the dof budget: total dofs across
    the two fields, and dofs per field.
    """
    rows = []
    for convention in ("total", "per_field"):
        n_funcs = dof_target // 2 if convention == "total" else dof_target
        n_el = n_funcs - degree
        if n_el < 1:
            raise ValueError("dof target too small for the requested degree")
        for ratio in ratios:
            prob = problem.with_slenderness(ratio)
            disc = BeamDiscretization(prob, degree, n_el)
            for method in methods:
                sol = solve_beam(prob, degree, n_el, method, disc=disc)
                row = {"method": method, "p": degree, "n_elem": n_el,
                       "dof_convention": convention,
                       "dofs_total": disc.n_dofs,
                       "dofs_per_field": disc.n,
                       "slenderness": ratio}
                row.update(solution_errors(sol))
                rows.append(row)
    return rows
