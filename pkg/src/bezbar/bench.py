"""Study orchestration: config files, CSV emission, and rate fitting.

Configs are JSON trees validated against a per-study schema; unknown keys
are rejected so a study is fully reproducible from its file.  CSV output
uses full double precision and a fixed column order, with the wall-time
column last so reruns are byte-identical apart from it.
"""

import concurrent.futures
import json
import math
import time

import numpy as np

from . import beam as beam_mod
from . import elasticity2d as el2d
from .extraction import LineGeometry, build_dual_extraction, build_extraction
from .numerics import dump_pattern, gauss_rule
from .projection import bezier_project, global_l2_project
from .splines import SplineSpace, eval_bspline

__all__ = ["ConfigError", "load_config", "fit_rate", "run", "write_csv"]

METHOD_TOKENS = beam_mod.METHODS


class ConfigError(Exception):
    """Raised for malformed, unknown, or inconsistent config content."""


def fit_rate(errors, h_values):
    """Least-squares slope of log(error) vs log(h) over the finest 3 meshes."""
    errors = np.asarray(errors, dtype=float)
    h = np.asarray(h_values, dtype=float)
    if len(errors) < 3 or len(errors) != len(h):
        raise ValueError("need at least 3 (h, error) pairs")
    if np.any(errors <= 0.0) or np.any(h <= 0.0):
        raise ValueError("errors and mesh sizes must be positive")
    order = np.argsort(h)[:3]
    return float(np.polyfit(np.log(h[order]), np.log(errors[order]), 1)[0])


# -- config schema ---------------------------------------------------------

_BEAM_KEYS = {"length": float, "width": float, "thickness": float,
              "youngs_modulus": float, "poisson": float,
              "shear_correction": float}
_MATERIAL_KEYS = {"youngs_modulus": float, "poisson": float}

_SCHEMAS = {
    "project": {
        "kind": str, "seed": int, "degree": int, "n_elements": int,
        "samples": int,
    },
    "beam-study": {
        "kind": str, "seed": int, "methods": list, "degrees": list,
        "meshes": list, "beam": _BEAM_KEYS, "slenderness": list,
        "dof_target": int,
    },
    "elasticity-study": {
        "kind": str, "seed": int, "problem": str, "methods": list,
        "degrees": list, "meshes": list, "material": _MATERIAL_KEYS,
        "plate": {"tension": float, "r_inner": float, "r_outer": float},
        "cook": {"shear_load": float},
        "reference": {"degree_boost": int, "mesh": int},
    },
    "infsup": {
        "kind": str, "seed": int, "pairs": list, "degree": int, "meshes": list,
    },
    "spy": {
        "kind": str, "seed": int, "degree": int, "n_elements": int,
        "methods": list,
    },
}


def _check_keys(tree, schema, path=""):
    for key, val in tree.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key: {here}")
        want = schema[key]
        if isinstance(want, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{here} must be a table")
            _check_keys(val, want, here)
        elif want is float:
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"{here} must be a number")
        elif want is int:
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"{here} must be an integer")
        elif not isinstance(val, want):
            raise ConfigError(f"{here} must be of type {want.__name__}")


def load_config(path, expect_kind=None):
    """Read and validate a JSON study config."""
    try:
        with open(path) as fh:
            tree = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"config parse error at line {err.lineno}, column {err.colno}: "
            f"{err.msg}") from err
    if not isinstance(tree, dict):
        raise ConfigError("config root must be an object")
    kind = tree.get("kind")
    if kind not in _SCHEMAS:
        raise ConfigError(f"unknown or missing study kind: {kind!r}")
    if expect_kind is not None and kind != expect_kind:
        raise ConfigError(f"config kind {kind!r} does not match subcommand "
                          f"{expect_kind!r}")
    _check_keys(tree, _SCHEMAS[kind])
    for key in ("methods", "degrees", "meshes", "pairs", "slenderness"):
        if key in tree and not isinstance(tree[key], list):
            raise ConfigError(f"{key} must be a list")
    for m in tree.get("methods", []):
        if m not in METHOD_TOKENS:
            raise ConfigError(f"unknown method token {m!r}; "
                              f"expected one of {METHOD_TOKENS}")
    for m in tree.get("pairs", []):
        if m not in ("global", "ns", "equal"):
            raise ConfigError(f"unknown inf-sup pair {m!r}")
    tree.setdefault("seed", 0)
    return tree


# -- CSV -------------------------------------------------------------------


def _fmt(value):
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if not math.isfinite(value) else f"{value:.17g}"
    return "" if value is None else str(value)


def write_csv(path, fieldnames, rows):
    with open(path, "w") as fh:
        fh.write(",".join(fieldnames) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(k)) for k in fieldnames) + "\n")
    return path


def read_csv(path):
    """Read back a study CSV; numbers are parsed, blanks become None."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            items = line.rstrip("\n").split(",")
            row = {}
            for key, raw in zip(header, items):
                if raw == "":
                    row[key] = None
                else:
                    try:
                        row[key] = int(raw)
                    except ValueError:
                        try:
                            row[key] = float(raw)
                        except ValueError:
                            row[key] = raw
            rows.append(row)
    return header, rows


def _parallel_map(fn, tasks, threads):
    if threads <= 1:
        return [fn(t) for t in tasks]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


# -- study runners ---------------------------------------------------------


def _demo_target(length=3.0):
    def f(t):
        return np.array([(t / length) ** 1.5, 0.1 * np.sin(np.pi * t)])
    return f


def run_project(cfg, out_dir, threads=1):
    degree = cfg.get("degree", 2)
    n_el = cfg.get("n_elements", 3)
    samples = cfg.get("samples", 200)
    space = SplineSpace.uniform(degree, n_el)
    geom = LineGeometry(0.0, 3.0)
    f = _demo_target()
    cb = bezier_project(f, space, geom)
    cl = global_l2_project(f, space, geom)
    rows = []
    for t in np.linspace(0.0, 3.0, samples):
        xi = t / 3.0
        first, vals = eval_bspline(space, xi)
        pb = vals @ cb[first:first + degree + 1]
        pl = vals @ cl[first:first + degree + 1]
        ft = f(t)
        rows.append({"t": t, "target_x": ft[0], "target_y": ft[1],
                     "bezier_x": pb[0], "bezier_y": pb[1],
                     "l2_x": pl[0], "l2_y": pl[1]})
    cols = ["t", "target_x", "target_y", "bezier_x", "bezier_y", "l2_x", "l2_y"]
    return [write_csv(f"{out_dir}/project.csv", cols, rows)]


def _beam_problem(cfg):
    params = dict(cfg.get("beam", {}))
    return beam_mod.BeamProblem(**params)


def run_beam_study(cfg, out_dir, threads=1):
    problem = _beam_problem(cfg)
    methods = cfg.get("methods", list(METHOD_TOKENS))
    degrees = cfg.get("degrees", [1, 2, 3])
    meshes = cfg.get("meshes", [4, 8, 16, 32, 64])
    tasks = [(p, n) for p in degrees for n in meshes]

    def one(task):
        p, n = task
        t0 = time.perf_counter()
        out = []
        disc = beam_mod.BeamDiscretization(problem, p, n)
        for method in methods:
            try:
                sol = beam_mod.solve_beam(problem, p, n, method, disc=disc)
                row = {"method": method, "p": p, "n_elem": n,
                       "dofs": disc.n_dofs}
                row.update(beam_mod.solution_errors(sol))
                row["bandwidth_sym_measure"] = sol.coupling_width
                row["nnz"] = sol.nnz
            except Exception as err:  # report per-row, keep the study going
                row = {"method": method, "p": p, "n_elem": n,
                       "dofs": disc.n_dofs, "error": str(err)}
            row["wall_time"] = time.perf_counter() - t0
            out.append(row)
        return out

    rows = [r for chunk in _parallel_map(one, tasks, threads) for r in chunk]
    rows.sort(key=lambda r: (r["method"], r["p"], r["n_elem"]))
    cols = ["method", "p", "n_elem", "dofs", "err_w", "err_phi", "err_M",
            "err_Q", "bandwidth_sym_measure", "nnz", "wall_time"]
    paths = [write_csv(f"{out_dir}/beam_study.csv", cols, rows)]

    if cfg.get("slenderness"):
        srows = beam_mod.slenderness_study(
            problem, cfg["slenderness"], methods,
            degree=degrees[0] if degrees else 2,
            dof_target=cfg.get("dof_target", 32))
        for r in srows:
            r["wall_time"] = 0.0
        srows.sort(key=lambda r: (r["method"], r["dof_convention"],
                                  r["slenderness"]))
        scols = ["method", "p", "n_elem", "dof_convention", "dofs_total",
                 "dofs_per_field", "slenderness", "err_w", "err_phi",
                 "err_M", "err_Q", "wall_time"]
        paths.append(write_csv(f"{out_dir}/beam_slenderness.csv", scols, srows))
    return paths


def run_elasticity_study(cfg, out_dir, threads=1):
    problem_name = cfg.get("problem", "plate")
    mat_cfg = cfg.get("material", {})
    material = el2d.Material(mat_cfg.get("youngs_modulus", 1e5),
                             mat_cfg.get("poisson", 0.4999))
    methods = cfg.get("methods", list(METHOD_TOKENS))
    degrees = cfg.get("degrees", [2])
    meshes = cfg.get("meshes", [1, 2, 4, 8, 16])

    if problem_name == "cook":
        shear = cfg.get("cook", {}).get("shear_load", 6.25)

        def one(task):
            p, n = task
            t0 = time.perf_counter()
            out = []
            prob = el2d.cook_problem(material, p, n, shear_load=shear)
            for method in methods:
                try:
                    sol = el2d.solve_elastic(prob, method)
                    ux, uy = sol.corner_displacement((1.0, 1.0))
                    row = {"method": method, "p": p, "n_per_side": n,
                           "dofs": prob.disc.n_dofs,
                           "corner_ux": ux, "corner_uy": uy}
                except Exception as err:
                    row = {"method": method, "p": p, "n_per_side": n,
                           "dofs": prob.disc.n_dofs, "error": str(err)}
                row["wall_time"] = time.perf_counter() - t0
                out.append(row)
            return out

        tasks = [(p, n) for p in degrees for n in meshes]
        rows = [r for chunk in _parallel_map(one, tasks, threads) for r in chunk]
        rows.sort(key=lambda r: (r["method"], r["p"], r["n_per_side"]))
        cols = ["method", "p", "n_per_side", "dofs", "corner_ux", "corner_uy",
                "wall_time"]
        return [write_csv(f"{out_dir}/cook.csv", cols, rows)]

    if problem_name != "plate":
        raise ConfigError(f"unknown elasticity problem {problem_name!r}")

    plate_cfg = cfg.get("plate", {})
    tension = plate_cfg.get("tension", 10.0)
    r_in = plate_cfg.get("r_inner", 1.0)
    r_out = plate_cfg.get("r_outer", 4.0)
    ref_cfg = cfg.get("reference", {})
    boost = ref_cfg.get("degree_boost", 2)
    ref_mesh = ref_cfg.get("mesh", max(meshes))

    references = {}
    for p in degrees:
        ref_prob = el2d.plate_problem(material, p + boost, ref_mesh,
                                      tension=tension, r_inner=r_in,
                                      r_outer=r_out)
        references[p] = el2d.solve_elastic(ref_prob, "ns-bbar")

    def one(task):
        p, n = task
        t0 = time.perf_counter()
        out = []
        prob = el2d.plate_problem(material, p, n, tension=tension,
                                  r_inner=r_in, r_outer=r_out)
        for method in methods:
            try:
                sol = el2d.solve_elastic(prob, method)
                row = {"method": method, "p": p, "n_per_side": n,
                       "dofs": prob.disc.n_dofs,
                       "err_disp": el2d.displacement_error(sol, references[p])}
                row.update(el2d.stress_errors(sol, tension, r_in))
            except Exception as err:
                row = {"method": method, "p": p, "n_per_side": n,
                       "dofs": prob.disc.n_dofs, "error": str(err)}
            row["wall_time"] = time.perf_counter() - t0
            out.append(row)
        return out

    tasks = [(p, n) for p in degrees for n in meshes]
    rows = [r for chunk in _parallel_map(one, tasks, threads) for r in chunk]
    rows.sort(key=lambda r: (r["method"], r["p"], r["n_per_side"]))
    # attach fitted rates to each finest-mesh row when 3+ meshes ran cleanly
    for method in methods:
        for p in degrees:
            group = [r for r in rows
                     if r["method"] == method and r["p"] == p
                     and r.get("err_disp") is not None]
            if len(group) >= 3:
                h = [1.0 / r["n_per_side"] for r in group]
                last = max(group, key=lambda r: r["n_per_side"])
                for key, col in (("err_disp", "rate_disp"),
                                 ("err_stress", "rate_stress"),
                                 ("err_energy", "rate_energy")):
                    try:
                        last[col] = fit_rate([r[key] for r in group], h)
                    except ValueError:
                        last[col] = None
    cols = ["method", "p", "n_per_side", "dofs", "err_disp", "err_stress",
            "err_energy", "max_sxx_err_rel", "rate_disp", "rate_stress",
            "rate_energy", "wall_time"]
    return [write_csv(f"{out_dir}/plate.csv", cols, rows)]


def run_infsup(cfg, out_dir, threads=1):
    pairs = cfg.get("pairs", ["global", "ns", "equal"])
    degree = cfg.get("degree", 4)
    meshes = cfg.get("meshes", [1, 2, 4, 8, 16])
    rows = []
    for n in meshes:
        t0 = time.perf_counter()
        disc = el2d.Discretization2D(el2d.quarter_annulus(), degree, n)
        for pair in pairs:
            beta = el2d.infsup_beta(disc, pair)
            n_p = disc.n if pair == "equal" else disc.n_bar
            rows.append({"pair": pair, "p": degree, "n_per_side": n,
                         "n_pressure": n_p, "beta": beta,
                         "wall_time": time.perf_counter() - t0})
    rows.sort(key=lambda r: (r["pair"], r["n_per_side"]))
    for pair in pairs:
        group = [r for r in rows if r["pair"] == pair]
        if len(group) >= 3:
            h = [1.0 / r["n_per_side"] for r in group]
            betas = [r["beta"] for r in group]
            max(group, key=lambda r: r["n_per_side"])["slope"] = \
                fit_rate(betas, h)
    cols = ["pair", "p", "n_per_side", "n_pressure", "beta", "slope",
            "wall_time"]
    return [write_csv(f"{out_dir}/infsup.csv", cols, rows)]


def run_spy(cfg, out_dir, threads=1):
    problem = beam_mod.BeamProblem()
    degree = cfg.get("degree", 2)
    n_el = cfg.get("n_elements", 16)
    methods = cfg.get("methods", list(METHOD_TOKENS))
    paths = []
    for method in methods:
        sol = beam_mod.solve_beam(problem, degree, n_el, method)
        path = f"{out_dir}/spy_{method}.txt"
        dump_pattern(sol.K, path)
        paths.append(path)
    return paths


_RUNNERS = {
    "project": run_project,
    "beam-study": run_beam_study,
    "elasticity-study": run_elasticity_study,
    "infsup": run_infsup,
    "spy": run_spy,
}


def run(cfg, out_dir, threads=1):
    """Dispatch a validated config to its study runner; returns output paths."""
    return _RUNNERS[cfg["kind"]](cfg, out_dir, threads=threads)


# -- invariant suite for --verify -------------------------------------------


def verify_invariants(seed=0):
    """Quick cross-module consistency checks; returns a list of failures."""
    rng = np.random.default_rng(seed)
    failures = []

    def check(name, ok):
        if not ok:
            failures.append(name)

    space = SplineSpace.uniform(2, 8)
    pts = rng.uniform(0.0, 1.0, size=200)
    pou = max(abs(sum(eval_bspline(space, x)[1]) - 1.0) for x in pts)
    check("partition-of-unity", pou < 1e-12)

    exts = build_extraction(space)
    cr = max(np.abs(ext.C @ ext.R - np.eye(3)).max() for ext in exts)
    check("extraction-inverse", cr < 1e-12)

    duals = build_dual_extraction(space, LineGeometry(0.0, 2.0))
    rule = gauss_rule(4)
    gram = np.zeros((space.n, space.n))
    from .splines import eval_bernstein
    b = eval_bernstein(2, rule.points)
    for ext, dual, (lo, hi) in zip(exts, duals, space.element_spans):
        w = rule.weights * (hi - lo) * 2.0
        nhat = b @ dual.D.T
        nv = b @ ext.C.T
        gram[np.ix_(ext.connectivity, ext.connectivity)] += \
            nhat.T @ (nv * w[:, None])
    check("dual-biorthogonality", np.abs(gram - np.eye(space.n)).max() < 1e-10)

    problem = beam_mod.BeamProblem(thickness=1.0)
    disc = beam_mod.BeamDiscretization(problem, 2, 4)
    mixed, _ = beam_mod.solve_beam_mixed(problem, 2, 4, disc=disc)
    k, rhs_v, _ = beam_mod.assemble_beam(disc, "ns-bbar")
    from .numerics import solve as _solve
    free = np.arange(2, disc.n_dofs)
    direct = np.zeros(disc.n_dofs)
    direct[free] = _solve(k[np.ix_(free, free)], rhs_v[free])
    rel = (np.abs(mixed.coeffs - direct).max()
           / max(np.abs(direct).max(), 1e-300))
    check("mixed-condensed-equivalence", rel < 1e-9)
    return failures
