"""Command-line front end: scenario ingestion, solver dispatch, CSV/JSON
emission, and the built-in regression fixture.

Commands
--------
isac solve SCENARIO --path {sdr,duality,both} --out DIR
isac sweep-admissible SCENARIO --im-b F --lambda-range LO:HI --reb-range LO:HI
     --cells NxM --out DIR
isac fixture-appendix-d [--tol F]
isac moments-dump SCENARIO [--out DIR]

Exit codes: 0 success, 1 bad scenario file, 2 infeasible scenario,
3 solver failure, 4 fixture assertion failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .model import (ArrayGeometry, ScalarPrior, compute_moments, steering,
                    beam_pattern, ConfigurationError)
from .bfim import Scenario, q_b_aoa, sinr_downlink
from .numerics import hermitian_eig, is_psd, StructuralError
from .duality import (build_coupling, is_m_matrix, uplink_noise,
                      admissibility_from_q, solve_fixed_pair, sweep_admissible)
from .sdr import solve_weighted_power_sdr
from .maxmin import solve_isac, check_assumption1


GRID_POINTS = 1441          # [-90, 90] degrees at 0.125-degree steps

# Two-antenna counterexample reference data (4-decimal published constants).
FIXTURE_QB = np.array([[1.2566, -0.0458], [-0.0458, 1.2566]])
FIXTURE_EIGS = (1.2108, 1.3024)
FIXTURE_LAMBDA_MIN = 1.297
FIXTURE_F_DL = 0.1435
FIXTURE_OMEGA = -0.0024


class SchemaError(ValueError):
    pass


def _req(doc, key, where):
    if key not in doc:
        raise SchemaError(f"{where}: missing required key {key!r}")
    return doc[key]


def load_scenario(path):
    """Parse and validate a scenario JSON file into (Scenario, meta)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise SchemaError(f"scenario file not found: {path}")
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")

    geom_doc = _req(doc, "geometry", path)
    geom = ArrayGeometry(n_tx=int(_req(geom_doc, "n_tx", "geometry")),
                         n_rx=int(_req(geom_doc, "n_rx", "geometry")))

    users = _req(doc, "users", path)
    if not users:
        raise SchemaError("users: need at least one user")
    seed = int(doc.get("seed", 0))
    rng = np.random.default_rng(seed)
    cols, gammas = [], []
    for i, u in enumerate(users):
        where = f"users[{i}]"
        sinr_db = float(_req(u, "sinr_db", where))
        gammas.append(10.0 ** (sinr_db / 10.0))
        if "angle_deg" in u:
            cols.append(steering(geom, np.deg2rad(float(u["angle_deg"])), "tx"))
        elif "channel" in u:
            ch = u["channel"]
            if ch == "random":
                cols.append((rng.standard_normal(geom.n_tx)
                             + 1j * rng.standard_normal(geom.n_tx)) / np.sqrt(2.0))
            else:
                arr = np.asarray(ch, dtype=float)
                if arr.shape != (geom.n_tx, 2):
                    raise SchemaError(f"{where}: channel must be an n_tx x 2 [re, im] array")
                cols.append(arr[:, 0] + 1j * arr[:, 1])
        else:
            raise SchemaError(f"{where}: needs 'angle_deg' or 'channel'")

    prior_doc = _req(doc, "prior", path)
    a_doc = _req(prior_doc, "alpha", "prior")
    alpha_prior = ScalarPrior("complex_gaussian",
                              (complex(float(a_doc.get("mean_re", 0.0)),
                                       float(a_doc.get("mean_im", 0.0))),
                               float(_req(a_doc, "variance", "prior.alpha"))))
    t_doc = _req(prior_doc, "theta", "prior")
    kind = _req(t_doc, "kind", "prior.theta")
    if kind == "uniform":
        delta = np.deg2rad(float(_req(t_doc, "delta_deg", "prior.theta")))
        mean = np.deg2rad(float(t_doc.get("mean_deg", 0.0)))
        theta_prior = ScalarPrior("uniform", (mean - delta, mean + delta))
    elif kind == "gaussian":
        theta_prior = ScalarPrior("real_gaussian",
                                  (np.deg2rad(float(t_doc.get("mean_deg", 0.0))),
                                   float(_req(t_doc, "variance", "prior.theta"))))
    else:
        raise SchemaError(f"prior.theta.kind: unknown kind {kind!r}")

    weights = np.asarray(_req(doc, "weights", path), dtype=float)

    try:
        scn = Scenario(geometry=geom, h=np.stack(cols, axis=1),
                       gamma=np.asarray(gammas),
                       sigma2=float(_req(doc, "noise_power", path)),
                       power=float(_req(doc, "power", path)),
                       symbols=int(_req(doc, "symbols_T", path)),
                       alpha_prior=alpha_prior, theta_prior=theta_prior,
                       weights=weights, seed=seed)
    except ConfigurationError as exc:
        raise SchemaError(f"{path}: {exc}")
    meta = {"quadrature_nodes": int(doc.get("quadrature_nodes", 64))}
    return scn, meta


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(x):
    return repr(float(x))


def _complex_pairs(mat):
    return [[[_fmt(z.real), _fmt(z.imag)] for z in row] for row in np.asarray(mat, complex)]


def _write_report(report, out_dir, scn):
    doc = {"assumption1": report.assumption1, "notes": report.notes,
           "gap": None if report.gap is None else float(report.gap),
           "paths": {}}
    for name, p in report.paths.items():
        entry = {
            "objective": float(p.objective),
            "total_power": float(p.power),
            "sinr": [float(x) for x in p.sinr],
            "sinr_targets": [float(x) for x in scn.gamma],
            "lambda": None if p.lam is None else float(p.lam),
            "converged": bool(p.converged),
            "iterations": int(p.iterations),
            "sdr_fallback_used": bool(p.fell_back),
            "beamformers_re_im": _complex_pairs(p.v),
        }
        if p.dual_state is not None:
            st = p.dual_state
            entry["certificates"] = {
                "m_matrix": bool(st.m_certificate.verdict),
                "phi_min": float(np.nanmin(st.phi)) if st.phi is not None else None,
                "omega": [float(x) for x in st.omega],
                "uplink_powers": [float(x) for x in st.q],
                "downlink_powers": [float(x) for x in st.p],
            }
        doc["paths"][name] = entry
    _atomic_write(os.path.join(out_dir, "report.json"),
                  json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_beampattern(report, out_dir, scn):
    grid_deg = np.linspace(-90.0, 90.0, GRID_POINTS)
    grid = np.deg2rad(grid_deg)
    names = sorted(report.paths)
    header = ["theta_deg"]
    columns = [grid_deg]
    for name in names:
        p = report.paths[name]
        total, per_user = beam_pattern(p.v, grid, scn.geometry)
        header.append(f"total_db_{name}")
        columns.append(total)
        for k in range(per_user.shape[1]):
            header.append(f"user{k + 1}_db_{name}")
            columns.append(per_user[:, k])
    lines = [",".join(header)]
    for i in range(GRID_POINTS):
        lines.append(",".join(_fmt(col[i]) for col in columns))
    _atomic_write(os.path.join(out_dir, "beampattern.csv"), "\n".join(lines) + "\n")


def cmd_solve(args):
    scn, meta = load_scenario(args.scenario)
    moments = compute_moments(scn.geometry, scn.alpha_prior, scn.theta_prior,
                              meta["quadrature_nodes"])
    report = solve_isac(scn, moments, path=args.path)
    os.makedirs(args.out, exist_ok=True)
    _write_report(report, args.out, scn)
    _write_beampattern(report, args.out, scn)
    print(f"wrote {args.out}/report.json and {args.out}/beampattern.csv")
    for name, p in report.paths.items():
        print(f"  {name}: objective {p.objective:.9g}, power {p.power:.9g}, "
              f"converged {p.converged}")
    if report.gap is not None:
        print(f"  path gap: {report.gap:.3g}")
    return 0


def _parse_range(text, name):
    try:
        lo, hi = (float(t) for t in text.split(":"))
    except Exception:
        raise SchemaError(f"{name}: expected LO:HI, got {text!r}")
    if hi < lo:
        raise SchemaError(f"{name}: need HI >= LO")
    return lo, hi


def cmd_sweep(args):
    scn, meta = load_scenario(args.scenario)
    moments = compute_moments(scn.geometry, scn.alpha_prior, scn.theta_prior,
                              meta["quadrature_nodes"])
    lam_lo, lam_hi = _parse_range(args.lambda_range, "--lambda-range")
    rb_lo, rb_hi = _parse_range(args.reb_range, "--reb-range")
    try:
        n_lam, n_rb = (int(t) for t in args.cells.split("x"))
    except Exception:
        raise SchemaError(f"--cells: expected NxM, got {args.cells!r}")
    lam_grid = np.linspace(lam_lo, lam_hi, n_lam)
    rb_grid = np.linspace(rb_lo, rb_hi, n_rb)
    verdicts, boundary = sweep_admissible(scn, moments, args.im_b, lam_grid, rb_grid)
    os.makedirs(args.out, exist_ok=True)
    lines = ["lambda,re_b,verdict,psd_boundary"]
    for j, rb in enumerate(rb_grid):
        for i, lam in enumerate(lam_grid):
            lines.append(",".join([_fmt(lam), _fmt(rb), str(int(verdicts[i, j])),
                                   _fmt(boundary[j])]))
    _atomic_write(os.path.join(args.out, "admissible.csv"), "\n".join(lines) + "\n")
    n_adm = int((verdicts == 1).sum())
    n_inadm = int((verdicts == 0).sum())
    n_ind = int((verdicts == -1).sum())
    print(f"wrote {args.out}/admissible.csv: {n_adm} admissible, "
          f"{n_inadm} inadmissible, {n_ind} indeterminate cells")
    return 0


def cmd_moments_dump(args):
    scn, meta = load_scenario(args.scenario)
    moments = compute_moments(scn.geometry, scn.alpha_prior, scn.theta_prior,
                              meta["quadrature_nodes"])
    doc = {"quadrature_nodes": moments.quadrature_nodes,
           "alpha_mean_re_im": [_fmt(moments.alpha_mean.real), _fmt(moments.alpha_mean.imag)],
           "alpha_second_moment": _fmt(moments.alpha_second_moment),
           "m_aa_re_im": _complex_pairs(moments.m_aa),
           "m_da_re_im": _complex_pairs(moments.m_da),
           "m_dd_re_im": _complex_pairs(moments.m_dd)}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _atomic_write(os.path.join(args.out, "moments.json"), text)
        print(f"wrote {args.out}/moments.json")
    else:
        sys.stdout.write(text)
    return 0


def appendix_d_fixture(tol=1e-3, verbose=True):
    """Recompute and assert the two-antenna counterexample chain.

    Returns the list of (name, ok, detail) checks, in assertion order.
    """
    checks = []

    def check(name, ok, detail):
        checks.append((name, bool(ok), detail))
        if verbose:
            print(f"  [{'pass' if ok else 'FAIL'}] {name}: {detail}")

    geom = ArrayGeometry(2, 2)
    alpha_prior = ScalarPrior("complex_gaussian", (0.0, 1.0))
    theta_prior = ScalarPrior("real_gaussian", (0.0, 1.0))
    scn = Scenario(geometry=geom, h=np.eye(2, dtype=complex),
                   gamma=np.array([4.0, 2.0]), sigma2=1.0, power=100.0, symbols=1,
                   alpha_prior=alpha_prior, theta_prior=theta_prior,
                   weights=np.array([0.0, 0.0, 1.0]))

    moments = compute_moments(geom, alpha_prior, theta_prior, 96)
    qb_model = q_b_aoa(1.0, moments).real
    err = np.abs(qb_model - FIXTURE_QB).max()
    check("sensing matrix entries", err <= tol,
          f"max entry deviation {err:.2e} (tol {tol:g})")

    q_ref = FIXTURE_QB
    eigvals, eigvecs = hermitian_eig(q_ref)
    err = max(abs(eigvals[0] - FIXTURE_EIGS[0]), abs(eigvals[1] - FIXTURE_EIGS[1]))
    check("eigenvalues", err <= tol, f"{eigvals} vs {FIXTURE_EIGS}, dev {err:.2e}")
    w1 = np.array([1.0, -1.0]) / np.sqrt(2.0)
    w2 = np.array([1.0, 1.0]) / np.sqrt(2.0)
    align = min(abs(w1 @ eigvecs[:, 1]), abs(w2 @ eigvecs[:, 0]))
    check("eigenvectors", align >= 1.0 - 1e-9, f"alignment {align:.12f}")

    lo, hi = 1.0, 1.5
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        verdict, _ = admissibility_from_q(mid, q_ref, scn)
        if verdict == "admissible":
            hi = mid
        elif verdict == "inadmissible":
            lo = mid
        else:
            lo = hi = mid
            break
        if hi - lo < 1e-5:
            break
    lam_min = 0.5 * (lo + hi)
    check("admissibility threshold", abs(lam_min - FIXTURE_LAMBDA_MIN) <= 5 * tol,
          f"lambda_min {lam_min:.5f} vs {FIXTURE_LAMBDA_MIN} (tol {5 * tol:g})")

    check("1.30 I - Q not PSD", not is_psd(1.30 * np.eye(2) - q_ref),
          "smallest eigenvalue is negative")
    check("1.31 I - Q PSD", is_psd(1.31 * np.eye(2) - q_ref),
          "threshold above the top eigenvalue")

    u_bad = np.stack([w1, w1], axis=1)
    omega = uplink_noise(u_bad, 1.30, q_ref)
    err = np.abs(omega - FIXTURE_OMEGA).max()
    check("uplink noise terms", err <= tol / 10.0,
          f"omega {omega} vs {FIXTURE_OMEGA} (tol {tol / 10:g})")

    res = solve_weighted_power_sdr(1.30, q_ref, scn)
    ok = res.status == "optimal" and abs(res.objective - FIXTURE_F_DL) <= tol
    check("downlink optimum", ok,
          f"value {res.objective if res.objective else res.status} vs {FIXTURE_F_DL}")
    f_dl = res.objective if res.status == "optimal" else np.inf

    res_low = solve_weighted_power_sdr(1.25, q_ref, scn)
    check("unbounded below threshold", res_low.status == "unbounded",
          f"status at 1.25: {res_low.status}")

    q_cheap = (8.0 / 3.0) * abs(FIXTURE_OMEGA)
    g_abs = 0.5  # |h_i^H w1|^2 for both users
    feas1 = q_cheap * g_abs >= 4.0 * (q_cheap * g_abs + omega[0]) - 1e-12
    feas2 = q_cheap * g_abs >= 2.0 * (q_cheap * g_abs + omega[1]) - 1e-12
    check("uncertified uplink point feasible", feas1 and feas2,
          f"q1 = q2 = {q_cheap:.6f} satisfies both uplink rows")
    check("uncertified uplink beats downlink", 2 * q_cheap < f_dl,
          f"q1+q2 = {2 * q_cheap:.6f} < f_DL = {f_dl:.6f}")

    coupling = build_coupling(u_bad, scn)
    cert = is_m_matrix(coupling)
    inv_all_neg = (not cert.verdict and "inverse" in cert.witness
                   and (cert.witness["inverse"] < 0).all())
    check("uncertified directions rejected", inv_all_neg,
          "coupling inverse has all-negative entries")

    p_try = np.linalg.solve(coupling.m, scn.sigma2 * np.ones(2))
    check("downlink infeasibility of rejected directions", (p_try < 0).all(),
          f"required powers {p_try} are negative")

    v, val, st = solve_fixed_pair(1.30, None, scn, q_matrix=q_ref, check=False)
    check("duality value matches downlink", abs(val - f_dl) <= tol,
          f"fixed-pair value {val:.6f} vs {f_dl:.6f} (path {st.path})")
    return checks


def cmd_fixture(args):
    print("two-antenna counterexample fixture:")
    checks = appendix_d_fixture(tol=args.tol)
    failing = [name for name, ok, _ in checks if not ok]
    if failing:
        print(f"FAILED: {', '.join(failing)}")
        return 4
    print(f"all {len(checks)} checks passed")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="isac",
                                 description="Sensing-aware downlink beamformer design")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a scenario and emit report + beam pattern")
    p.add_argument("scenario")
    p.add_argument("--path", choices=["sdr", "duality", "both"], default="both")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep-admissible", help="grid admissibility verdicts")
    p.add_argument("scenario")
    p.add_argument("--im-b", type=float, default=1.0)
    p.add_argument("--lambda-range", required=True)
    p.add_argument("--reb-range", required=True)
    p.add_argument("--cells", default="40x40")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fixture-appendix-d", help="run the built-in counterexample fixture")
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("moments-dump", help="write the sensing moment kernels")
    p.add_argument("scenario")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_moments_dump)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StructuralError as exc:
        msg = str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return 2 if "infeasible" in msg else 3
    except np.linalg.LinAlgError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
