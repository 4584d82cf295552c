"""Outer optimization over the multiplier/direction pair.

The full design problem is solved either by the covariance relaxation
(`sdr` path) or by alternating closed-form direction updates with a
bisection on the power-constraint multiplier over the admissible ray
(`duality` path), each inner problem handled by the virtual-uplink solver.
The relaxation path serves as the correctness oracle for the iterative
path; `both` runs the two and reports the gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bfim import (Scenario, bcrb, beta_star, beta_star_cov, q_beta,
                   sinr_downlink, maxmin_objective)
from .model import SensingMoments
from .numerics import StructuralError
from .duality import solve_fixed_pair, admissibility_from_q, DualState
from .sdr import solve_bcrb_sdr, extract_rank_one


@dataclass
class PathResult:
    name: str
    v: np.ndarray
    objective: float
    sinr: np.ndarray
    power: float
    converged: bool = True
    lam: float | None = None
    beta: np.ndarray | None = None
    iterations: int = 0
    trajectory: list = field(default_factory=list)
    fell_back: bool = False
    dual_state: DualState | None = None


@dataclass
class SolveReport:
    scenario_users: int
    assumption1: str
    paths: dict
    gap: float | None = None
    notes: list = field(default_factory=list)

    def best(self) -> PathResult:
        order = [p for p in ("duality", "sdr") if p in self.paths]
        return self.paths[order[0]]


def aoa_scalarize(beta3):
    """Map the third auxiliary column (b1, b2, b3), b3 > 0, to (a, b) with
    a = b3 and b = (b1 + i b2)/b3.  Bijective on b3 > 0."""
    b1, b2, b3 = np.asarray(beta3, dtype=float)
    if b3 <= 0:
        raise StructuralError("scalarization requires a positive third component")
    return float(b3), complex(b1 / b3, b2 / b3)


def aoa_unscalarize(a, b):
    """Inverse of aoa_scalarize: (b1, b2, b3) = (Re(a b), Im(a b), a)."""
    if a <= 0:
        raise StructuralError("scale factor must be positive")
    ab = a * complex(b)
    return np.array([ab.real, ab.imag, float(a)])


def check_assumption1(scn: Scenario, moments: SensingMoments = None):
    """Sufficiency screen for lossless reliance on communication beams only.

    Returns ('sufficient', reason) or ('unknown', caveat); the conditions are
    sufficient only, so a failing screen never reports 'violated'.
    """
    k = scn.n_users
    big_l = scn.n_params
    if k >= big_l * (big_l + 1) / 4.0:
        return "sufficient", f"K={k} meets the parameter-count bound L(L+1)/4"
    if big_l == 3:
        if k >= 2:
            return "sufficient", "angle family with K >= 2"
        mean = scn.alpha_prior.mean
        if k >= 1 and abs(complex(mean)) == 0:
            return "sufficient", "zero-mean path loss needs only K >= 1"
    return "unknown", ("sufficient conditions not met; a dedicated sensing beam "
                       "may strictly help for single-user nonzero-mean setups")


def _min_power_beamformers(scn: Scenario):
    """Classical minimum-power design (identity weighting, unit multiplier)."""
    n = scn.geometry.n_tx
    v, value, state = solve_fixed_pair(1.0, None, scn, q_matrix=np.zeros((n, n)),
                                       check=False)
    return v, value, state


def _power(v):
    return float(np.linalg.norm(v) ** 2)


def _bisect_multiplier(q_matrix, scn: Scenario, lam_floor=0.0, tol_power=1e-6,
                       max_expand=60, max_bisect=60):
    """Smallest admissible multiplier whose fixed-pair solution fits the power
    budget; admissibility is upward closed, and the transmitted power is
    decreasing in the multiplier, so bisection applies.

    A certified fixed-pair solve doubles as the admissibility probe, so no
    separate feasibility program runs on the bisection path.

    Returns (lam, V, value, state)."""
    rho = float(np.linalg.eigvalsh(0.5 * (q_matrix + q_matrix.conj().T))[-1])
    span = max(abs(rho), 1e-8)
    warm = {"ws": None}

    def attempt(lam, fallback=False):
        try:
            sol = solve_fixed_pair(lam, None, scn, q_matrix=q_matrix, check=False,
                                   warm_start=warm["ws"], allow_fallback=fallback)
        except StructuralError:
            return None
        state = sol[2]
        warm["ws"] = (state.u, state.q)
        return sol

    hi = rho + 0.5 * span
    sol_hi = attempt(hi)
    for _ in range(max_expand):
        if sol_hi is not None and _power(sol_hi[0]) <= scn.power:
            break
        hi = hi + span
        span *= 2.0
        sol_hi = attempt(hi)
    else:
        raise StructuralError("could not bracket the power-feasible multiplier")

    lo = max(lam_floor, rho - span if rho > span else 0.0)
    lo = min(lo, hi * 0.5)
    best = (hi, sol_hi)
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        sol = attempt(mid)
        if sol is None or _power(sol[0]) > scn.power:
            lo = mid
        else:
            hi = mid
            best = (mid, sol)
            if abs(_power(sol[0]) - scn.power) <= tol_power * scn.power:
                break
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    lam, sol = best
    refined = attempt(lam, fallback=True)
    if refined is not None and _power(refined[0]) <= scn.power * (1 + 1e-9):
        sol = refined
    v, value, state = sol
    return lam, v, value, state


def solve_isac(scn: Scenario, moments: SensingMoments, path="both",
               outer_tol=1e-6, outer_iters=100):
    """Full design solve.  `path` is 'sdr', 'duality', or 'both'."""
    a1_status, a1_reason = check_assumption1(scn, moments)
    report = SolveReport(scenario_users=scn.n_users,
                         assumption1=f"{a1_status}: {a1_reason}", paths={})
    if a1_status != "sufficient":
        report.notes.append("beam-count sufficiency unknown; relaxation may be loose")

    sensing_off = not scn.weights.any()

    if path in ("sdr", "both") and not sensing_off:
        res = solve_bcrb_sdr(scn, moments)
        if res.status == "infeasible":
            raise StructuralError("scenario SINR targets are infeasible")
        if res.status != "optimal":
            raise StructuralError(f"covariance relaxation failed: {res.status}")
        v = extract_rank_one(res.covariances, scn)
        obj = bcrb(v, scn, moments)
        report.paths["sdr"] = PathResult(
            name="sdr", v=v, objective=obj, sinr=sinr_downlink(v, scn.h, scn.sigma2),
            power=_power(v), lam=res.lam, beta=res.beta, iterations=res.iterations,
            trajectory=[res.objective, obj])

    if path in ("duality", "both") or sensing_off:
        v, _, state = _min_power_beamformers(scn)
        if _power(v) > scn.power * (1 + 1e-9):
            raise StructuralError(
                "SINR targets need more than the power budget: scenario infeasible")
        if sensing_off:
            report.paths["duality"] = PathResult(
                name="duality", v=v, objective=0.0,
                sinr=sinr_downlink(v, scn.h, scn.sigma2), power=_power(v),
                lam=1.0, dual_state=state)
            report.paths.setdefault("sdr", report.paths["duality"])
        else:
            # fictitious-play outer loop: the direction player responds to the
            # running average of the covariance iterates, which tames the
            # cycling that plain best-response alternation exhibits on
            # saddle problems
            cov_bar = v @ v.conj().T
            traj = [bcrb(v, scn, moments)]
            lam = None
            beta = None
            fell_back = False
            stable = 0
            converged = False
            state = None
            best_v, best_obj, best_state, best_lam, best_beta = v, traj[0], None, None, None
            for it in range(outer_iters):
                beta = beta_star_cov(cov_bar, scn, moments)
                q = q_beta(beta, moments, scn)
                lam, v_new, _, state = _bisect_multiplier(q, scn)
                fell_back |= (state.path == "sdr_fallback")
                v = v_new
                cov_bar = (it + 1) / (it + 2) * cov_bar + (v @ v.conj().T) / (it + 2)
                obj_it = bcrb(v, scn, moments)
                traj.append(obj_it)
                improvement = (best_obj - obj_it) / max(abs(best_obj), 1e-300)
                if obj_it < best_obj:
                    best_v, best_obj, best_state = v, obj_it, state
                    best_lam, best_beta = lam, beta
                stable = stable + 1 if improvement < outer_tol else 0
                if stable >= 3 and it >= 5:
                    converged = True
                    break
            report.paths["duality"] = PathResult(
                name="duality", v=best_v, objective=best_obj,
                sinr=sinr_downlink(best_v, scn.h, scn.sigma2), power=_power(best_v),
                converged=converged, lam=best_lam, beta=best_beta,
                iterations=len(traj) - 1, trajectory=traj, fell_back=fell_back,
                dual_state=best_state)
            if not converged and "sdr" not in report.paths:
                res = solve_bcrb_sdr(scn, moments)
                if res.status == "optimal":
                    v_sdr = extract_rank_one(res.covariances, scn)
                    report.paths["sdr"] = PathResult(
                        name="sdr", v=v_sdr, objective=bcrb(v_sdr, scn, moments),
                        sinr=sinr_downlink(v_sdr, scn.h, scn.sigma2),
                        power=_power(v_sdr), lam=res.lam, beta=res.beta)
                    report.notes.append("duality path stalled; relaxation result attached")

    if "sdr" in report.paths and "duality" in report.paths:
        a, b = report.paths["sdr"].objective, report.paths["duality"].objective
        report.gap = abs(a - b) / max(abs(a), 1e-300)
    return report
