"""Semidefinite-relaxation solvers.

Beamformers v_k are lifted to covariances R_k = v_k v_k^H and the rank
constraints dropped.  The full estimation-error objective is handled by a
Schur-complement lift, one (L+1) x (L+1) block per nonzero error weight:

    min sum_l d_l   s.t.  [[J_R, sqrt(w_l) e_l], [sqrt(w_l) e_l^T, d_l]] >= 0

together with the per-user SINR rows, the power row, and R_k >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bfim import Scenario, bcrb_cov, beta_star_cov, prior_fim_c
from .model import SensingMoments
from .numerics import (LmiProblem, real_embed, sdp_solve, hermitian_basis,
                       hermitian_from_params, StructuralError)


@dataclass
class SdrResult:
    status: str                  # optimal | unbounded | infeasible | max_iter
    covariances: list | None = None
    objective: float | None = None
    lam: float | None = None     # multiplier of the total power constraint
    beta: np.ndarray | None = None
    ray: list | None = None      # unbounded-direction certificate (covariances)
    kkt_residual: float | None = None
    iterations: int = 0


_ACCEPT_KKT = 1e-6   # max_iter iterates better than this are still usable


def _real_trace_coeffs(mat, basis):
    """Coefficients of Re Tr(mat @ R) in the Hermitian parameterization of R."""
    return np.array([np.real(np.trace(mat @ b)) for b in basis])


def _sinr_rows(prob, scn: Scenario, basis, nb, extra_vars=0):
    """Append the K SINR inequality rows to `prob`."""
    k_users = scn.n_users
    for k in range(k_users):
        hk = scn.h[:, k]
        pk = np.outer(hk, hk.conj())
        base = _real_trace_coeffs(pk, basis)
        coeffs = np.zeros(k_users * nb + extra_vars)
        for u in range(k_users):
            coeffs[u * nb:(u + 1) * nb] = base / scn.gamma[k] if u == k else -base
        prob.add_scalar(-scn.sigma2, coeffs)


def _psd_blocks(prob, scn: Scenario, basis, nb):
    n = scn.geometry.n_tx
    embedded = np.stack([real_embed(b) for b in basis])
    for k in range(scn.n_users):
        prob.add_block(np.zeros((2 * n, 2 * n)), embedded,
                       var_idx=np.arange(k * nb, (k + 1) * nb))


def _covariances_from_x(x, scn: Scenario, nb):
    n = scn.geometry.n_tx
    covs = []
    for k in range(scn.n_users):
        r = hermitian_from_params(x[k * nb:(k + 1) * nb], n)
        w, v = np.linalg.eigh(r)
        w = np.maximum(w, 0.0)          # clip solver-level negative dust
        covs.append((v * w) @ v.conj().T)
    return covs


def solve_weighted_power_sdr(lam, q_matrix, scn: Scenario, tol=1e-8, max_iter=200):
    """SDR of the fixed-pair downlink problem: minimize the power weighted by
    (lam*I - Q) subject to the SINR rows.  Returns an SdrResult whose status is
    'unbounded' (with a ray certificate) exactly when the weighted problem has
    no finite optimum."""
    n = scn.geometry.n_tx
    k_users = scn.n_users
    basis = hermitian_basis(n)
    nb = n * n
    m = k_users * nb

    w_mat = lam * np.eye(n) - q_matrix
    obj_base = _real_trace_coeffs(w_mat, basis)
    c = np.tile(obj_base, k_users)

    prob = LmiProblem(num_vars=m, objective=c)
    _psd_blocks(prob, scn, basis, nb)
    _sinr_rows(prob, scn, basis, nb)

    sol = sdp_solve(prob, tol=tol, max_iter=max_iter)
    if sol.status == "unbounded":
        ray = _covariances_from_x(sol.x, scn, nb)
        return SdrResult(status="unbounded", ray=ray, iterations=sol.iterations)
    if sol.status == "infeasible":
        return SdrResult(status="infeasible", iterations=sol.iterations)
    if sol.status == "max_iter" and (sol.kkt_residual is None or sol.kkt_residual > _ACCEPT_KKT):
        return SdrResult(status="max_iter", kkt_residual=sol.kkt_residual,
                         iterations=sol.iterations)
    covs = _covariances_from_x(sol.x, scn, nb)
    value = float(sum(np.real(np.trace(w_mat @ r)) for r in covs))
    return SdrResult(status="optimal", covariances=covs, objective=value,
                     kkt_residual=sol.kkt_residual, iterations=sol.iterations)


def solve_bcrb_sdr(scn: Scenario, moments: SensingMoments, tol=1e-8, max_iter=200):
    """Covariance relaxation of the full sensing-communication problem.

    Returns an SdrResult carrying the optimal covariances, the objective
    Tr(W J^{-1}), the power-constraint multiplier lam, and the closed-form
    optimal auxiliary matrix beta (columns sqrt(w_l) J^{-1} e_l)."""
    n = scn.geometry.n_tx
    k_users = scn.n_users
    basis = hermitian_basis(n)
    nb = n * n
    big_l = scn.n_params
    active = [ell for ell in range(big_l) if scn.weights[ell] > 0]
    m = k_users * nb + len(active)

    c = np.zeros(m)
    c[k_users * nb:] = 1.0
    prob = LmiProblem(num_vars=m, objective=c)
    _psd_blocks(prob, scn, basis, nb)
    _sinr_rows(prob, scn, basis, nb, extra_vars=len(active))

    # total power row: P - sum_k Tr(R_k) >= 0
    tr_base = _real_trace_coeffs(np.eye(n), basis)
    coeffs = np.zeros(m)
    for u in range(k_users):
        coeffs[u * nb:(u + 1) * nb] = -tr_base
    prob.add_scalar(scn.power, coeffs)
    power_block_index = len(prob.blocks) - 1

    # Schur lift blocks: [[J_R, sqrt(w) e_l], [., d_l]] >= 0
    c_prior = prior_fim_c(scn)
    pref = scn.prefactor
    # J entry coefficients per covariance parameter
    h_a = _real_trace_coeffs(moments.m_aa, basis)
    h_d = _real_trace_coeffs(moments.m_dd, basis)
    h_da = np.array([np.trace(moments.m_da @ b) for b in basis])
    for li, ell in enumerate(active):
        dim = big_l + 1
        f0 = np.zeros((dim, dim))
        f0[:big_l, :big_l] = c_prior
        sw = np.sqrt(scn.weights[ell])
        f0[big_l, ell] = f0[ell, big_l] = sw
        fis = np.zeros((k_users * nb + 1, dim, dim))
        for i in range(nb):
            j_i = pref * np.array([
                [h_a[i], 0.0, h_da[i].real],
                [0.0, h_a[i], h_da[i].imag],
                [h_da[i].real, h_da[i].imag, h_d[i]]])
            for u in range(k_users):
                fis[u * nb + i, :big_l, :big_l] = j_i
        fis[-1, big_l, big_l] = 1.0
        idx = np.concatenate([np.arange(k_users * nb), [k_users * nb + li]])
        prob.add_block(f0, fis, var_idx=idx)

    sol = sdp_solve(prob, tol=tol, max_iter=max_iter)
    if sol.status == "infeasible":
        return SdrResult(status="infeasible", iterations=sol.iterations)
    if sol.status == "unbounded":
        return SdrResult(status="unbounded", iterations=sol.iterations)
    if sol.status == "max_iter" and (sol.kkt_residual is None or sol.kkt_residual > _ACCEPT_KKT):
        return SdrResult(status="max_iter", kkt_residual=sol.kkt_residual,
                         iterations=sol.iterations)

    covs = _covariances_from_x(sol.x, scn, nb)
    total = sum(covs)
    objective = bcrb_cov(total, scn, moments)
    lam_mult = float(sol.dual_blocks[power_block_index][0, 0])
    beta = beta_star_cov(total, scn, moments)
    return SdrResult(status="optimal", covariances=covs, objective=objective,
                     lam=lam_mult, beta=beta, kkt_residual=sol.kkt_residual,
                     iterations=sol.iterations)


def extract_rank_one(covariances, scn: Scenario, tol=1e-9):
    """Rank-one beamformers v_k = R_k h_k / sqrt(h_k^H R_k h_k).

    Preserves every user's own-signal and interference quadratics, hence the
    SINR constraint values; each R_k dominates its extracted v_k v_k^H."""
    v_cols = []
    for k, r in enumerate(covariances):
        hk = scn.h[:, k]
        denom = float(np.real(hk.conj() @ r @ hk))
        if denom <= tol * max(1.0, float(np.real(np.trace(r)))):
            raise StructuralError(
                f"user {k}: h_k^H R_k h_k ~ 0, SINR constraint cannot have been active")
        v_cols.append(r @ hk / np.sqrt(denom))
    return np.stack(v_cols, axis=1)


def map_extended_sdr(r_total, covariances, tol=1e-7):
    """Spread the slack R - sum_k R_k evenly: R~_k = R_k + (R - sum R_i)/K.

    The outputs sum to R exactly, dominate the inputs, and inherit SINR and
    power feasibility."""
    r_total = np.asarray(r_total, dtype=complex)
    slack = r_total - sum(covariances)
    wmin = np.linalg.eigvalsh(0.5 * (slack + slack.conj().T))[0]
    scale = max(1.0, float(np.abs(r_total).max()))
    if wmin < -tol * scale:
        raise StructuralError("total covariance does not dominate the per-user sum")
    k = len(covariances)
    return [r + slack / k for r in covariances]
