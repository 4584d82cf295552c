"""Sign-indefinite uplink-downlink duality machinery.

For a fixed multiplier/direction pair the downlink problem minimizes the
power weighted by N = lam*I - Q subject to per-user SINR constraints.  Its
virtual uplink twin uses N as a noise covariance that may be indefinite;
duality holds exactly on the admissible set, and the uplink beamformers
must keep the user-coupling matrix an M-matrix (inverse-nonnegative
Z-matrix).  This module provides the coupling-matrix toolkit, the
admissibility certification via the dual feasibility program, and the
fixed-pair iterative solver with an SDR fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bfim import Scenario, q_beta, sinr_downlink
from .model import SensingMoments
from .numerics import LmiProblem, real_embed, sdp_solve, is_psd, StructuralError
from .sdr import solve_weighted_power_sdr, extract_rank_one


Z_PATTERN_TOL = 1e-12
M_INV_TOL = 1e-12


@dataclass
class CouplingMatrix:
    """K x K user-coupling matrix: diag (1/gamma_i)|h_i^H u_i|^2, off-diag
    -|h_i^H u_j|^2.  Positive diagonal and nonpositive off-diagonal entries
    (Z-pattern) are enforced at construction."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        scale = max(np.abs(m).max(), 1.0)
        d = np.diag(m)
        if (d <= 0).any():
            raise StructuralError("coupling matrix needs a positive diagonal")
        off = m - np.diag(d)
        if off.max() > Z_PATTERN_TOL * scale:
            raise StructuralError("coupling matrix must have nonpositive off-diagonals")
        self.m = m


@dataclass
class MCertificate:
    verdict: bool
    witness: dict = field(default_factory=dict)


@dataclass
class DualState:
    lam: float
    beta: np.ndarray | None
    u: np.ndarray                    # unit-norm uplink directions, N_T x K
    q: np.ndarray                    # uplink powers
    p: np.ndarray                    # downlink powers
    omega: np.ndarray                # uplink noise terms (may be negative)
    phi: np.ndarray                  # omega^T M^{-1}
    coupling: CouplingMatrix
    m_certificate: MCertificate
    path: str = "fixed_point"        # fixed_point | sdr_fallback
    converged: bool = True


def build_coupling(u, scn: Scenario) -> CouplingMatrix:
    """Coupling matrix of normalized beamformer columns u against the scenario."""
    u = np.asarray(u, dtype=complex)
    k = scn.n_users
    g = np.abs(scn.h.conj().T @ u) ** 2          # g[i, j] = |h_i^H u_j|^2
    m = -g.astype(float)
    for i in range(k):
        if g[i, i] <= 0:
            raise StructuralError(f"user {i} is unservable by its own beamformer")
        m[i, i] = g[i, i] / scn.gamma[i]
    return CouplingMatrix(m=m)


def is_m_matrix(coupling: CouplingMatrix) -> MCertificate:
    """Inverse-nonnegativity test with an explicit arithmetic witness."""
    m = coupling.m
    k = m.shape[0]
    try:
        minv = np.linalg.inv(m)
    except np.linalg.LinAlgError:
        return MCertificate(False, {"reason": "singular"})
    if not np.isfinite(minv).all():
        return MCertificate(False, {"reason": "singular"})
    scale = np.abs(minv).max()
    bad = minv < -M_INV_TOL * scale
    if bad.any():
        i, j = np.argwhere(bad)[0]
        return MCertificate(False, {"reason": "negative inverse entry",
                                    "entry": (int(i), int(j)),
                                    "value": float(minv[i, j]),
                                    "inverse": minv})
    p = minv @ np.ones(k)
    return MCertificate(True, {"p": p, "mp": m @ p, "min_inverse": float(minv.min()),
                               "inverse": minv})


def uplink_noise(u, lam, q_matrix):
    """Per-user quadratic forms u_k^H (lam I - Q) u_k (may be negative)."""
    u = np.asarray(u, dtype=complex)
    n = lam * np.eye(q_matrix.shape[0]) - q_matrix
    return np.real(np.einsum('ik,ij,jk->k', u.conj(), n, u))


def recover_downlink_powers(coupling: CouplingMatrix, sigma2,
                            certificate: MCertificate = None):
    """p = sigma^2 M^{-1} 1; requires a valid M-matrix certificate."""
    cert = certificate if certificate is not None else is_m_matrix(coupling)
    if not cert.verdict:
        raise StructuralError("downlink powers need a certified M-matrix")
    p = sigma2 * np.linalg.solve(coupling.m, np.ones(coupling.m.shape[0]))
    return p


def recover_uplink_powers(coupling: CouplingMatrix, omega, tol=1e-9):
    """q = M^{-T} omega (componentwise equal to phi = omega^T M^{-1}); a
    negative entry flags an inadmissible pair (positivity-lemma
    contrapositive)."""
    q = np.linalg.solve(coupling.m.T, np.asarray(omega, dtype=float))
    if (q < -tol * max(1.0, np.abs(omega).max())).any():
        raise StructuralError(
            "omega^T M^{-1} has a negative entry: pair is inadmissible")
    return q


def admissibility_from_q(lam, q_matrix, scn: Scenario, tol=1e-7, max_iter=200):
    """Feasibility of the dual program:

        exists z >= 0 with
        lam I - Q + sum_{i != k} z_i h_i h_i^H >= (z_k/gamma_k) h_k h_k^H  (all k)

    Returns (verdict, info) with verdict in {'admissible', 'inadmissible',
    'indeterminate'}."""
    n = scn.geometry.n_tx
    k_users = scn.n_users
    base = lam * np.eye(n) - q_matrix
    if is_psd(base, tol=1e-12):
        return "admissible", {"witness_z": np.zeros(k_users), "psd": True}

    prob = LmiProblem(num_vars=k_users, objective=np.ones(k_users),
                      nonneg=np.ones(k_users, dtype=bool))
    for k in range(k_users):
        fis = []
        for i in range(k_users):
            hi = scn.h[:, i]
            pi = np.outer(hi, hi.conj())
            fis.append(real_embed(-pi / scn.gamma[i] if i == k else pi))
        prob.add_block(real_embed(base), np.stack(fis))
    sol = sdp_solve(prob, tol=tol, max_iter=max_iter)
    if sol.status == "optimal" or (sol.status == "max_iter"
                                   and sol.kkt_residual is not None
                                   and sol.kkt_residual <= 1e-6):
        return "admissible", {"witness_z": np.maximum(sol.x, 0.0), "psd": False}
    if sol.status == "infeasible":
        return "inadmissible", {"certificate": sol.certificate}
    return "indeterminate", {"status": sol.status, "kkt": sol.kkt_residual}


def check_admissible(lam, beta, scn: Scenario, moments: SensingMoments, tol=1e-7):
    """Admissibility of a multiplier/direction pair via dual feasibility."""
    q = q_beta(np.asarray(beta, dtype=float), moments, scn)
    return admissibility_from_q(lam, q, scn, tol=tol)


def _phase_align(u, h):
    """Rotate each column so the matched inner product h_k^H u_k is real >= 0."""
    out = u.copy()
    for k in range(u.shape[1]):
        ip = h[:, k].conj() @ u[:, k]
        if abs(ip) > 0:
            out[:, k] = u[:, k] * (ip.conj() / abs(ip))
    return out


def solve_fixed_pair(lam, beta, scn: Scenario, moments: SensingMoments = None,
                     q_matrix=None, tol=1e-9, max_iter=500, shift_eps=1e-10,
                     check=True, warm_start=None, allow_fallback=True):
    """Downlink solution of the fixed-pair weighted problem via the virtual
    uplink iteration, with M-matrix certification and an SDR fallback.

    Returns (V, value, DualState).  Pass either `beta` (with moments) or a
    precomputed `q_matrix` (scalarized path).  `warm_start` may carry a
    (U, q) pair from a nearby solve.  With `allow_fallback=False` an
    uncertified fixed point raises instead of invoking the relaxation.
    """
    if q_matrix is None:
        q_matrix = q_beta(np.asarray(beta, dtype=float), moments, scn)
    n = scn.geometry.n_tx
    k_users = scn.n_users
    noise = lam * np.eye(n) - q_matrix

    if check and allow_fallback:
        verdict, _ = admissibility_from_q(lam, q_matrix, scn)
        if verdict == "inadmissible":
            raise StructuralError("pair is inadmissible: downlink problem unbounded")

    h = scn.h
    if warm_start is not None:
        u0, q0 = warm_start
        u = _phase_align(np.asarray(u0, dtype=complex).copy(), h)
        q = np.maximum(np.asarray(q0, dtype=float).copy(), 0.0)
    else:
        q = np.zeros(k_users)
        u = _phase_align(h / np.linalg.norm(h, axis=0, keepdims=True), h)
    fail_count = 0
    converged = False
    for it in range(max_iter):
        # beamformer update: maximize each uplink SINR given powers
        u_new = np.empty_like(u)
        for k in range(k_users):
            d = noise + sum(q[i] * np.outer(h[:, i], h[:, i].conj())
                            for i in range(k_users) if i != k)
            d = 0.5 * (d + d.conj().T)
            wmin = np.linalg.eigvalsh(d)[0]
            if wmin <= 0:
                d = d + (-wmin + shift_eps + 1e-12 * abs(wmin)) * np.eye(n)
            vec = np.linalg.solve(d, h[:, k])
            u_new[:, k] = vec / np.linalg.norm(vec)
        u_new = _phase_align(u_new, h)

        coupling = build_coupling(u_new, scn)
        omega = uplink_noise(u_new, lam, q_matrix)
        try:
            q_new = np.linalg.solve(coupling.m.T, omega)
        except np.linalg.LinAlgError:
            q_new = None
        if q_new is None or (q_new < -1e-9 * max(1.0, abs(omega).max())).any():
            # componentwise interference-function step keeps powers sane when
            # the coupling system is not (yet) solvable with nonnegative powers
            g = np.abs(h.conj().T @ u_new) ** 2
            q_new = np.empty(k_users)
            for k in range(k_users):
                interf = sum(q[i] * g[i, k] for i in range(k_users) if i != k)
                q_new[k] = max(scn.gamma[k] * (interf + omega[k]) / g[k, k], 0.0)
        step = np.abs(q_new - q).max() / max(1.0, np.abs(q).max())
        moved = np.abs(u_new - u).max()
        u, q = u_new, np.maximum(q_new, 0.0)
        if step < tol and moved < np.sqrt(tol):
            converged = True
            break

    coupling = build_coupling(u, scn)
    omega = uplink_noise(u, lam, q_matrix)
    cert = is_m_matrix(coupling)
    phi_ok = False
    if cert.verdict:
        phi = np.linalg.solve(coupling.m.T, omega)
        phi_ok = (phi >= -1e-9 * max(1.0, np.abs(omega).max())).all()
    if converged and cert.verdict and phi_ok:
        p = recover_downlink_powers(coupling, scn.sigma2, cert)
        v = u * np.sqrt(p)[None, :]
        value = float(omega @ p)
        state = DualState(lam=lam, beta=None if beta is None else np.asarray(beta),
                          u=u, q=np.maximum(phi, 0.0), p=p, omega=omega, phi=phi,
                          coupling=coupling, m_certificate=cert,
                          path="fixed_point", converged=True)
        return v, value, state

    if not allow_fallback:
        raise StructuralError("fixed-point iteration did not reach a certified solution")

    # fallback: covariance relaxation plus rank-one extraction
    res = solve_weighted_power_sdr(lam, q_matrix, scn)
    if res.status == "unbounded":
        raise StructuralError("pair is inadmissible: downlink problem unbounded")
    if res.status != "optimal":
        raise StructuralError(f"fixed-pair fallback failed: solver status {res.status}")
    v = extract_rank_one(res.covariances, scn)
    u_fb = _phase_align(v / np.linalg.norm(v, axis=0, keepdims=True), h)
    coupling = build_coupling(u_fb, scn)
    omega = uplink_noise(u_fb, lam, q_matrix)
    cert = is_m_matrix(coupling)
    value = float(res.objective)
    if cert.verdict:
        # re-tighten the powers along the extracted directions so every SINR
        # constraint holds with equality
        p = recover_downlink_powers(coupling, scn.sigma2, cert)
        v = u_fb * np.sqrt(p)[None, :]
        value = float(omega @ p)
        phi = np.linalg.solve(coupling.m.T, omega)
        q_fb = np.maximum(phi, 0.0)
    else:
        p = np.linalg.norm(v, axis=0) ** 2
        phi = np.full(k_users, np.nan)
        q_fb = np.zeros(k_users)
    state = DualState(lam=lam, beta=None if beta is None else np.asarray(beta),
                      u=u_fb, q=q_fb, p=p, omega=omega, phi=phi, coupling=coupling,
                      m_certificate=cert, path="sdr_fallback", converged=False)
    return v, value, state


def psd_boundary(b, moments: SensingMoments):
    """Largest eigenvalue of the scalarized sensing matrix at b."""
    from .bfim import q_b_aoa
    return float(np.linalg.eigvalsh(q_b_aoa(b, moments))[-1])


def sweep_admissible(scn: Scenario, moments: SensingMoments, im_b,
                     lambda_grid, re_b_grid, tol=1e-7):
    """Cell-by-cell admissibility verdicts over a (lambda, Re b) grid at fixed
    Im b, plus the PSD-boundary curve lambda = rho_max(Q_b) per column.

    Returns (verdicts, boundary) where verdicts[i, j] in {1 admissible,
    0 inadmissible, -1 indeterminate} for lambda_grid[i] x re_b_grid[j].
    """
    from .bfim import q_b_aoa
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    re_b_grid = np.asarray(re_b_grid, dtype=float)
    verdicts = np.empty((len(lambda_grid), len(re_b_grid)), dtype=int)
    boundary = np.empty(len(re_b_grid))
    for j, rb in enumerate(re_b_grid):
        q = q_b_aoa(rb + 1j * im_b, moments)
        boundary[j] = float(np.linalg.eigvalsh(q)[-1])
        for i, lam in enumerate(lambda_grid):
            verdict, _ = admissibility_from_q(lam, q, scn, tol=tol)
            verdicts[i, j] = {"admissible": 1, "inadmissible": 0,
                              "indeterminate": -1}[verdict]
    return verdicts, boundary
