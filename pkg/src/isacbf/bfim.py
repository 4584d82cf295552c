"""Bayesian Fisher information, the estimation-error metric, and the
sensing-direction matrices used by the power-maximization reformulation.

Parameter ordering for the angle-estimation family (L = 3):
(Re path loss, Im path loss, angle).  The information matrix is

    J(V) = C + T(V),    T(V) = pref * [[h_a, 0, Re h_da],
                                       [0, h_a, Im h_da],
                                       [Re h_da, Im h_da, h_d]]

with pref = 2*T_symbols/sigma^2, h_a = Tr(m_aa V V^H),
h_da = Tr(m_da V V^H), h_d = Tr(m_dd V V^H).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import ArrayGeometry, ScalarPrior, SensingMoments, ConfigurationError
from .numerics import check_hermitian


@dataclass
class Scenario:
    """One complete problem instance."""

    geometry: ArrayGeometry
    h: np.ndarray                 # N_T x K complex channel matrix, columns h_k
    gamma: np.ndarray             # K linear SINR targets
    sigma2: float
    power: float
    symbols: int                  # coherence-interval length T
    alpha_prior: ScalarPrior
    theta_prior: ScalarPrior
    weights: np.ndarray           # length-L diagonal of the error-weight matrix
    seed: int = 0

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.h.shape[0] != self.geometry.n_tx:
            raise ConfigurationError("channel rows must equal n_tx")
        if self.gamma.shape != (self.h.shape[1],):
            raise ConfigurationError("need one SINR target per user")
        if (self.gamma <= 0).any():
            raise ConfigurationError("SINR targets must be positive (linear scale)")
        if (self.weights < 0).any():
            raise ConfigurationError("error weights must be nonnegative")
        if self.sigma2 <= 0 or self.power <= 0 or self.symbols < 1:
            raise ConfigurationError("sigma2, power must be positive; symbols >= 1")

    @property
    def n_users(self):
        return self.h.shape[1]

    @property
    def n_params(self):
        return len(self.weights)

    @property
    def prefactor(self):
        return 2.0 * self.symbols / self.sigma2

    def theta_variance_gaussian(self):
        """Gaussian-surrogate variance of the angle prior (uniform -> span^2/3)."""
        return self.theta_prior.variance


@dataclass
class FisherDecomposition:
    c: np.ndarray
    t_v: np.ndarray
    j: np.ndarray


def sinr_downlink(v, h, sigma2):
    """Per-user downlink SINR of beamformer columns v against channels h."""
    v = np.asarray(v, dtype=complex)
    h = np.asarray(h, dtype=complex)
    k = h.shape[1]
    g = np.abs(h.conj().T @ v) ** 2     # g[i, j] = |h_i^H v_j|^2
    out = np.empty(k)
    for i in range(k):
        interf = g[i].sum() - g[i, i]
        out[i] = g[i, i] / (interf + sigma2)
    return out


def prior_fim_c(scn: Scenario):
    """Prior information matrix for the angle-estimation family (diagonal)."""
    va = scn.alpha_prior.variance
    vt = scn.theta_variance_gaussian()
    if va <= 0 or vt <= 0:
        raise ConfigurationError("prior variances must be positive")
    return scn.prefactor * np.diag([1.0 / va, 1.0 / va, 1.0 / vt])


def _h_moments(cov, moments: SensingMoments):
    h_a = float(np.real(np.trace(moments.m_aa @ cov)))
    h_da = complex(np.trace(moments.m_da @ cov))
    h_d = float(np.real(np.trace(moments.m_dd @ cov)))
    return h_a, h_da, h_d


def data_fim_t_cov(cov, moments: SensingMoments, scn: Scenario):
    """Beamformer-dependent information term from a transmit covariance."""
    h_a, h_da, h_d = _h_moments(cov, moments)
    t = np.array([[h_a, 0.0, h_da.real],
                  [0.0, h_a, h_da.imag],
                  [h_da.real, h_da.imag, h_d]])
    return scn.prefactor * t


def data_fim_t(v, moments: SensingMoments, scn: Scenario):
    """Beamformer-dependent information term, linear in V V^H."""
    v = np.asarray(v, dtype=complex)
    cov = v @ v.conj().T if v.ndim == 2 else np.outer(v, v.conj())
    return data_fim_t_cov(cov, moments, scn)


def fisher_cov(cov, moments: SensingMoments, scn: Scenario) -> FisherDecomposition:
    c = prior_fim_c(scn)
    t = data_fim_t_cov(cov, moments, scn)
    return FisherDecomposition(c=c, t_v=t, j=c + t)


def fisher(v, moments: SensingMoments, scn: Scenario) -> FisherDecomposition:
    v = np.asarray(v, dtype=complex)
    cov = v @ v.conj().T if v.ndim == 2 else np.outer(v, v.conj())
    return fisher_cov(cov, moments, scn)


def _weighted_trace_inverse(dec: FisherDecomposition, weights):
    try:
        cf = scipy.linalg.cho_factor(dec.j, lower=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise ConfigurationError("information matrix is singular (degenerate prior)")
    jinv = scipy.linalg.cho_solve(cf, np.eye(dec.j.shape[0]))
    return jinv, float(np.sum(weights * np.diag(jinv)))


def bcrb_cov(cov, scn: Scenario, moments: SensingMoments):
    """Weighted trace of the inverse information matrix from a covariance."""
    return _weighted_trace_inverse(fisher_cov(cov, moments, scn), scn.weights)[1]


def bcrb(v, scn: Scenario, moments: SensingMoments):
    """Weighted trace of the inverse information matrix, Tr(W J^{-1})."""
    return _weighted_trace_inverse(fisher(v, moments, scn), scn.weights)[1]


def beta_star_cov(cov, scn: Scenario, moments: SensingMoments):
    jinv = _weighted_trace_inverse(fisher_cov(cov, moments, scn), scn.weights)[0]
    return jinv @ np.diag(np.sqrt(scn.weights))


def beta_star(v, scn: Scenario, moments: SensingMoments):
    """Optimal auxiliary directions: column l equals sqrt(w_l) J^{-1} e_l."""
    jinv = _weighted_trace_inverse(fisher(v, moments, scn), scn.weights)[0]
    return jinv @ np.diag(np.sqrt(scn.weights))


def maxmin_objective(beta, v, scn: Scenario, moments: SensingMoments):
    """sum_l (2 sqrt(w_l) beta_l^T e_l - beta_l^T J beta_l); equals the
    weighted error bound at beta = beta_star(V)."""
    dec = fisher(v, moments, scn)
    sw = np.sqrt(scn.weights)
    total = 0.0
    for ell in range(beta.shape[1]):
        b = beta[:, ell]
        total += 2.0 * sw[ell] * b[ell] - b @ dec.j @ b
    return float(total)


def q_beta(beta, moments: SensingMoments, scn: Scenario):
    """Sensing-direction matrix satisfying
    sum_l beta_l^T T(V) beta_l = Tr(Q_beta V V^H) for every V."""
    beta = np.asarray(beta, dtype=float)
    n = moments.m_aa.shape[0]
    q = np.zeros((n, n), dtype=complex)
    for ell in range(beta.shape[1]):
        c_l = beta[0, ell] + 1j * beta[1, ell]
        b3 = beta[2, ell]
        q += (abs(c_l) ** 2) * moments.m_aa + (b3 ** 2) * moments.m_dd
        cross = np.conj(c_l) * b3 * moments.m_da
        q += cross + cross.conj().T
    return check_hermitian(scn.prefactor * q, tol=1e-9)


def q_b_aoa(b, moments: SensingMoments):
    """Scalarized sensing-direction matrix for the angle family.

    Q_b = |b|^2 m_aa + conj(b) m_da + b m_da^H + m_dd; PSD for every b.
    """
    b = complex(b)
    q = (abs(b) ** 2) * moments.m_aa + moments.m_dd
    q += np.conj(b) * moments.m_da + b * moments.m_da.conj().T
    return check_hermitian(q, tol=1e-9)
