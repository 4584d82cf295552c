"""Array geometry, steering vectors, sensing priors, and channel moments.

Conventions used throughout:

* Steering vectors have unit-modulus entries exp(i*pi*n*sin(theta)) for a
  half-wavelength uniform linear array (entry gain one).
* The prior-averaged channel moments normalize the combined two-way
  response to unit Frobenius norm, i.e. the moment kernels are built from
  A / sqrt(N_T * N_R).  Gaussian angle priors are truncated to the
  physical field of view (-pi/2, pi/2) and renormalized.
* A complex-Gaussian path-loss prior with mean m and variance parameter v
  contributes E[alpha] = m and E[|alpha|^2] = |m|^2 + v/2 to the moments.

These conventions reproduce the reference two-antenna sensing matrix used
by the regression fixtures to about 3e-4 per entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import check_hermitian


class ConfigurationError(ValueError):
    """Invalid model configuration (unsupported prior, bad parameters)."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Half-wavelength ULA pair at the transceiver."""

    n_tx: int
    n_rx: int

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ConfigurationError("antenna counts must be positive")


@dataclass(frozen=True)
class ScalarPrior:
    """Scalar prior: 'real_gaussian', 'complex_gaussian' or 'uniform'.

    real_gaussian:    params (mean, variance)
    complex_gaussian: params (mean: complex, variance)
    uniform:          params (lo, hi)
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind in ("real_gaussian", "complex_gaussian"):
            if self.params[1] <= 0:
                raise ConfigurationError("prior variance must be positive")
        elif self.kind == "uniform":
            if self.params[1] <= self.params[0]:
                raise ConfigurationError("uniform prior needs hi > lo")
        else:
            raise ConfigurationError(f"unsupported prior kind {self.kind!r}")

    @property
    def mean(self):
        return self.params[0] if self.kind != "uniform" else 0.5 * sum(self.params)

    @property
    def variance(self):
        if self.kind == "uniform":
            lo, hi = self.params
            return (hi - lo) ** 2 / 12.0
        return self.params[1]


@dataclass
class SensingMoments:
    """Prior-averaged kernels of the two-way channel and its angle derivative.

    m_aa = E_theta[A^H A], m_da = E[alpha] E_theta[A^H Adot],
    m_dd = E[|alpha|^2] E_theta[Adot^H Adot], with A normalized to unit
    Frobenius norm.  m_aa and m_dd are Hermitian PSD; m_da is a general
    complex matrix.
    """

    m_aa: np.ndarray
    m_da: np.ndarray
    m_dd: np.ndarray
    quadrature_nodes: int
    alpha_mean: complex = 0.0
    alpha_second_moment: float = 1.0


def steering(geom: ArrayGeometry, theta, side="tx"):
    """ULA steering vector, entry n = exp(i*pi*n*sin(theta))."""
    n = geom.n_tx if side == "tx" else geom.n_rx
    idx = np.arange(n)
    return np.exp(1j * np.pi * idx * np.sin(theta))


def steering_derivative(geom: ArrayGeometry, theta, side="tx"):
    """Derivative of `steering` with respect to theta."""
    n = geom.n_tx if side == "tx" else geom.n_rx
    idx = np.arange(n)
    return 1j * np.pi * idx * np.cos(theta) * np.exp(1j * np.pi * idx * np.sin(theta))


def combined_response(geom: ArrayGeometry, theta):
    """Two-way response A = a_R a_T^H and its angle derivative (product rule)."""
    a_t = steering(geom, theta, "tx")
    a_r = steering(geom, theta, "rx")
    da_t = steering_derivative(geom, theta, "tx")
    da_r = steering_derivative(geom, theta, "rx")
    a = np.outer(a_r, a_t.conj())
    a_dot = np.outer(da_r, a_t.conj()) + np.outer(a_r, da_t.conj())
    return a, a_dot


def _theta_quadrature(theta_prior: ScalarPrior, nodes):
    """Quadrature nodes/weights for the angle prior on its effective support.

    Gauss-Legendre with the prior density folded into the weights; Gaussian
    priors are truncated to the physical field of view (-pi/2, pi/2).
    """
    half = np.pi / 2
    if theta_prior.kind == "uniform":
        lo, hi = theta_prior.params
        if lo < -half or hi > half:
            raise ConfigurationError("uniform angle prior must lie within (-pi/2, pi/2)")
        dens = lambda t: np.ones_like(t)
    elif theta_prior.kind == "real_gaussian":
        mean, var = theta_prior.params
        sd = np.sqrt(var)
        lo, hi = max(-half, mean - 12 * sd), min(half, mean + 12 * sd)
        if lo >= hi:
            raise ConfigurationError("gaussian angle prior has no mass in (-pi/2, pi/2)")
        dens = lambda t: np.exp(-0.5 * (t - mean) ** 2 / var)
    else:
        raise ConfigurationError("angle prior must be real_gaussian or uniform")
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    wt = w * dens(t)
    return t, wt / wt.sum()


def alpha_moments(alpha_prior: ScalarPrior):
    """(E[alpha], E[|alpha|^2]) under the library's complex-prior convention."""
    if alpha_prior.kind != "complex_gaussian":
        raise ConfigurationError("path-loss prior must be complex_gaussian")
    mean, var = alpha_prior.params
    mean = complex(mean)
    return mean, abs(mean) ** 2 + var / 2.0


def compute_moments(geom: ArrayGeometry, alpha_prior: ScalarPrior,
                    theta_prior: ScalarPrior, nodes=64) -> SensingMoments:
    """Quadrature evaluation of the three sensing moment kernels."""
    if nodes < 8:
        raise ConfigurationError("need at least 8 quadrature nodes")
    thetas, weights = _theta_quadrature(theta_prior, nodes)
    a_mean, a2 = alpha_moments(alpha_prior)

    n = geom.n_tx
    norm = 1.0 / (geom.n_tx * geom.n_rx)
    m_aa = np.zeros((n, n), dtype=complex)
    m_da = np.zeros((n, n), dtype=complex)
    m_dd = np.zeros((n, n), dtype=complex)
    for t, w in zip(thetas, weights):
        a, a_dot = combined_response(geom, t)
        m_aa += w * (a.conj().T @ a)
        m_da += w * (a.conj().T @ a_dot)
        m_dd += w * (a_dot.conj().T @ a_dot)
    m_aa = check_hermitian(norm * m_aa, tol=1e-10)
    m_dd = check_hermitian(norm * a2 * m_dd, tol=1e-10)
    m_da = norm * a_mean * m_da
    return SensingMoments(m_aa=m_aa, m_da=m_da, m_dd=m_dd, quadrature_nodes=nodes,
                          alpha_mean=a_mean, alpha_second_moment=a2)


def moments_by_sampling(geom: ArrayGeometry, alpha_prior: ScalarPrior,
                        theta_prior: ScalarPrior, n_samples=10 ** 6, seed=0):
    """Monte Carlo estimate of the moment kernels (oracle for the quadrature).

    Samples the same truncated/effective distributions the quadrature uses.
    """
    rng = np.random.default_rng(seed)
    half = np.pi / 2
    if theta_prior.kind == "uniform":
        lo, hi = theta_prior.params
        thetas = rng.uniform(lo, hi, n_samples)
    else:
        mean, var = theta_prior.params
        thetas = mean + np.sqrt(var) * rng.standard_normal(int(n_samples * 1.5))
        thetas = thetas[np.abs(thetas) < half][:n_samples]
    a_mean, _ = alpha_moments(alpha_prior)
    var = alpha_prior.params[1]
    # E|alpha - m|^2 = var/2 under the library convention
    alphas = a_mean + np.sqrt(var / 4.0) * (
        rng.standard_normal(len(thetas)) + 1j * rng.standard_normal(len(thetas)))

    n_t, n_r = geom.n_tx, geom.n_rx
    norm = 1.0 / (n_t * n_r)
    idx_t = np.arange(n_t)
    idx_r = np.arange(n_r)
    m_aa = np.zeros((n_t, n_t), dtype=complex)
    m_da = np.zeros((n_t, n_t), dtype=complex)
    m_dd = np.zeros((n_t, n_t), dtype=complex)
    total = len(thetas)
    chunk = 20000
    for lo in range(0, total, chunk):
        th = thetas[lo:lo + chunk]
        al = alphas[lo:lo + chunk]
        s, c = np.sin(th), np.cos(th)
        a_t = np.exp(1j * np.pi * idx_t[None, :] * s[:, None])          # (S, n_t)
        a_r = np.exp(1j * np.pi * idx_r[None, :] * s[:, None])
        da_t = 1j * np.pi * idx_t[None, :] * c[:, None] * a_t
        da_r = 1j * np.pi * idx_r[None, :] * c[:, None] * a_r
        # A = a_r a_t^H:  A^H A = ||a_r||^2 a_t a_t^H with ||a_r||^2 = n_r
        m_aa += n_r * np.einsum('si,sj->ij', a_t, a_t.conj())
        # A^H Adot = (a_r^H da_r) a_t a_t_dot-structure, expanded directly
        r_dr = np.einsum('si,si->s', a_r.conj(), da_r)                  # a_r^H da_r
        m_da += np.einsum('s,si,sj->ij', al * r_dr, a_t, a_t.conj())
        m_da += n_r * np.einsum('s,si,sj->ij', al, a_t, da_t.conj())
        # Adot^H Adot expansion
        dr2 = np.einsum('si,si->s', da_r.conj(), da_r)
        aa2 = np.abs(al) ** 2
        m_dd += np.einsum('s,si,sj->ij', aa2 * dr2, a_t, a_t.conj())
        m_dd += np.einsum('s,si,sj->ij', aa2 * r_dr.conj(), a_t, da_t.conj())
        m_dd += np.einsum('s,si,sj->ij', aa2 * r_dr, da_t, a_t.conj())
        m_dd += n_r * np.einsum('s,si,sj->ij', aa2, da_t, da_t.conj())
    return (norm * m_aa / total, norm * m_da / total, norm * m_dd / total)


def beam_pattern(v_set, theta_grid, geom: ArrayGeometry = None, floor_db=-120.0):
    """Transmit power versus angle, in dB, with the per-user decomposition.

    Returns (total_db, per_user_db) where per_user_db has one row per grid
    angle and one column per beamformer.
    """
    v = np.asarray(v_set, dtype=complex)
    if v.ndim == 1:
        v = v[:, None]
    n_tx, n_users = v.shape
    if geom is None:
        geom = ArrayGeometry(n_tx=n_tx, n_rx=n_tx)
    theta_grid = np.asarray(theta_grid, dtype=float)
    lin_floor = 10.0 ** (floor_db / 10.0)
    per_user = np.empty((len(theta_grid), n_users))
    for i, t in enumerate(theta_grid):
        a = steering(geom, t, "tx")
        amp = np.abs(a.conj() @ v) ** 2
        per_user[i] = amp
    total = per_user.sum(axis=1)
    total_db = 10.0 * np.log10(np.maximum(total, lin_floor))
    per_user_db = 10.0 * np.log10(np.maximum(per_user, lin_floor))
    return total_db, per_user_db
