"""Dense Hermitian linear algebra and a small dense SDP core.

The solver handles linear matrix inequality problems of the form

    minimize    c^T x
    subject to  F0_b + sum_i x_i Fi_b  >=  0   (PSD, for every block b)
                x_i >= 0                        (for flagged variables)

via a homogeneous self-dual interior-point method with Nesterov-Todd
scaling.  All blocks are real symmetric; complex Hermitian data enters
through :func:`real_embed`.  Problem sizes are desk scale (block dims of
a few tens, up to ~2000 scalar variables), so everything is dense.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


HERM_TOL = 1e-12


class StructuralError(ValueError):
    """Input violates a structural contract (e.g. non-Hermitian matrix)."""


def check_hermitian(a, tol=HERM_TOL):
    """Validate Hermitian symmetry relative to the max-abs entry.

    Returns the exactly Hermitian symmetrization (real diagonal).
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(), 1.0)
    dev = np.abs(a - a.conj().T).max()
    if dev > tol * scale * 10:
        raise StructuralError(f"matrix is not Hermitian: max deviation {dev:.3e}")
    return 0.5 * (a + a.conj().T)


def hermitian_eig(a):
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, eigenvectors as orthonormal columns).
    Raises StructuralError if the input is not Hermitian to tolerance.
    """
    a = check_hermitian(a)
    w, v = np.linalg.eigh(a)
    return w, v


def is_psd(a, tol=1e-10):
    """True iff the smallest eigenvalue is >= -tol * ||a||."""
    a = check_hermitian(a)
    scale = max(np.abs(a).max(), 1.0)
    wmin = np.linalg.eigvalsh(a)[0]
    return bool(wmin >= -tol * scale)


def real_embed(a):
    """Embed a Hermitian n x n matrix as a real symmetric 2n x 2n matrix.

    The embedding [[Re a, -Im a], [Im a, Re a]] is PSD iff `a` is PSD and
    carries each eigenvalue of `a` with doubled multiplicity.  Traces obey
    Tr(embed(A) embed(B)) = 2 Re Tr(A B).
    """
    a = np.asarray(a, dtype=complex)
    re, im = a.real, a.imag
    return np.block([[re, -im], [im, re]])


def complex_from_embedding(m):
    """Inverse of real_embed (projects onto the embedded subspace)."""
    n = m.shape[0] // 2
    re = 0.5 * (m[:n, :n] + m[n:, n:])
    im = 0.5 * (m[n:, :n] - m[:n, n:])
    return re + 1j * im


# ---------------------------------------------------------------------------
# symmetric vectorization and Hermitian parameterization
# ---------------------------------------------------------------------------

_SQRT2 = np.sqrt(2.0)


def svec_dim(d):
    return d * (d + 1) // 2


def _tril_diag_positions(d):
    return np.cumsum(np.arange(1, d + 1)) - 1


def svec(m):
    """Stack the lower triangle of a symmetric matrix, off-diagonals * sqrt(2).

    With this scaling svec(A) . svec(B) = Tr(A B).
    """
    d = m.shape[0]
    out = m[np.tril_indices(d)] * _SQRT2
    out[_tril_diag_positions(d)] = np.diag(m)
    return out


def smat(v, d):
    """Inverse of svec."""
    m = np.zeros((d, d))
    m[np.tril_indices(d)] = v / _SQRT2
    m = m + m.T
    m[np.diag_indices(d)] = v[_tril_diag_positions(d)]
    return m


def hermitian_basis(n):
    """Orthonormal real basis of the n x n Hermitian matrices (n^2 elements).

    Ordering: diagonal E_kk, then for k < l the pair (E_kl + E_lk)/sqrt(2)
    and i(E_kl - E_lk)/sqrt(2).  Orthonormal under <A, B> = Re Tr(A B).
    """
    basis = []
    for k in range(n):
        b = np.zeros((n, n), dtype=complex)
        b[k, k] = 1.0
        basis.append(b)
    for k in range(n):
        for l in range(k + 1, n):
            b = np.zeros((n, n), dtype=complex)
            b[k, l] = b[l, k] = 1.0 / _SQRT2
            basis.append(b)
            b = np.zeros((n, n), dtype=complex)
            b[k, l] = -1j / _SQRT2
            b[l, k] = 1j / _SQRT2
            basis.append(b)
    return basis


def hermitian_from_params(params, n):
    """Assemble a Hermitian matrix from its n^2 real basis coefficients."""
    m = np.zeros((n, n), dtype=complex)
    for k in range(n):
        m[k, k] = params[k]
    idx = n
    for k in range(n):
        for l in range(k + 1, n):
            re = params[idx] / _SQRT2
            im = params[idx + 1] / _SQRT2
            m[k, l] = re - 1j * im
            m[l, k] = re + 1j * im
            idx += 2
    return m


def hermitian_params(m):
    """Inverse of hermitian_from_params."""
    n = m.shape[0]
    out = np.empty(n * n)
    out[:n] = np.diag(m).real
    idx = n
    for k in range(n):
        for l in range(k + 1, n):
            out[idx] = m[k, l].real * _SQRT2
            out[idx + 1] = -m[k, l].imag * _SQRT2
            idx += 2
    return out


# ---------------------------------------------------------------------------
# LMI problem container
# ---------------------------------------------------------------------------


@dataclass
class LmiProblem:
    """min c^T x  s.t.  F0_b + sum_i x_i Fi_b >= 0 per block, x_i >= 0 if flagged.

    Each block holds (F0, Fs) of real symmetric matrices with Fs stacked as
    an (m, d, d) tensor.  One-dimensional blocks encode scalar inequalities.
    """

    num_vars: int
    objective: np.ndarray
    blocks: list = field(default_factory=list)
    nonneg: np.ndarray | None = None

    def add_block(self, f0, fis, var_idx=None):
        """Add one LMI block.  `var_idx` restricts the coefficient matrices to
        a subset of the variables (the rest enter with zero coefficients)."""
        f0 = np.asarray(f0, dtype=float)
        fis = np.asarray(fis, dtype=float)
        if var_idx is None:
            var_idx = np.arange(self.num_vars)
        else:
            var_idx = np.asarray(var_idx, dtype=int)
        if fis.shape[0] != len(var_idx):
            raise StructuralError(
                f"block has {fis.shape[0]} coefficient matrices for {len(var_idx)} variables")
        if f0.shape != fis.shape[1:]:
            raise StructuralError("F0 dim does not match the block's Fi dims")
        self.blocks.append((f0, fis, var_idx))

    def add_scalar(self, f0, coeffs, var_idx=None):
        """Scalar inequality f0 + coeffs.x >= 0 as a 1x1 block."""
        coeffs = np.asarray(coeffs, dtype=float)
        self.add_block(np.array([[float(f0)]]),
                       coeffs.reshape(len(coeffs), 1, 1), var_idx)


@dataclass
class SdpSolution:
    status: str                      # optimal | infeasible | unbounded | max_iter
    x: np.ndarray | None = None
    dual_blocks: list | None = None  # PSD multipliers, one per block
    objective: float | None = None
    kkt_residual: float | None = None
    certificate: dict | None = None  # improving-ray / infeasibility witness
    iterations: int = 0


# ---------------------------------------------------------------------------
# interior-point core
# ---------------------------------------------------------------------------


def _max_step_scaled(lam, delta):
    """Largest alpha with diag(lam) + alpha*delta PSD (delta symmetric)."""
    li = 1.0 / np.sqrt(lam)
    m = (li[:, None] * delta) * li[None, :]
    wmin = np.linalg.eigvalsh(0.5 * (m + m.T))[0]
    if wmin >= 0:
        return np.inf
    return 1.0 / (-wmin)


def _nt_scaling_psd(s_mat, z_mat):
    """Nesterov-Todd scaling of one PSD block.

    Returns (r, rinv, lam) with r^{-1} S r^{-T} = r^T Z r = diag(lam).
    """
    d = s_mat.shape[0]
    jitter = 0.0
    for _ in range(3):
        try:
            ls = np.linalg.cholesky(s_mat + jitter * np.eye(d))
            lz = np.linalg.cholesky(z_mat + jitter * np.eye(d))
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100, 1e-14 * max(np.trace(s_mat), np.trace(z_mat)))
    else:
        raise np.linalg.LinAlgError("cone iterate lost definiteness")
    u, sig, vt = np.linalg.svd(lz.T @ ls)
    sqrt_sig = np.sqrt(sig)
    r = (ls @ vt.T) / sqrt_sig[None, :]
    ls_inv = scipy.linalg.solve_triangular(ls, np.eye(d), lower=True)
    rinv = (vt.T * sqrt_sig[None, :]).T @ ls_inv
    return r, rinv, sig


def sdp_solve(prob: LmiProblem, tol=1e-8, max_iter=200, verbose=False):
    """Solve an LmiProblem with a homogeneous self-dual interior-point method.

    Status meanings:
      optimal    - x attains the optimum; dual_blocks are PSD multipliers Z_b
                   with sum_b Tr(Fi_b Z_b) ~ c_i (complementarity to the LMIs).
      infeasible - no x satisfies the constraints; certificate carries Z_b >= 0
                   with sum_b Tr(Fi_b Z_b) ~ 0 and sum_b Tr(F0_b Z_b) < 0.
      unbounded  - an improving ray exists; certificate carries it.
      max_iter   - best iterate returned, caller decides.
    """
    m = prob.num_vars
    c = np.asarray(prob.objective, dtype=float).copy()
    if c.shape != (m,):
        raise StructuralError("objective length does not match num_vars")

    blocks = [(np.asarray(f0, float), np.asarray(fis, float), np.asarray(idx, int))
              for f0, fis, idx in prob.blocks]
    nonneg = np.zeros(m, dtype=bool) if prob.nonneg is None else np.asarray(prob.nonneg, bool)

    dims = [f0.shape[0] for f0, _, _ in blocks]
    nlin = int(nonneg.sum())
    lin_idx = np.where(nonneg)[0]
    sdims = [svec_dim(d) for d in dims]
    if nlin + sum(sdims) == 0:
        raise StructuralError("problem has no conic constraints")

    dscale = max([1.0] + [abs(f0).max() for f0, _, _ in blocks]
                 + [abs(fis).max() for _, fis, _ in blocks])
    cscale = max(1.0, np.abs(c).max())
    c_s = c / cscale

    G_parts, h_parts, F_tensors, F_idx = [], [], [], []
    if nlin:
        g = np.zeros((nlin, m))
        g[np.arange(nlin), lin_idx] = -1.0
        G_parts.append(g)
        h_parts.append(np.zeros(nlin))
    for (f0, fis, idx), d, sd in zip(blocks, dims, sdims):
        fis_s = fis / dscale
        rows = np.zeros((sd, m))
        for j, i in enumerate(idx):
            rows[:, i] = -svec(fis_s[j])
        G_parts.append(rows)
        h_parts.append(svec(f0 / dscale))
        F_tensors.append(fis_s)
        F_idx.append(idx)
    G = np.vstack(G_parts)
    h = np.concatenate(h_parts)
    degree = nlin + sum(dims)

    def split(v):
        lin = v[:nlin]
        mats, off = [], nlin
        for d, sd in zip(dims, sdims):
            mats.append(smat(v[off:off + sd], d))
            off += sd
        return lin, mats

    def join(lin, mats):
        parts = [np.asarray(lin, float).ravel()] if nlin else []
        parts += [svec(mm) for mm in mats]
        return np.concatenate(parts)

    x = np.zeros(m)
    s = join(np.ones(nlin), [np.eye(d) for d in dims])
    z = s.copy()
    tau, kappa = 1.0, 1.0

    status = "max_iter"
    best = None
    best_metric = np.inf
    stall = 0
    ref0 = None
    pres = dres = relgap = np.inf
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        rx = G.T @ z + c_s * tau
        rz = s + G @ x - h * tau
        rtau = kappa + c_s @ x + h @ z
        mu = (s @ z + tau * kappa) / (degree + 1)

        xh, sh, zh = x / tau, s / tau, z / tau
        pres = np.linalg.norm(G @ xh + sh - h) / max(1.0, np.linalg.norm(h))
        dres = np.linalg.norm(G.T @ zh + c_s) / max(1.0, np.linalg.norm(c_s))
        gap = sh @ zh
        relgap = gap / max(1.0, abs(c_s @ xh))
        if verbose:
            print(f"  it={n_iter:3d} pres={pres:.2e} dres={dres:.2e} relgap={relgap:.2e} "
                  f"mu={mu:.2e} tau={tau:.2e} kappa={kappa:.2e}")
        if pres <= tol and dres <= tol and relgap <= tol:
            status = "optimal"
            break
        metric = float(max(pres, dres, relgap))
        if metric < 0.9 * best_metric:
            best_metric = metric
            best = (xh.copy(), (z / tau).copy(), metric)
            stall = 0
        else:
            stall += 1
            if stall >= 8:
                break
        if ref0 is None:
            ref0 = (max(pres, 1e-300), max(dres, 1e-300), max(mu, 1e-300))

        # certificate tests
        hz = h @ z
        if hz < -1e-10:
            zb = z / (-hz)
            if np.linalg.norm(G.T @ zb) <= np.sqrt(tol):
                status = "infeasible"
                break
        cx = c_s @ x
        if cx < -1e-10:
            xb = x / (-cx)
            if np.linalg.norm(G @ xb + s / (-cx)) <= np.sqrt(tol):
                status = "unbounded"
                break

        # NT scalings
        s_lin, s_mats = split(s)
        z_lin, z_mats = split(z)
        w_lin = np.sqrt(s_lin / z_lin) if nlin else np.zeros(0)
        lam_lin = np.sqrt(s_lin * z_lin) if nlin else np.zeros(0)
        try:
            scal = [_nt_scaling_psd(sm, zm) for sm, zm in zip(s_mats, z_mats)]
        except np.linalg.LinAlgError:
            break
        w2inv = [rinv.T @ rinv for _, rinv, _ in scal]

        def apply_winv2(vec):
            lin, mats = split(vec)
            lin2 = lin / (w_lin ** 2) if nlin else lin
            return join(lin2, [wi @ mm @ wi for wi, mm in zip(w2inv, mats)])

        # scaled constraint matrix Ghat = W^{-1} o G; the Schur complement of the
        # Newton system is Ghat^T Ghat, solved via QR for numerical range
        ghat_parts = []
        if nlin:
            ghat_parts.append(G[:nlin] / w_lin[:, None])
        for bi, d in enumerate(dims):
            fis = F_tensors[bi]
            idx = F_idx[bi]
            rinv = scal[bi][1]
            tr = np.einsum('ab,ibc,dc->iad', rinv, fis, rinv, optimize=True)
            rows = np.zeros((svec_dim(d), m))
            for j, i in enumerate(idx):
                rows[:, i] = -svec(0.5 * (tr[j] + tr[j].T))
            ghat_parts.append(rows)
        Ghat = np.vstack(ghat_parts)
        try:
            Rq = scipy.linalg.qr(Ghat, mode="economic")[1]
        except scipy.linalg.LinAlgError:
            break
        rdiag = np.abs(np.diag(Rq))
        if rdiag.min() < 1e-150:
            break

        def solveH(rhs):
            y = scipy.linalg.solve_triangular(Rq.T, rhs, lower=True)
            return scipy.linalg.solve_triangular(Rq, y, lower=False)

        wh = apply_winv2(h)
        gt_wh = G.T @ wh
        dx1 = solveH(gt_wh - c_s)

        def newton_once(rx_in, rz_in, rtau_in, t_lin, t_mats, t_tk):
            """Solve one linearized KKT system:

              G^T dz + c dtau            = -rx_in
              G dx + ds - h dtau         = -rz_in
              c^T dx + h^T dz + dkappa   = -rtau_in
              DS~ + DZ~ = T (scaled),  kappa dtau + tau dkappa = t_tk
            """
            lin_known = w_lin * t_lin if nlin else t_lin
            mats_known = [r @ tm @ r.T for (r, _, _), tm in zip(scal, t_mats)]
            known = join(lin_known, mats_known)
            q = apply_winv2(known + rz_in)
            dx0 = solveH(-rx_in - G.T @ q)
            a0 = c_s @ dx0 + wh @ (G @ dx0) + wh @ (known + rz_in)
            a1 = c_s @ dx1 + wh @ (G @ dx1) - wh @ h
            lhs = a1 - kappa / tau
            dtau = (-rtau_in - a0 - t_tk / tau) / lhs
            dx = dx0 + dtau * dx1
            dz = apply_winv2(G @ dx - h * dtau + known + rz_in)
            lin_dz, mats_dz = split(dz)
            lin_ds = w_lin * (t_lin - w_lin * lin_dz) if nlin else lin_dz[:0]
            mats_ds = [r @ (tm - r.T @ dzm @ r) @ r.T
                       for (r, _, _), tm, dzm in zip(scal, t_mats, mats_dz)]
            ds = join(lin_ds, mats_ds)
            dkappa = (t_tk - kappa * dtau) / tau
            return dx, ds, dz, dtau, dkappa

        def newton(t_lin, t_mats, t_tk, refine=2):
            """newton_once plus iterative refinement against the exact equations."""
            dx, ds, dz, dtau, dkappa = newton_once(rx, rz, rtau, t_lin, t_mats, t_tk)
            for _ in range(refine):
                e1 = G.T @ dz + c_s * dtau + rx
                e2 = G @ dx + ds - h * dtau + rz
                e3 = c_s @ dx + h @ dz + dkappa + rtau
                lin_ds, mats_ds = split(ds)
                lin_dz, mats_dz = split(dz)
                e4_lin = (lin_ds / w_lin + w_lin * lin_dz - t_lin) if nlin else lin_ds
                e4_mats = []
                for (r, rinv, _), dsm, dzm, tm in zip(scal, mats_ds, mats_dz, t_mats):
                    a = rinv @ dsm @ rinv.T
                    b = r.T @ dzm @ r
                    e4_mats.append(0.5 * (a + a.T + b + b.T) - tm)
                e5 = kappa * dtau + tau * dkappa - t_tk
                err = max(np.abs(e1).max(initial=0), np.abs(e2).max(initial=0),
                          abs(e3), abs(e5),
                          max((np.abs(mm).max() for mm in e4_mats), default=0.0),
                          np.abs(e4_lin).max(initial=0))
                if err < 1e-14:
                    break
                cx_, cs_, cz_, ctau_, ckappa_ = newton_once(
                    e1, e2, e3, -e4_lin, [-mm for mm in e4_mats], -e5)
                dx = dx + cx_
                ds = ds + cs_
                dz = dz + cz_
                dtau = dtau + ctau_
                dkappa = dkappa + ckappa_
            return dx, ds, dz, dtau, dkappa

        def max_step(ds, dz, dtau, dkappa):
            alpha = 1.0
            lin_ds, mats_ds = split(ds)
            lin_dz, mats_dz = split(dz)
            if nlin:
                neg = lin_ds < 0
                if neg.any():
                    alpha = min(alpha, float(np.min(-s_lin[neg] / lin_ds[neg])))
                neg = lin_dz < 0
                if neg.any():
                    alpha = min(alpha, float(np.min(-z_lin[neg] / lin_dz[neg])))
            for (r, rinv, lam), dsm, dzm in zip(scal, mats_ds, mats_dz):
                ds_t = rinv @ dsm @ rinv.T
                dz_t = r.T @ dzm @ r
                alpha = min(alpha, _max_step_scaled(lam, 0.5 * (ds_t + ds_t.T)))
                alpha = min(alpha, _max_step_scaled(lam, 0.5 * (dz_t + dz_t.T)))
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0:
                alpha = min(alpha, -kappa / dkappa)
            return alpha

        # predictor: T = L_Lambda^{-1}(-lambda o lambda) = -diag(lambda)
        t_lin_a = -lam_lin
        t_mats_a = [-np.diag(lam) for _, _, lam in scal]
        dxa, dsa, dza, dtaua, dkappaa = newton(t_lin_a, t_mats_a, -tau * kappa)
        alpha_a = min(1.0, max_step(dsa, dza, dtaua, dkappaa))
        frac = ((s + alpha_a * dsa) @ (z + alpha_a * dza)
                + (tau + alpha_a * dtaua) * (kappa + alpha_a * dkappaa)) / (s @ z + tau * kappa)
        sigma = min(max(frac, 0.0), 1.0) ** 3
        # keep the gap from outrunning the residuals; directions degrade when
        # mu is far below the attainable residual level
        p0, d0, mu0 = ref0
        lag = max(pres / p0, dres / d0)
        if mu / mu0 < 0.05 * lag:
            sigma = max(sigma, 0.5)

        # corrector targets, L_Lambda^{-1} applied entrywise
        lin_dsa, mats_dsa = split(dsa)
        lin_dza, mats_dza = split(dza)
        if nlin:
            t_lin = -lam_lin + (sigma * mu - lin_dsa * lin_dza) / lam_lin
        else:
            t_lin = lam_lin
        t_mats = []
        for (r, rinv, lam), dsm, dzm in zip(scal, mats_dsa, mats_dza):
            a = rinv @ dsm @ rinv.T
            b = r.T @ dzm @ r
            cross = 0.5 * (a @ b + b @ a)
            tgt = -np.diag(lam ** 2) + sigma * mu * np.eye(len(lam)) - cross
            t_mats.append(2.0 * tgt / (lam[:, None] + lam[None, :]))
        t_tk = -tau * kappa + sigma * mu - dtaua * dkappaa
        dx, ds, dz, dtau, dkappa = newton(t_lin, t_mats, t_tk)

        alpha = min(1.0, 0.99 * max_step(ds, dz, dtau, dkappa))
        if not np.isfinite(alpha) or alpha <= 0:
            break
        x += alpha * dx
        s += alpha * ds
        z += alpha * dz
        tau += alpha * dtau
        kappa += alpha * dkappa

    if status == "optimal":
        xh = x / tau
        lin_z, zmats = split(z / tau)
        duals = [mm * cscale / dscale for mm in zmats]
        return SdpSolution(status="optimal", x=xh, dual_blocks=duals,
                           objective=float(c @ xh),
                           kkt_residual=float(max(pres, dres, relgap)),
                           certificate={"lin_multipliers": lin_z * cscale},
                           iterations=n_iter)
    if status == "infeasible":
        nrm = -(h @ z)
        lin_z, zmats = split(z / nrm)
        duals = [mm / dscale for mm in zmats]
        return SdpSolution(status="infeasible", dual_blocks=duals,
                           certificate={"dual_ray_lin": lin_z,
                                        "residual": float(np.linalg.norm(G.T @ z / nrm))},
                           kkt_residual=float(np.linalg.norm(G.T @ z / nrm)),
                           iterations=n_iter)
    if status == "unbounded":
        ray = x / (-(c_s @ x))
        return SdpSolution(status="unbounded", x=ray * cscale / cscale,
                           certificate={"improving_ray": ray},
                           iterations=n_iter)
    if best is not None:
        xb, zb, kkt = best
        if kkt <= tol:
            status = "optimal"
        lin_z, zmats = split(zb)
        duals = [mm * cscale / dscale for mm in zmats]
        return SdpSolution(status="optimal" if kkt <= tol else "max_iter",
                           x=xb, dual_blocks=duals, objective=float(c @ xb),
                           kkt_residual=kkt,
                           certificate={"lin_multipliers": lin_z * cscale},
                           iterations=n_iter)
    return SdpSolution(status="max_iter", iterations=n_iter)
