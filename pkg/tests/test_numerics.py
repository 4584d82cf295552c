import numpy as np
import pytest

from isacbf.numerics import (LmiProblem, StructuralError, check_hermitian,
                             complex_from_embedding, hermitian_basis,
                             hermitian_from_params, hermitian_params,
                             hermitian_eig, is_psd, real_embed, sdp_solve,
                             smat, svec)

QB_REF = np.array([[1.2566, -0.0458], [-0.0458, 1.2566]])


def rand_hermitian(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


class TestHermitianEig:
    def test_identity(self):
        w, v = hermitian_eig(np.eye(3))
        assert np.allclose(w, 1.0)

    def test_reference_two_antenna_matrix(self):
        w, v = hermitian_eig(QB_REF)
        assert np.allclose(w, [1.2108, 1.3024], atol=1e-12)
        w2 = np.array([1.0, 1.0]) / np.sqrt(2)
        w1 = np.array([1.0, -1.0]) / np.sqrt(2)
        assert abs(abs(w2 @ v[:, 0]) - 1) < 1e-12
        assert abs(abs(w1 @ v[:, 1]) - 1) < 1e-12

    def test_2x2_closed_form(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = rand_hermitian(rng, 2)
            tr, det = np.real(np.trace(m)), np.real(np.linalg.det(m))
            disc = np.sqrt(max(tr * tr / 4 - det, 0.0))
            expect = np.array([tr / 2 - disc, tr / 2 + disc])
            w, _ = hermitian_eig(m)
            assert np.allclose(w, expect, atol=1e-10 * max(1, abs(tr)))

    def test_reconstruction_and_orthonormality(self):
        rng = np.random.default_rng(1)
        for n in (2, 5, 9):
            a = rand_hermitian(rng, n)
            w, v = hermitian_eig(a)
            scale = max(np.abs(a).max(), 1.0)
            assert np.abs(a - (v * w) @ v.conj().T).max() <= 1e-9 * scale
            assert np.abs(v.conj().T @ v - np.eye(n)).max() <= 1e-10
            assert (np.diff(w) >= -1e-14).all()

    def test_rejects_non_hermitian(self):
        with pytest.raises(StructuralError):
            hermitian_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestIsPsd:
    def test_identity(self):
        assert is_psd(np.eye(4))

    def test_reference_threshold(self):
        assert not is_psd(1.30 * np.eye(2) - QB_REF)
        assert is_psd(1.31 * np.eye(2) - QB_REF)

    def test_agrees_with_min_eigenvalue(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            m = rand_hermitian(rng, 4)
            wmin = np.linalg.eigvalsh(m)[0]
            scale = max(np.abs(m).max(), 1.0)
            if abs(wmin) > 1e-8 * scale:
                assert is_psd(m) == (wmin > 0)


class TestRealEmbed:
    def test_real_input_block_diagonal(self):
        a = np.array([[2.0, 1.0], [1.0, 3.0]])
        e = real_embed(a)
        assert np.allclose(e[:2, :2], a)
        assert np.allclose(e[2:, 2:], a)
        assert np.allclose(e[:2, 2:], 0)

    def test_pauli_like_matrix(self):
        a = np.array([[0.0, 1j], [-1j, 0.0]])
        w = np.linalg.eigvalsh(real_embed(a))
        assert np.allclose(w, [-1, -1, 1, 1], atol=1e-12)

    def test_spectrum_doubling_and_psd(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            a = rand_hermitian(rng, 3)
            we = np.linalg.eigvalsh(real_embed(a))
            wa = np.linalg.eigvalsh(a)
            assert np.allclose(we, np.repeat(wa, 2), atol=1e-10)
            assert is_psd(a) == is_psd(real_embed(a))

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        a = rand_hermitian(rng, 5)
        assert np.abs(complex_from_embedding(real_embed(a)) - a).max() < 1e-14


class TestSvec:
    def test_round_trip_and_inner_product(self):
        rng = np.random.default_rng(5)
        for n in (1, 3, 6):
            a = rng.standard_normal((n, n)); a = a + a.T
            b = rng.standard_normal((n, n)); b = b + b.T
            assert np.abs(smat(svec(a), n) - a).max() < 1e-14
            assert abs(svec(a) @ svec(b) - np.trace(a @ b)) < 1e-12

    def test_hermitian_parameterization(self):
        rng = np.random.default_rng(6)
        a = rand_hermitian(rng, 4)
        p = hermitian_params(a)
        assert np.abs(hermitian_from_params(p, 4) - a).max() < 1e-14
        basis = hermitian_basis(4)
        assert len(basis) == 16
        gram = np.array([[np.real(np.trace(x @ y)) for x in basis] for y in basis])
        assert np.abs(gram - np.eye(16)).max() < 1e-14


class TestSdpSolve:
    def test_max_eigenvalue_form(self):
        # maximize t s.t. Q - t I >= 0 has optimum at the smallest eigenvalue
        p = LmiProblem(num_vars=1, objective=np.array([-1.0]))
        p.add_block(QB_REF, -np.eye(2)[None, :, :])
        sol = sdp_solve(p)
        assert sol.status in ("optimal", "max_iter")
        assert abs(-sol.objective - 1.2108) < 1e-6

    def test_reference_admissibility_pair(self):
        # feasibility system: exists z >= 0 with the two per-user LMIs
        h = np.eye(2)
        gamma = [4.0, 2.0]

        def feas(lam):
            p = LmiProblem(num_vars=2, objective=np.ones(2),
                           nonneg=np.ones(2, dtype=bool))
            for k in range(2):
                fis = [real_embed((-1 / gamma[i] if i == k else 1.0)
                                  * np.outer(h[:, i], h[:, i])) for i in range(2)]
                p.add_block(real_embed(lam * np.eye(2) - QB_REF), np.stack(fis))
            return sdp_solve(p)

        assert feas(1.3).status in ("optimal", "max_iter")
        assert feas(1.25).status == "infeasible"

    def test_strict_conic_pair_duality(self):
        # primal-style LMI and its hand-derived dual agree at the optimum:
        #   min c^T x s.t. F0 + sum x_i Fi >= 0
        #   max -Tr(F0 Z) s.t. Tr(Fi Z) = c_i, Z >= 0
        rng = np.random.default_rng(7)
        n, m = 5, 3
        fis = np.stack([(lambda a: a + a.T)(rng.standard_normal((n, n))) for _ in range(m)])
        f0 = 3.0 * np.eye(n)
        c = rng.standard_normal(m)
        p = LmiProblem(num_vars=m, objective=c)
        p.add_block(f0, fis)
        sol = sdp_solve(p)
        assert sol.kkt_residual < 1e-6
        z = sol.dual_blocks[0]
        assert np.linalg.eigvalsh(z)[0] > -1e-8
        for i in range(m):
            assert abs(np.trace(fis[i] @ z) - c[i]) < 1e-5
        assert abs(-np.trace(f0 @ z) - sol.objective) < 1e-5 * (1 + abs(sol.objective))

    def test_unbounded_certificate(self):
        # min -x with x >= 1 is unbounded below
        p = LmiProblem(num_vars=1, objective=np.array([-1.0]))
        p.add_scalar(-1.0, [1.0])
        sol = sdp_solve(p)
        assert sol.status == "unbounded"
        assert sol.certificate is not None

    def test_scalar_lp(self):
        p = LmiProblem(num_vars=1, objective=np.array([1.0]))
        p.add_scalar(-1.0, [1.0])
        sol = sdp_solve(p)
        assert sol.status == "optimal"
        assert abs(sol.x[0] - 1.0) < 1e-7

    def test_determinism(self):
        rng = np.random.default_rng(8)
        fis = np.stack([(lambda a: a + a.T)(rng.standard_normal((4, 4))) for _ in range(2)])
        c = rng.standard_normal(2)
        outs = []
        for _ in range(2):
            p = LmiProblem(num_vars=2, objective=c.copy())
            p.add_block(2.0 * np.eye(4), fis.copy())
            outs.append(sdp_solve(p).x.copy())
        assert np.array_equal(outs[0], outs[1])


def test_check_hermitian_symmetrizes():
    a = np.array([[1.0 + 1e-15j, 0.5], [0.5, 2.0]])
    out = check_hermitian(a)
    assert np.isreal(np.diag(out)).all()
