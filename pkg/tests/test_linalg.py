import numpy as np
import pytest

from osl_lab import linalg
from osl_lab.grassmann import Subspace, subspace_distance


def random_matrix(seed, m):
    return np.random.default_rng(seed).normal(size=(m, m))


class TestSvd:
    def test_identity(self):
        sd = linalg.svd(np.eye(3))
        assert np.allclose(sd.values, [1.0, 1.0, 1.0])

    def test_diagonal(self):
        sd = linalg.svd(np.diag([3.0, 1.0]))
        assert np.allclose(sd.values, [3.0, 1.0])
        top = linalg.most_expanding(np.diag([3.0, 1.0]), 1)
        assert np.allclose(np.abs(top.basis[:, 0]), [1.0, 0.0])

    def test_against_symmetric_eigensolve(self):
        # independent oracle: s_i^2 are the eigenvalues of g^T g
        g = random_matrix(42, 4)
        sd = linalg.svd(g)
        eig = np.sort(np.linalg.eigvalsh(g.T @ g))[::-1]
        assert np.allclose(sd.values ** 2, eig, rtol=1e-10)

    def test_reconstruction(self):
        for seed in range(20):
            g = random_matrix(seed, 5)
            sd = linalg.svd(g)
            err = np.linalg.norm(sd.reconstruct() - g, 2)
            assert err <= 1e-12 * max(1.0, np.linalg.norm(g, 2))

    def test_canonical_sign(self):
        g = random_matrix(3, 4)
        sd = linalg.svd(g)
        for j in range(4):
            i = np.argmax(np.abs(sd.right[:, j]))
            assert sd.right[i, j] > 0

    def test_rejects_nonfinite(self):
        g = np.eye(2)
        g[0, 0] = np.nan
        with pytest.raises(ValueError):
            linalg.svd(g)


class TestGapRatio:
    def test_diagonal(self):
        assert linalg.gap_ratio(np.diag([4.0, 2.0, 1.0]), 1) == pytest.approx(2.0)

    def test_identity(self):
        for k in (1, 2):
            assert linalg.gap_ratio(np.eye(3), k) == pytest.approx(1.0)

    def test_exterior_power_oracle(self):
        # gr_k = (||wedge_k g|| / ||wedge_{k-1} g||) / (||wedge_{k+1} g|| / ||wedge_k g||)
        g = random_matrix(7, 4)
        norms = [1.0] + [np.linalg.norm(linalg.exterior_power(g, k), 2)
                         for k in range(1, 5)]
        for k in (1, 2, 3):
            expect = (norms[k] / norms[k - 1]) / (norms[k + 1] / norms[k])
            assert linalg.gap_ratio(g, k) == pytest.approx(expect, rel=1e-9)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            linalg.gap_ratio(np.eye(3), 3)

    def test_underflow_sentinel(self):
        assert linalg.gap_ratio(np.diag([1.0, 0.0]), 1) == np.inf


class TestMostExpanding:
    def test_diagonal_plane(self):
        sub = linalg.most_expanding(np.diag([5.0, 2.0, 1.0]), 2)
        assert subspace_distance(sub, Subspace.coordinate(3, (0, 1))) < 1e-12

    def test_degenerate(self):
        with pytest.raises(linalg.DegenerateGap):
            linalg.most_expanding(np.eye(2), 1)

    def test_random_search_oracle(self):
        # the returned line must beat 10^4 random unit vectors
        rng = np.random.default_rng(11)
        for seed in range(5):
            g = random_matrix(seed + 100, 3)
            if linalg.gap_ratio(g, 1) <= 2.0:
                continue
            line = linalg.most_expanding(g, 1)
            achieved = np.linalg.norm(g @ line.basis[:, 0])
            trials = rng.normal(size=(10000, 3))
            trials /= np.linalg.norm(trials, axis=1, keepdims=True)
            best = np.max(np.linalg.norm(trials @ g.T, axis=1))
            assert achieved >= best - 1e-9

    def test_scale_invariance(self):
        g = random_matrix(5, 4)
        a = linalg.most_expanding(g, 1)
        b = linalg.most_expanding(7.5 * g, 1)
        assert subspace_distance(a, b) < 1e-12


class TestMostExpandingFlag:
    def test_diagonal(self):
        flag = linalg.most_expanding_flag(np.diag([8.0, 4.0, 2.0, 1.0]), (1, 3))
        assert flag.signature == (1, 3)
        assert subspace_distance(flag.components[0],
                                 Subspace.coordinate(4, (0,))) < 1e-12
        assert subspace_distance(flag.components[1],
                                 Subspace.coordinate(4, (0, 1, 2))) < 1e-12

    def test_single_component_matches_most_expanding(self):
        g = random_matrix(21, 4)
        flag = linalg.most_expanding_flag(g, (2,))
        sub = linalg.most_expanding(g, 2)
        assert subspace_distance(flag.components[0], sub) == 0.0

    def test_componentwise(self):
        g = random_matrix(23, 5)
        flag = linalg.most_expanding_flag(g, (2, 4))
        for t, comp in zip((2, 4), flag.components):
            assert subspace_distance(comp, linalg.most_expanding(g, t)) < 1e-12

    def test_reports_failing_index(self):
        g = np.diag([2.0, 1.0, 1.0, 0.5])
        with pytest.raises(linalg.DegenerateGap) as err:
            linalg.most_expanding_flag(g, (1, 2))
        assert err.value.k == 2


class TestExteriorPower:
    def test_k1_and_km(self):
        g = random_matrix(1, 3)
        assert np.allclose(linalg.exterior_power(g, 1), g)
        assert np.allclose(linalg.exterior_power(g, 3), [[np.linalg.det(g)]])

    def test_top_norm_is_product_of_svals(self):
        g = random_matrix(2, 4)
        s = linalg.svd(g).values
        w2 = linalg.exterior_power(g, 2)
        assert np.linalg.norm(w2, 2) == pytest.approx(s[0] * s[1], rel=1e-10)

    def test_multiplicative(self):
        g = random_matrix(3, 4)
        h = random_matrix(4, 4)
        for k in (1, 2, 3):
            lhs = linalg.exterior_power(g @ h, k)
            rhs = linalg.exterior_power(g, k) @ linalg.exterior_power(h, k)
            assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-12)

    def test_commutes_with_transpose(self):
        g = random_matrix(8, 4)
        assert np.allclose(linalg.exterior_power(g.T, 2),
                           linalg.exterior_power(g, 2).T)


class TestPseudoInverse:
    def test_invertible(self):
        g = random_matrix(9, 3) + 3 * np.eye(3)
        assert np.allclose(g @ linalg.pseudo_inverse(g), np.eye(3), atol=1e-10)

    def test_diagonal_rank_deficient(self):
        assert np.allclose(linalg.pseudo_inverse(np.diag([2.0, 0.0])),
                           np.diag([0.5, 0.0]))

    def test_moore_penrose_axioms(self):
        rng = np.random.default_rng(12)
        u, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        v, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        g = u @ np.diag([3.0, 1.0, 0.2, 0.0]) @ v.T
        gp = linalg.pseudo_inverse(g)
        assert np.allclose(g @ gp @ g, g, atol=1e-10)
        assert np.allclose(gp @ g @ gp, gp, atol=1e-10)
        assert np.allclose((g @ gp).T, g @ gp, atol=1e-10)
        assert np.allclose((gp @ g).T, gp @ g, atol=1e-10)

    def test_commutes_with_exterior_power(self):
        rng = np.random.default_rng(13)
        u, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        v, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        g = u @ np.diag([2.0, 1.0, 0.5, 0.0]) @ v.T
        for k in (1, 2, 3):
            lhs = linalg.exterior_power(linalg.pseudo_inverse(g), k)
            rhs = linalg.pseudo_inverse(linalg.exterior_power(g, k))
            assert np.allclose(lhs, rhs, atol=1e-9)


class TestRift:
    def test_identity_pair(self):
        assert linalg.rift(np.eye(2), np.eye(2)) == pytest.approx(1.0)

    def test_orthogonal_pair(self):
        rng = np.random.default_rng(14)
        q0, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        q1, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        assert linalg.rift(q0, q1) == pytest.approx(1.0)

    def test_ninety_degree_conjugation(self):
        delta = 1e-3
        g0 = np.diag([1.0, delta])
        r = np.array([[0.0, -1.0], [1.0, 0.0]])
        g1 = r @ g0 @ r.T
        expect = np.linalg.norm(g1 @ g0, 2)  # direct evaluation oracle
        assert linalg.rift(g0, g1) == pytest.approx(expect, rel=1e-12)
        assert linalg.rift(g0, g1) == pytest.approx(delta, rel=1e-9)

    def test_zero_rejected(self):
        with pytest.raises(linalg.ZeroMatrix):
            linalg.rift(np.zeros((2, 2)), np.eye(2))


class TestRelativeDistance:
    def test_equal(self):
        g = random_matrix(15, 3)
        assert linalg.relative_distance(g, g) == 0.0

    def test_double(self):
        g = random_matrix(16, 3)
        assert linalg.relative_distance(g, 2 * g) == pytest.approx(0.5)

    def test_scale_invariance(self):
        g1 = random_matrix(17, 3)
        g2 = random_matrix(18, 3)
        a = linalg.relative_distance(g1, g2)
        b = linalg.relative_distance(7 * g1, 7 * g2)
        assert a == pytest.approx(b, rel=1e-12)

    def test_both_zero(self):
        with pytest.raises(linalg.ZeroMatrix):
            linalg.relative_distance(np.zeros((2, 2)), np.zeros((2, 2)))


class TestScaledMatrix:
    def test_norm_window(self):
        g = random_matrix(19, 3) * 1e80
        sm = linalg.ScaledMatrix.from_matrix(g)
        norm = np.linalg.norm(sm.factor, 2)
        assert 0.5 <= norm <= 2.0
        assert sm.log_norm == pytest.approx(np.log(np.linalg.norm(g, 2)))

    def test_compose_adds_logs(self):
        a = linalg.ScaledMatrix.from_matrix(np.diag([2.0, 1.0]))
        b = linalg.ScaledMatrix.from_matrix(np.diag([8.0, 1.0]))
        c = a @ b
        assert c.log_norm == pytest.approx(np.log(16.0))

    def test_zero_matrix_sentinel(self):
        sm = linalg.ScaledMatrix.from_matrix(np.zeros((2, 2)))
        assert sm.log_scale == -np.inf


def test_singular_value_exterior_ratio_identity():
    # s_k(g) = ||wedge_k g|| / ||wedge_{k-1} g|| on 100 seeded matrices
    for seed in range(100):
        m = 2 + seed % 5
        g = random_matrix(seed, m)
        s = linalg.svd(g).values
        prev = 1.0
        for k in range(1, m + 1):
            cur = np.linalg.norm(linalg.exterior_power(g, k), 2)
            if prev > 1e-12:
                assert abs(s[k - 1] - cur / prev) <= 1e-9 * s[k - 1]
            prev = cur
