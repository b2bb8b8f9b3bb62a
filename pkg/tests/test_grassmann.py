import numpy as np
import pytest

from osl_lab import grassmann as gr
from osl_lab import linalg


def random_orthogonal(seed, m):
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(m, m)))
    return q


def random_flag(seed, m, tau):
    q = random_orthogonal(seed, m)
    comps = tuple(gr.Subspace(q[:, :t].copy()) for t in tau)
    return gr.Flag(tau, comps, ambient=m)


def rotate_subspace(sub, theta, axis_pair, m):
    r = np.eye(m)
    i, j = axis_pair
    r[i, i] = r[j, j] = np.cos(theta)
    r[i, j] = -np.sin(theta)
    r[j, i] = np.sin(theta)
    return gr.Subspace(r @ sub.basis)


class TestSubspace:
    def test_validates_orthonormality(self):
        with pytest.raises(ValueError):
            gr.Subspace(np.array([[1.0], [1.0]]))

    def test_from_columns(self):
        sub = gr.Subspace.from_columns(np.array([[1.0, 1.0],
                                                 [1.0, 0.0],
                                                 [0.0, 1.0]]))
        assert sub.dim == 2
        assert np.allclose(sub.basis.T @ sub.basis, np.eye(2))

    def test_complement(self):
        sub = gr.Subspace.coordinate(3, (0,))
        comp = sub.complement()
        assert comp.dim == 2
        assert np.allclose(sub.basis.T @ comp.basis, 0.0)


class TestSubspaceDistance:
    def test_equal(self):
        sub = gr.Subspace.coordinate(3, (0, 2))
        assert gr.subspace_distance(sub, sub) == 0.0

    def test_orthogonal_lines(self):
        e1 = gr.Subspace.coordinate(2, (0,))
        e2 = gr.Subspace.coordinate(2, (1,))
        assert gr.subspace_distance(e1, e2) == pytest.approx(1.0)

    def test_rotated_line(self):
        theta = 0.3
        e1 = gr.Subspace.coordinate(2, (0,))
        v = gr.Subspace(np.array([[np.cos(theta)], [np.sin(theta)]]))
        assert gr.subspace_distance(e1, v) == pytest.approx(np.sin(0.3), abs=1e-12)
        # projector-difference eigenvalue oracle
        diff = e1.projector() - v.projector()
        oracle = np.max(np.abs(np.linalg.eigvalsh(diff)))
        assert gr.subspace_distance(e1, v) == pytest.approx(oracle, abs=1e-12)

    def test_symmetry_and_triangle(self):
        subs = [gr.Subspace(random_orthogonal(s, 4)[:, :2]) for s in range(3)]
        d01 = gr.subspace_distance(subs[0], subs[1])
        d10 = gr.subspace_distance(subs[1], subs[0])
        d02 = gr.subspace_distance(subs[0], subs[2])
        d12 = gr.subspace_distance(subs[1], subs[2])
        assert d01 == pytest.approx(d10, abs=1e-14)
        assert d02 <= d01 + d12 + 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gr.subspace_distance(gr.Subspace.coordinate(3, (0,)),
                                 gr.Subspace.coordinate(3, (0, 1)))


class TestFlagDistance:
    def test_equal(self):
        f = random_flag(0, 4, (1, 3))
        assert gr.flag_distance(f, f) == 0.0

    def test_single_component_reduces(self):
        f = random_flag(1, 4, (2,))
        g = random_flag(2, 4, (2,))
        assert gr.flag_distance(f, g) == pytest.approx(
            gr.subspace_distance(f.components[0], g.components[0]))

    def test_componentwise_rotation(self):
        # rotate each component in a plane orthogonal to deeper components
        m = 4
        base = gr.Flag((1, 2), (gr.Subspace.coordinate(m, (0,)),
                                gr.Subspace.coordinate(m, (0, 1))), ambient=m)
        t1, t2 = 0.2, 0.35
        c1 = rotate_subspace(base.components[0], t1, (0, 3), m)
        c2 = rotate_subspace(base.components[1], t2, (1, 2), m)
        # rebuild nested flag: rotate the plane containing the rotated line
        r1 = gr.Flag((1,), (c1,), ambient=m)
        assert gr.flag_distance(
            r1, gr.Flag((1,), (base.components[0],), ambient=m)
        ) == pytest.approx(np.sin(t1), abs=1e-12)
        r2 = gr.Flag((2,), (c2,), ambient=m)
        assert gr.flag_distance(
            r2, gr.Flag((2,), (base.components[1],), ambient=m)
        ) == pytest.approx(np.sin(t2), abs=1e-12)

    def test_signature_mismatch(self):
        with pytest.raises(gr.SignatureError):
            gr.flag_distance(random_flag(1, 4, (1,)), random_flag(1, 4, (2,)))


class TestComplementFlag:
    def test_line_in_r3(self):
        f = gr.Flag((1,), (gr.Subspace.coordinate(3, (0,)),), ambient=3)
        fc = gr.complement_flag(f)
        assert fc.signature == (2,)
        assert gr.subspace_distance(fc.components[0],
                                    gr.Subspace.coordinate(3, (1, 2))) < 1e-12

    def test_involution(self):
        for seed in range(10):
            f = random_flag(seed, 5, (1, 3, 4))
            assert gr.flag_distance(gr.complement_flag(gr.complement_flag(f)),
                                    f) < 1e-10

    def test_isometry(self):
        for seed in range(100):
            f = random_flag(2 * seed, 4, (1, 2))
            g = random_flag(2 * seed + 1, 4, (1, 2))
            d = gr.flag_distance(f, g)
            dc = gr.flag_distance(gr.complement_flag(f), gr.complement_flag(g))
            assert abs(d - dc) < 1e-10


class TestRefinesAndProjections:
    def test_refines(self):
        assert gr.refines((1, 2, 3), (2, 3))
        assert gr.refines((1, 3), (1, 3))
        assert not gr.refines((1, 3), (2,))

    def test_project_flag_drops_component(self):
        f = random_flag(3, 5, (1, 2, 3))
        p = gr.project_flag(f, (2, 3))
        assert p.signature == (2, 3)
        assert gr.subspace_distance(p.components[0], f.components[1]) == 0.0

    def test_project_flag_identity(self):
        f = random_flag(4, 5, (1, 3))
        assert gr.flag_distance(gr.project_flag(f, (1, 3)), f) == 0.0

    def test_not_a_refinement(self):
        with pytest.raises(gr.NotARefinement):
            gr.project_flag(random_flag(5, 5, (1, 3)), (2,))

    def test_flag_projection_is_1_lipschitz(self):
        for seed in range(100):
            f = random_flag(3 * seed, 5, (1, 2, 4))
            g = random_flag(3 * seed + 1, 5, (1, 2, 4))
            for coarser in ((1,), (2, 4), (1, 4)):
                df = gr.flag_distance(gr.project_flag(f, coarser),
                                      gr.project_flag(g, coarser))
                assert df <= gr.flag_distance(f, g) + 1e-12

    def test_project_decomposition_merges(self):
        q = random_orthogonal(6, 5)
        comps = (gr.Subspace(q[:, :1]), gr.Subspace(q[:, 1:2]),
                 gr.Subspace(q[:, 2:4]), gr.Subspace(q[:, 4:]))
        d = gr.Decomposition((1, 2, 4), comps)
        p = gr.project_decomposition(d, (2, 4))
        assert p.signature == (2, 4)
        assert [c.dim for c in p.components] == [2, 2, 1]
        assert gr.subspace_distance(
            p.components[0], gr.Subspace(q[:, :2])) < 1e-12

    def test_project_decomposition_identity(self):
        q = random_orthogonal(7, 4)
        comps = (gr.Subspace(q[:, :2]), gr.Subspace(q[:, 2:]))
        d = gr.Decomposition((2,), comps)
        p = gr.project_decomposition(d, (2,))
        assert all(gr.subspace_distance(a, b) < 1e-12
                   for a, b in zip(d.components, p.components))

    def test_merged_dims_match_signature_differences(self):
        rng = np.random.default_rng(8)
        for seed in range(20):
            q = random_orthogonal(seed + 50, 6)
            tau = (1, 3, 4)
            bounds = (0,) + tau + (6,)
            comps = tuple(gr.Subspace(q[:, a:b])
                          for a, b in zip(bounds, bounds[1:]))
            d = gr.Decomposition(tau, comps)
            keep = tuple(sorted(rng.choice(tau, size=2, replace=False)))
            p = gr.project_decomposition(d, keep)
            kb = (0,) + keep + (6,)
            assert [c.dim for c in p.components] == list(np.diff(kb))


class TestAlignment:
    def test_equal(self):
        sub = gr.Subspace(random_orthogonal(9, 4)[:, :2])
        assert gr.alignment(sub, sub) == pytest.approx(1.0)

    def test_orthogonal_lines(self):
        assert gr.alignment(gr.Subspace.coordinate(2, (0,)),
                            gr.Subspace.coordinate(2, (1,))) == 0.0

    def test_angle_theta(self):
        theta = 0.3
        a = gr.Subspace.coordinate(2, (0,))
        b = gr.Subspace(np.array([[np.cos(theta)], [np.sin(theta)]]))
        assert gr.alignment(a, b) == pytest.approx(np.cos(0.3), abs=1e-12)

    def test_det_gram_oracle(self):
        for seed in range(20):
            qa = random_orthogonal(seed, 4)[:, :2]
            qb = random_orthogonal(seed + 200, 4)[:, :2]
            a = gr.alignment(gr.Subspace(qa), gr.Subspace(qb))
            assert a == pytest.approx(
                abs(np.linalg.det(qa.T @ qb)), abs=1e-12)


class TestTransversalityAndIntersect:
    def test_coordinate_flags(self):
        f = gr.Flag((1, 2), (gr.Subspace.coordinate(3, (0,)),
                             gr.Subspace.coordinate(3, (0, 1))), ambient=3)
        fp = gr.complement_flag(f)
        assert gr.transversality(f, fp) == pytest.approx(1.0)
        dec = gr.intersect(f, fp)
        for j, idx in enumerate(((0,), (1,), (2,))):
            assert gr.subspace_distance(dec.components[j],
                                        gr.Subspace.coordinate(3, idx)) < 1e-12

    def test_shared_line_is_degenerate(self):
        f = gr.Flag((1,), (gr.Subspace.coordinate(3, (0,)),), ambient=3)
        shared = gr.Flag((2,), (gr.Subspace.coordinate(3, (0, 1)),), ambient=3)
        # pair (F_1, G_1): G_1 contains F_1, so they share a line
        assert gr.transversality(f, shared) == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(gr.NonTransversal) as err:
            gr.intersect(f, shared)
        assert err.value.pair == 1

    def test_random_pairs_match_pairwise_oracle(self):
        for seed in range(30):
            f = random_flag(seed, 4, (1, 3))
            g = random_flag(seed + 500, 4, (1, 3))
            gp = gr.complement_flag(g)
            theta = gr.transversality(f, gp)
            oracle = min(
                gr.alignment(f.components[0],
                             gp.components[1].complement()),
                gr.alignment(f.components[1],
                             gp.components[0].complement()),
            )
            assert theta == pytest.approx(oracle, abs=1e-12)
            assert theta > 0

    def test_intersection_null_space_oracle(self):
        for seed in range(20):
            f = random_flag(seed, 5, (2, 3))
            g = random_flag(seed + 900, 5, (2, 3))
            gp = gr.complement_flag(g)
            if gr.transversality(f, gp) < 1e-3:
                continue
            dec = gr.intersect(f, gp)
            # each component lies in the null space of stacked projections
            # onto the complements of the two defining subspaces
            k = 2
            for j, comp in enumerate(dec.components, start=1):
                mats = []
                if j <= k:
                    mats.append(np.eye(5) - f.components[j - 1].projector())
                if k - j + 2 <= k:
                    mats.append(np.eye(5)
                                - gp.components[k - j + 1].projector())
                stacked = np.vstack(mats)
                assert np.linalg.norm(stacked @ comp.basis, 2) < 1e-9

    def test_reassembled_components_span(self):
        for seed in range(100):
            f = random_flag(seed, 4, (1, 2))
            gp = gr.complement_flag(random_flag(seed + 1000, 4, (1, 2)))
            theta = gr.transversality(f, gp)
            if theta < 1e-6:
                continue
            dec = gr.intersect(f, gp)
            smin = np.linalg.svd(dec.stacked_basis(), compute_uv=False)[-1]
            assert smin >= 1e-12


class TestMinAngleSine:
    def test_orthogonal_complements(self):
        u = gr.Subspace(random_orthogonal(31, 4)[:, :2])
        assert gr.min_angle_sine(u, u.complement()) == pytest.approx(1.0)

    def test_same_line(self):
        u = gr.Subspace.coordinate(2, (0,))
        assert gr.min_angle_sine(u, u) == pytest.approx(0.0, abs=1e-12)

    def test_lines_at_angle(self):
        theta = 0.2
        u = gr.Subspace.coordinate(2, (0,))
        w = gr.Subspace(np.array([[np.cos(theta)], [np.sin(theta)]]))
        assert gr.min_angle_sine(u, w) == pytest.approx(np.sin(0.2), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gr.min_angle_sine(gr.Subspace.coordinate(3, (0,)),
                              gr.Subspace.coordinate(3, (1,)))


def test_alignment_wedge_identity_via_exterior_power():
    # alignment of k-dim subspaces equals the alignment of their wedges,
    # computed through the compound-matrix route
    for seed in range(20):
        m, k = 4, 2
        qa = random_orthogonal(seed, m)
        qb = random_orthogonal(seed + 300, m)
        ea = gr.Subspace(qa[:, :k])
        eb = gr.Subspace(qb[:, :k])
        direct = gr.alignment(ea, eb)
        # embed the frames as the first k columns of square matrices and
        # read off the top-left entry of the wedge of the cross Gram matrix
        cross = qa.T @ qb
        wedge_cross = linalg.exterior_power(cross, k)
        assert direct == pytest.approx(abs(wedge_cross[0, 0]), abs=1e-9)
