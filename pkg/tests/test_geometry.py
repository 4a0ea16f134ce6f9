"""Geometry oracles: closed forms, finite differences, brute-force scans."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emprobe import geometry as G
from emprobe.errors import AmbiguousProjection, ContinuumReflector, \
    OutsideCollar


def brute_surface_distance(obstacle, x, n_theta=400, n_phi=800):
    """Dense parametric scan of min |y - x| over the boundary."""
    th = np.linspace(0.0, np.pi, n_theta)
    ph = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
    T, P = np.meshgrid(th, ph, indexing="ij")
    if isinstance(obstacle, G.Sphere):
        a = np.full(3, obstacle.radius)
        c, Rf = obstacle.center, np.eye(3)
    else:
        a = obstacle.semiaxes
        c, Rf = obstacle.center, obstacle.frame
    pts = np.stack([a[0] * np.sin(T) * np.cos(P),
                    a[1] * np.sin(T) * np.sin(P),
                    a[2] * np.cos(T)], axis=-1)
    pts = c + pts @ Rf.T
    return float(np.min(np.linalg.norm(pts - np.asarray(x), axis=-1)))


class TestSphere:
    def test_sdf_closed_form(self):
        s = G.Sphere((1.0, -2.0, 0.5), 1.5)
        assert G.signed_distance(s, [1.0, -2.0, 3.0]) == pytest.approx(1.0)
        assert G.signed_distance(s, [1.0, -2.0, 0.5]) == pytest.approx(-1.5)
        x = np.array([[1.0, -0.5, 0.5], [4.0, -2.0, 0.5]])
        np.testing.assert_allclose(s.sdf(x), [0.0, 1.5], atol=1e-14)

    def test_nearest_and_shape(self):
        s = G.Sphere((0, 0, 0), 2.0)
        sp = G.nearest_point(s, [5.0, 0.0, 0.0])
        np.testing.assert_allclose(sp.q, [2, 0, 0], atol=1e-14)
        np.testing.assert_allclose(sp.nu, [1, 0, 0], atol=1e-14)
        np.testing.assert_allclose(sp.shape, -0.5 * np.eye(2), atol=1e-14)
        K, H = G.curvature_invariants(sp.shape)
        assert K == pytest.approx(0.25)
        assert H == pytest.approx(-0.5)
        # frame is orthonormal and perpendicular to nu
        np.testing.assert_allclose(sp.tangent_frame @ sp.tangent_frame.T,
                                   np.eye(2), atol=1e-13)
        np.testing.assert_allclose(sp.tangent_frame @ sp.nu, 0, atol=1e-13)

    def test_center_is_ambiguous(self):
        s = G.Sphere((0, 0, 0), 1.0)
        with pytest.raises(AmbiguousProjection):
            G.nearest_point(s, [0.0, 0.0, 0.0])

    def test_reflector_cap(self):
        # A ring of many small spheres probed from its center ties them
        # all; past the cap this counts as a continuum.
        n = 80
        ang = 2 * np.pi * np.arange(n) / n
        ring = G.SphereUnion([G.Sphere((10 * np.cos(a), 10 * np.sin(a), 0.0),
                                       0.05) for a in ang])
        with pytest.raises(ContinuumReflector):
            G.first_reflector(ring, np.zeros(3))

    @given(st.floats(1.1, 50.0), st.integers(0, 10 ** 6))
    @settings(max_examples=50, deadline=None)
    def test_nearest_is_projection(self, r, seed):
        rng = np.random.default_rng(seed)
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        s = G.Sphere((0.3, 0.0, -0.2), 1.2)
        x = s.center + 1.2 * r * u
        sp = G.nearest_point(s, x)
        assert abs(np.linalg.norm(sp.q - s.center) - 1.2) < 1e-12
        # q minimizes: distance equals |sdf|
        assert np.linalg.norm(x - sp.q) == pytest.approx(s.sdf(x), rel=1e-12)


class TestEllipsoid:
    def setup_method(self):
        self.e = G.Ellipsoid((0, 0, 0), (2.0, 1.0, 1.0))

    def test_axis_points(self):
        assert self.e.sdf([3, 0, 0]) == pytest.approx(1.0)
        assert self.e.sdf([0, 2, 0]) == pytest.approx(1.0)
        assert self.e.sdf([0, 0, -2]) == pytest.approx(1.0)

    def test_sdf_vs_brute(self):
        rng = np.random.default_rng(7)
        for _ in range(12):
            x = rng.uniform(-1, 1, 3) * np.array([3.0, 2.0, 2.0])
            d = self.e.sdf(x)
            ref = brute_surface_distance(self.e, x)
            assert abs(abs(d) - ref) < 2e-4, (x, d, ref)
            inside = np.sum((x / self.e.semiaxes) ** 2) < 1
            assert (d < 0) == inside

    def test_foot_orthogonality(self):
        # x - q must be parallel to the boundary normal at q
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = rng.uniform(-1, 1, 3) * 4.0
            if abs(self.e.sdf(x)) < 1e-3:
                continue
            try:
                sp = G.nearest_point(self.e, x)
            except AmbiguousProjection:
                continue
            v = x - sp.q
            v = v / np.linalg.norm(v)
            assert abs(abs(np.dot(v, sp.nu)) - 1.0) < 1e-9

    def test_deep_axis_points_ambiguous(self):
        # Inside, past the medial set: a ring of minimizers
        for x in [(0.0, 0, 0), (0.1, 0, 0), (0.5, 0, 0)]:
            with pytest.raises(AmbiguousProjection):
                G.nearest_point(self.e, x)
        # Shallow on-axis point projects to the tip uniquely
        sp = G.nearest_point(self.e, [1.7, 0, 0])
        np.testing.assert_allclose(sp.q, [2, 0, 0], atol=1e-10)

    def test_triaxial_medial_plane(self):
        e3 = G.Ellipsoid((0, 0, 0), (2.0, 1.0, 0.5))
        with pytest.raises(AmbiguousProjection):
            G.nearest_point(e3, [0.2, 0.1, 0.0])

    def test_shape_operator_closed_form(self):
        # (2,1,1) at the long-axis tip: both curvatures a/b^2 = 2
        S = G.shape_operator(self.e, np.array([2.0, 0, 0]))
        np.testing.assert_allclose(S, -2.0 * np.eye(2), atol=1e-12)
        K, H = G.curvature_invariants(S)
        assert K == pytest.approx(4.0)
        assert H == pytest.approx(-2.0)
        # at the short-axis tip: curvatures b/a^2 = 1/4 and b/c^2 = 1
        S = G.shape_operator(self.e, np.array([0.0, 1.0, 0]))
        w = np.sort(np.linalg.eigvalsh(S))
        np.testing.assert_allclose(w, [-1.0, -0.25], atol=1e-12)

    def test_shape_operator_fd_oracle(self):
        # Differentiate the outward normal along the surface numerically:
        # S = -P (d nu / d q) P in the tangent frame.
        rng = np.random.default_rng(5)
        c, s_ = np.cos(0.6), np.sin(0.6)
        Rf = np.array([[c, -s_, 0], [s_, c, 0], [0, 0, 1.0]])
        e = G.Ellipsoid((0.5, -0.3, 0.1), (1.7, 1.1, 0.8), frame=Rf)
        for _ in range(6):
            u = rng.normal(size=3)
            x = e.center + 4.0 * u / np.linalg.norm(u)
            sp = G.nearest_point(e, x)
            h = 1e-5
            S_fd = np.zeros((2, 2))
            for j, tj in enumerate(sp.tangent_frame):
                qp = G.nearest_point(e, sp.q + h * tj).nu
                qm = G.nearest_point(e, sp.q - h * tj).nu
                dn = (qp - qm) / (2 * h)
                for i, ti in enumerate(sp.tangent_frame):
                    S_fd[i, j] = -np.dot(ti, dn)
            np.testing.assert_allclose(sp.shape, S_fd, atol=5e-5)

    def test_rotated_frame_invariance(self):
        c, s_ = np.cos(1.1), np.sin(1.1)
        Rf = np.array([[c, 0, s_], [0, 1.0, 0], [-s_, 0, c]])
        e0 = G.Ellipsoid((0, 0, 0), (2.0, 1.0, 1.0))
        e1 = G.Ellipsoid((0, 0, 0), (2.0, 1.0, 1.0), frame=Rf)
        x0 = np.array([2.4, 0.8, -0.3])
        x1 = Rf @ x0
        assert e1.sdf(x1) == pytest.approx(e0.sdf(x0), rel=1e-12)
        K0, H0 = G.curvature_invariants(G.shape_operator(
            e0, G.nearest_point(e0, x0).q))
        K1, H1 = G.curvature_invariants(G.shape_operator(
            e1, G.nearest_point(e1, x1).q))
        assert K1 == pytest.approx(K0, rel=1e-10)
        assert H1 == pytest.approx(H0, rel=1e-10)


class TestReflectors:
    def test_sphere_unique(self):
        s = G.Sphere((0, 0, 0), 1.0)
        out = G.first_reflector(s, np.array([3.0, 0, 0]))
        assert len(out) == 1
        np.testing.assert_allclose(out[0].q, [1, 0, 0], atol=1e-14)
        np.testing.assert_allclose(out[0].nu, [1, 0, 0], atol=1e-14)

    def test_union_tie(self):
        u = G.SphereUnion([G.Sphere((0, 0, 0), 1.0),
                           G.Sphere((0, 3.5, 0), 1.0)])
        out = G.first_reflector(u, np.array([0.0, 1.75, 0.0]))
        assert len(out) == 2
        qs = sorted(tuple(np.round(sp.q, 10)) for sp in out)
        assert qs == [(0.0, 1.0, 0.0), (0.0, 2.5, 0.0)]
        # off the midplane only one survives
        out = G.first_reflector(u, np.array([0.0, 1.4, 0.0]))
        assert len(out) == 1
        np.testing.assert_allclose(out[0].q, [0, 1, 0], atol=1e-12)

    def test_union_disjointness_enforced(self):
        with pytest.raises(ValueError):
            G.SphereUnion([G.Sphere((0, 0, 0), 1.0),
                           G.Sphere((1.5, 0, 0), 1.0)])

    def test_probe_inside_rejected(self):
        s = G.Sphere((0, 0, 0), 1.0)
        with pytest.raises(ValueError):
            G.first_reflector(s, np.array([0.5, 0, 0]))

    def test_ellipsoid_unique(self):
        e = G.Ellipsoid((0, 0, 0), (2.0, 1.0, 1.0))
        out = G.first_reflector(e, np.array([4.0, 0.0, 0.0]))
        assert len(out) == 1
        np.testing.assert_allclose(out[0].q, [2, 0, 0], atol=1e-9)


class TestReflectionMap:
    def test_sphere_example(self):
        s = G.Sphere((0, 0, 0), 1.0)
        rd = G.reflection_map(s, np.array([1.2, 0, 0]))
        np.testing.assert_allclose(rd.x_r, [0.8, 0, 0], atol=1e-13)
        assert rd.d == pytest.approx(0.2)
        np.testing.assert_allclose(rd.n, [1, 0, 0], atol=1e-13)
        np.testing.assert_allclose(rd.pi, np.diag([1.0, 0, 0]), atol=1e-13)
        w = np.sort(np.linalg.eigvalsh(rd.n_prime))
        np.testing.assert_allclose(w, [0.0, 1 / 1.2, 1 / 1.2], atol=1e-12)

    def test_normal_field_properties(self):
        e = G.Ellipsoid((0, 0, 0), (2.0, 1.0, 1.0))
        x = np.array([2.1, 0.3, -0.1])
        rd = G.reflection_map(e, x)
        np.testing.assert_allclose(rd.n_prime, rd.n_prime.T, atol=1e-12)
        np.testing.assert_allclose(rd.n_prime @ rd.n, 0, atol=1e-12)
        # n(x) is the gradient of the signed distance
        h = 1e-6
        g = np.array([(e.sdf(x + h * ei) - e.sdf(x - h * ei)) / (2 * h)
                      for ei in np.eye(3)])
        np.testing.assert_allclose(rd.n, g, atol=1e-8)
        # n'(x) is its Hessian
        for j, ej in enumerate(np.eye(3)):
            gp = G.reflection_map(e, x + h * ej).n
            gm = G.reflection_map(e, x - h * ej).n
            np.testing.assert_allclose(rd.n_prime[:, j], (gp - gm) / (2 * h),
                                       atol=1e-6)

    def test_involution_and_interior(self):
        s = G.Sphere((0, 0, 0), 1.0)
        rd = G.reflection_map(s, np.array([0.9, 0, 0]))
        assert rd.d == pytest.approx(-0.1)
        np.testing.assert_allclose(rd.x_r, [1.1, 0, 0], atol=1e-13)
        back = G.reflection_map(s, rd.x_r)
        np.testing.assert_allclose(back.x_r, [0.9, 0, 0], atol=1e-12)

    def test_outside_collar(self):
        s = G.Sphere((0, 0, 0), 1.0)
        with pytest.raises(OutsideCollar):
            G.reflection_map(s, np.array([3.0, 0, 0]))

    def test_collar_width(self):
        s = G.Sphere((0, 0, 0), 1.0)
        assert G.tubular_params(s).delta0 == pytest.approx(0.5)
        e = G.Ellipsoid((0, 0, 0), (2.0, 1.0, 1.0))
        assert G.tubular_params(e).delta0 == pytest.approx(0.25)
        u = G.SphereUnion([G.Sphere((0, 0, 0), 1.0),
                           G.Sphere((0, 3.5, 0), 1.0)])
        assert G.tubular_params(u).delta0 == pytest.approx(0.375)


class TestDirectionsAndCharts:
    def test_icosphere_counts(self):
        assert G.icosphere_directions(0).shape == (12, 3)
        assert G.icosphere_directions(1).shape == (42, 3)
        d = G.icosphere_directions(2)
        assert d.shape == (162, 3)
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0,
                                   atol=1e-12)
        # no duplicate directions
        gram = d @ d.T
        np.fill_diagonal(gram, -1.0)
        assert np.max(gram) < 1.0 - 1e-6

    def test_chart_areas(self):
        th = np.linspace(0, np.pi, 801)
        ph = np.linspace(0, 2 * np.pi, 800, endpoint=False)
        T, P = np.meshgrid(th, ph, indexing="ij")
        w = np.gradient(th)[:, None] * (2 * np.pi / len(ph))

        s = G.Sphere((1, 2, 3), 1.3)
        _, J = s.chart([0.2, -0.5, 0.7])(T, P)
        assert np.sum(J * w) == pytest.approx(4 * np.pi * 1.3 ** 2,
                                              rel=1e-5)

        e = G.Ellipsoid((0, 0, 0), (2.0, 1.0, 1.0))
        _, J = e.chart([1.0, 0, 0])(T, P)
        ecc = np.sqrt(1 - 0.25)
        truth = 2 * np.pi * (1 + (2.0 / ecc) * np.arcsin(ecc))
        assert np.sum(J * w) == pytest.approx(truth, rel=1e-4)

    def test_chart_pole(self):
        e = G.Ellipsoid((1, 0, 0), (2.0, 1.0, 1.0))
        pts, _ = e.chart([1.0, 0, 0])(np.array(0.0), np.array(0.0))
        np.testing.assert_allclose(pts, [3.0, 0, 0], atol=1e-12)
