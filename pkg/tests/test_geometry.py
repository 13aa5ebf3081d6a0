import numpy as np
import pytest

from fermikit.dispersion import (
    EllipseLevelSet,
    SumDispersion,
    TightBinding,
    TrigField,
    WrappedQuadratic,
)
from fermikit.geometry import (
    ClassParams,
    GeometryError,
    check_class,
    convex_center,
    curvature,
    derive_radial_constants,
    discrete_convexity,
    fermi_radius,
    offset_surface,
    trace_surface,
    turning_rate_curvature,
)
from fermikit.rootfind import RayRootError

from conftest import CANONICAL_PARAMS


class TestFermiRadius:
    def test_circle_radius(self, circle):
        for th in (0.0, 0.7, 2.1, 5.5):
            assert fermi_radius(circle, th) == pytest.approx(1.0, abs=1e-12)

    def test_tight_binding_root_zeroes_dispersion(self):
        # oracle: substitute the returned radius into the closed form
        e = TightBinding(t=1.0, mu=-1.9)
        r = fermi_radius(e, 0.0, bracket=(0.5, 2.5))
        assert abs(-2.0 * (np.cos(r) + 1.0) + 1.9) <= 1e-12

    def test_no_sign_change_raises(self, circle):
        with pytest.raises(RayRootError, match="no sign change"):
            fermi_radius(circle, 0.0, bracket=(2.9, 3.1))


class TestTraceSurface:
    def test_circle_all_radii_one(self, circle):
        table = trace_surface(circle, mtheta=256)
        assert np.max(np.abs(table.r_f - 1.0)) < 1e-12
        assert np.all(table.r_under < table.r_f)
        assert np.all(table.r_f < table.r_over)

    def test_roots_zero_the_dispersion(self, circle):
        table = trace_surface(circle, mtheta=128)
        assert np.max(np.abs(circle.value(table.points()))) <= 1e-12

    def test_tight_binding_antipodal_symmetry(self):
        e = TightBinding(t=1.0, mu=-1.0)
        table = trace_surface(e, mtheta=128, bracket=(0.5, 2.8))
        half = table.mtheta // 2
        assert np.max(np.abs(table.r_f - np.roll(table.r_f, half))) < 1e-10

    def test_ellipse_axis_radii(self):
        e = EllipseLevelSet(a=1.2, b=0.8)
        table = trace_surface(e, mtheta=64)
        assert table.r_f[0] == pytest.approx(1.2, abs=1e-12)
        assert table.r_f[16] == pytest.approx(0.8, abs=1e-12)

    def test_mtheta_minimum(self, circle):
        with pytest.raises(ValueError):
            trace_surface(circle, mtheta=32)

    def test_csv_roundtrip(self, circle, tmp_path):
        table = trace_surface(circle, mtheta=64)
        path = tmp_path / "table.csv"
        table.save_csv(path)
        back = type(table).load_csv(path)
        assert np.array_equal(back.r_f, table.r_f)
        assert np.array_equal(back.theta, table.theta)


class TestCheckClass:
    def test_canonical_circle_passes(self, circle):
        report = check_class(circle, CANONICAL_PARAMS)
        assert report.verdict
        assert report.min_gradient == pytest.approx(1.0, abs=1e-10)
        assert report.min_curvature_form == pytest.approx(1.0, abs=1e-10)

    def test_gradient_condition_fails_for_large_g0(self, circle):
        report = check_class(circle, ClassParams(0.1, 2.0, 10.0, 0.5))
        assert not report.verdict
        assert report.margin_gradient == pytest.approx(1.0 - 2.0, abs=2e-3)

    def test_tight_binding_hole_pocket_fails_curvature(self):
        """At mu = +0.5 the surface is a hole pocket around (pi, pi): the
        tangential curvature form of the band itself is negative there."""
        tb = TightBinding(t=1.0, mu=0.5)
        aux = tb.hole_pocket_view((np.pi, np.pi))
        table = trace_surface(aux, mtheta=256, bracket=(1.5, 2.8))
        pts = table.points()
        assert np.max(np.abs(tb.value(pts))) <= 1e-12
        grad = tb.gradient(pts)
        n = grad / np.linalg.norm(grad, axis=-1)[..., None]
        t = np.stack([-n[..., 1], n[..., 0]], axis=-1)
        form = np.einsum("...i,...ij,...j->...", t, tb.hessian(pts), t)
        assert np.min(form) < 0.0 < 0.5  # condition (iv) fails at omega0 = 0.5


class TestCurvature:
    def test_unit_circle(self, circle):
        pts = np.array([[1.0, 0.0], [0.0, 1.0], [np.sqrt(0.5), np.sqrt(0.5)]])
        assert np.allclose(curvature(circle, pts), 1.0, atol=1e-12)

    def test_ellipse_vertex(self):
        e = EllipseLevelSet(a=1.2, b=0.8)
        # classical ellipse curvature a/b^2 at the major vertex
        assert curvature(e, np.array([1.2, 0.0])) == pytest.approx(1.2 / 0.8**2, abs=1e-12)
        assert curvature(e, np.array([0.0, 0.8])) == pytest.approx(0.8 / 1.2**2, abs=1e-12)

    def test_vanishing_gradient_raises(self, circle):
        with pytest.raises(GeometryError, match="gradient"):
            curvature(circle, np.zeros(2))

    def test_formula_matches_gauss_map_oracle(self):
        e = EllipseLevelSet(a=1.2, b=0.8)
        table = trace_surface(e, mtheta=1024)
        formula = curvature(e, table.points())
        oracle = turning_rate_curvature(table, e)
        assert np.max(np.abs(formula - oracle)) <= 1e-4


class TestConvexCenter:
    def test_circle(self, circle):
        table = trace_surface(circle, mtheta=256)
        rep = convex_center(table, circle)
        assert np.hypot(*rep.center) <= 1e-8
        assert rep.curvature_min == pytest.approx(1.0, abs=1e-10)
        assert rep.radius_min == pytest.approx(1.0, abs=1e-10)
        assert rep.radius_lower_ok and rep.radius_upper_ok and rep.angle_ok

    def test_ellipse_bounds(self):
        e = EllipseLevelSet(a=1.2, b=0.8)
        table = trace_surface(e, mtheta=1024)
        rep = convex_center(table, e)
        k, K = 0.8 / 1.2**2, 1.2 / 0.8**2
        assert rep.curvature_min == pytest.approx(k, rel=1e-6)
        assert rep.curvature_max == pytest.approx(K, rel=1e-6)
        assert rep.center_norm <= 1e-8  # symmetric surface: center is the origin
        assert rep.radius_min == pytest.approx(0.8, abs=1e-6)
        assert rep.radius_max == pytest.approx(1.2, abs=1e-6)
        # 1/K = 0.5333 <= |p| and |p| <= 1/k = 1.8 with slack
        assert rep.radius_lower_ok and rep.radius_upper_ok and rep.angle_ok

    def test_shifted_circle_center(self):
        e = WrappedQuadratic(mu=0.5, center=(0.3, 0.0))
        table = trace_surface(e, mtheta=256)
        rep = convex_center(table, e)
        assert abs(rep.center[0] - 0.3) <= 2 * np.pi / table.mtheta
        assert abs(rep.center[1]) <= 2 * np.pi / table.mtheta

    def test_nonconvex_rejected(self, circle):
        wavy = SumDispersion(circle, TrigField([(2, 2, 0.15, "cos"), (2, -2, 0.15, "cos")]))
        table = trace_surface(wavy, mtheta=128)
        with pytest.raises(GeometryError, match="non-convex"):
            convex_center(table, wavy)


class TestOffsetSurface:
    def test_circle_offset_radius(self, circle):
        table = trace_surface(circle, mtheta=128)
        pts = offset_surface(table, circle, L=2.0)
        assert np.allclose(np.linalg.norm(pts, axis=-1), 0.5, atol=1e-10)

    def test_ellipse_offset_stays_convex(self):
        e = EllipseLevelSet(a=1.2, b=0.8)
        table = trace_surface(e, mtheta=256)
        pts = offset_surface(table, e, L=4.0)
        assert discrete_convexity(pts)

    def test_offset_below_curvature_rejected(self):
        e = EllipseLevelSet(a=1.2, b=0.8)
        table = trace_surface(e, mtheta=128)
        with pytest.raises(GeometryError, match="curvature"):
            offset_surface(table, e, L=0.5)


class TestRadialConstants:
    def test_canonical_values(self):
        rc = derive_radial_constants(CANONICAL_PARAMS)
        assert rc.g1 == 0.5 * 0.25 / 400.0  # omega0 g0^2 / (4 G0^2), exact
        assert rc.r0 == rc.g1 / 10.0        # min branch: g1/G0 < delta0
        assert rc.eps_max == rc.g1

    def test_min_branch_delta0(self):
        rc = derive_radial_constants(ClassParams(delta0=0.01, g0=1.9, G0=2.0, omega0=1.9))
        assert rc.g1 / 2.0 > 0.01
        assert rc.r0 == 0.01

    def test_radial_derivative_exceeds_g1_on_annulus(self, circle):
        """Perturbations with |e - E0|_1 <= g1 keep d_r e~ > g1 on the 2 r0 annulus."""
        rc = derive_radial_constants(CANONICAL_PARAMS)
        rng = np.random.default_rng(11)
        table = trace_surface(circle, mtheta=64)
        theta = table.theta
        for _ in range(20):
            raw = TrigField(
                [
                    (1, 0, rng.normal(), "cos"),
                    (0, 1, rng.normal(), "cos"),
                    (1, 1, rng.normal(), "cos"),
                ]
            )
            # |h|_1 = sup|h| + sup|d1 h| + sup|d2 h| on a fine grid, scaled to g1
            _, grid = circle.torus.grid(64)
            n1 = (
                np.max(np.abs(raw.value(grid)))
                + np.max(np.abs(raw.gradient(grid)[..., 0]))
                + np.max(np.abs(raw.gradient(grid)[..., 1]))
            )
            e = SumDispersion(circle, raw.scaled(0.9 * rc.g1 / n1))
            for dr in np.linspace(-2 * rc.r0, 2 * rc.r0, 7):
                slope = e.radial_derivative(table.r_f + dr, theta)
                assert np.all(slope > rc.g1)

    def test_class_survives_eps_ball(self, circle):
        """|e - E0|_2 < eps keeps e in E_s(delta0/2, g0/2, 2 G0, omega0/2)."""
        rc = derive_radial_constants(CANONICAL_PARAMS)
        rng = np.random.default_rng(12)
        relaxed = CANONICAL_PARAMS.relaxed()
        for _ in range(5):
            raw = TrigField([(1, 0, rng.normal(), "cos"), (0, 1, rng.normal(), "cos")])
            _, grid = circle.torus.grid(64)
            n2 = (
                np.max(np.abs(raw.value(grid)))
                + np.max(np.abs(raw.gradient(grid)[..., 0]))
                + np.max(np.abs(raw.gradient(grid)[..., 1]))
                + np.max(np.abs(raw.hessian(grid)[..., 0, 0]))
                + np.max(np.abs(raw.hessian(grid)[..., 0, 1]))
                + np.max(np.abs(raw.hessian(grid)[..., 1, 1]))
            )
            e = SumDispersion(circle, raw.scaled(0.9 * rc.eps_max / n2))
            assert check_class(e, relaxed, mtheta=128).verdict
