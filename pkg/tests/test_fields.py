import numpy as np
import pytest

from fermikit.dispersion import TightBinding, WrappedQuadratic
from fermikit.fields import (
    FieldError,
    GridField,
    ck_norms,
    localize,
    polar_axes,
    radial_norm,
    sample_cartesian,
    sample_polar,
    surface_coordinates,
)
from fermikit.geometry import GeometryError, trace_surface


def polar_field(fn, r_lo=0.6, r_hi=1.4, nr=33, mtheta=128):
    r, th = polar_axes(r_lo, r_hi, nr, mtheta)
    rg, tg = np.meshgrid(r, th, indexing="ij")
    return GridField("polar", r, th, fn(rg, tg))


def random_smooth_polar(rng, nr=33, mtheta=128):
    """Random smooth field on the annulus: low-order polynomial in r times
    low-order trig in theta."""
    a = rng.normal(size=6)

    def fn(r, th):
        return (
            a[0]
            + a[1] * r
            + a[2] * r**2 / 2
            + a[3] * np.cos(th)
            + a[4] * np.sin(2 * th) * r
            + a[5] * np.cos(2 * th)
        )

    return polar_field(fn, nr=nr, mtheta=mtheta)


class TestCkNorms:
    def test_constant_field(self):
        f = polar_field(lambda r, th: np.full_like(r, -2.5))
        rep = ck_norms(f, 3)
        assert rep.seminorm(0) == pytest.approx(2.5)
        assert rep.seminorm(1) == 0.0
        assert rep.seminorm(2) == 0.0
        assert rep.radial_norm(1) == pytest.approx(2.5)

    def test_sin_p1_on_torus(self):
        f = sample_cartesian(lambda p: np.sin(p[..., 0]), 256)
        rep = ck_norms(f, 2)
        assert rep.seminorm(0) == pytest.approx(1.0, abs=1e-3)
        assert rep.seminorm(1) == pytest.approx(1.0, abs=1e-3)
        assert rep.seminorm(2) == pytest.approx(1.0, abs=1e-3)

    def test_monotone_norms(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            rep = ck_norms(random_smooth_polar(rng), 3)
            assert rep.norm(0) <= rep.norm(1) <= rep.norm(2) <= rep.norm(3)
            for p in (1, 2, 3):
                assert rep.radial_norm(p) <= rep.norm(p) * 1.0001

    def test_cartesian_polar_equivalence_ratio(self):
        # the two coordinate systems give equivalent norms: bounded ratio
        e = TightBinding(t=0.7, mu=0.2)
        cart = ck_norms(sample_cartesian(e, 128), 2)
        r, th = polar_axes(0.6, 1.4, 33, 128)
        pol = ck_norms(sample_polar(e, r, th), 2)
        ratio = cart.norm(2) / pol.norm(2)
        assert 0.5 <= ratio <= 2.0

    def test_grid_too_coarse(self):
        f = GridField("polar", np.linspace(0.8, 1.2, 4), np.linspace(0, 6, 8), np.zeros((4, 8)))
        with pytest.raises(FieldError, match="coarse"):
            ck_norms(f, 2)

    def test_radial_norm_needs_polar(self):
        f = sample_cartesian(lambda p: p[..., 0] * 0.0, 32)
        with pytest.raises(FieldError, match="polar"):
            radial_norm(f, 1)


class TestRadialNorms:
    def test_constant(self):
        f = polar_field(lambda r, th: np.full_like(r, 1.5))
        assert radial_norm(f, 1) == pytest.approx(1.5)

    def test_radial_coordinate_field(self):
        f = polar_field(lambda r, th: r)
        # |F|_{1,r} = |F|_0 + ||d_r F||_0 = sup r + 1 on the annulus
        assert radial_norm(f, 1) == pytest.approx(1.4 + 1.0, abs=1e-3)

    def test_angular_field_has_no_radial_part(self):
        f = polar_field(lambda r, th: np.sin(th))
        rep = ck_norms(f, 1)
        assert rep.radial_norm(1) == pytest.approx(rep.norm(0), abs=1e-10)
        assert rep.norm(0) == pytest.approx(1.0, abs=1e-3)


class TestProductInequalities:
    """Lemma-3 style inequalities with 5 percent discretization slack."""

    def _pair(self, rng):
        return random_smooth_polar(rng), random_smooth_polar(rng)

    def test_basic_product_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            F, G = self._pair(rng)
            FG = F.with_values(F.values * G.values)
            nf, ng, nfg = ck_norms(F, 3), ck_norms(G, 3), ck_norms(FG, 3)
            for p in range(4):
                assert nfg.norm(p) <= 1.05 * 2**p * nf.norm(p) * ng.norm(p)

    def test_refined_product_bound(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            F, G = self._pair(rng)
            FG = F.with_values(F.values * G.values)
            nf, ng, nfg = ck_norms(F, 3), ck_norms(G, 3), ck_norms(FG, 3)
            for p in range(1, 4):
                bound = (
                    nf.seminorm(0) * ng.seminorm(p)
                    + nf.seminorm(p) * ng.seminorm(0)
                    + 2 ** (p + 1) * nf.norm(p - 1) * ng.norm(p - 1)
                )
                assert nfg.seminorm(p) <= 1.05 * bound

    def test_radial_product_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            F, G = self._pair(rng)
            FG = F.with_values(F.values * G.values)
            nf, ng, nfg = ck_norms(F, 3), ck_norms(G, 3), ck_norms(FG, 3)
            for p in range(2):
                bound = 2 ** (p + 2) * (
                    nf.radial_norm(p + 1) * ng.norm(p) + nf.norm(p) * ng.radial_norm(p + 1)
                )
                assert nfg.radial_norm(p + 1) <= 1.05 * bound


class TestLocalize:
    def test_dispersion_localizes_to_zero(self, circle):
        table = trace_surface(circle, mtheta=128)
        loc = localize(circle, circle, table)
        assert np.max(np.abs(loc.values)) <= 1e-12

    def test_constant_fixed(self, circle):
        table = trace_surface(circle, mtheta=128)
        loc = localize(circle, lambda p: np.full(p.shape[:-1], 3.25), table)
        assert np.all(loc.values == 3.25)

    def test_radius_field_localizes_to_rf(self, circle):
        table = trace_surface(circle, mtheta=128)
        loc = localize(circle, lambda p: np.linalg.norm(p, axis=-1), table)
        assert np.max(np.abs(loc.values - 1.0)) < 1e-10

    def test_idempotent_and_ray_constant(self, circle):
        table = trace_surface(circle, mtheta=128)
        loc = localize(circle, lambda p: p[..., 0] ** 2, table)
        again = localize(circle, loc, table, r_axis=loc.axis1)
        assert np.array_equal(loc.values, again.values)
        # d_r of a localized field vanishes identically on the grid
        assert ck_norms(loc, 2).radial_norm(1) == pytest.approx(ck_norms(loc, 2).norm(0))

    def test_localized_radial_norm_drops_order(self, circle):
        table = trace_surface(circle, mtheta=128)
        loc = localize(circle, lambda p: np.cos(p[..., 0]), table)
        rep = ck_norms(loc, 3)
        for p in (1, 2, 3):
            assert rep.radial_norm(p) == pytest.approx(rep.norm(p - 1), rel=1e-12)

    def test_cartesian_field_resampled(self, circle):
        table = trace_surface(circle, mtheta=128)
        cart = sample_cartesian(lambda p: np.cos(p[..., 0]), 128)
        loc = localize(circle, cart, table)
        exact = np.cos(table.points()[:, 0])
        assert np.max(np.abs(loc.values[0] - exact)) < 5e-4  # bilinear resampling

    def test_mismatched_table_rejected(self, circle):
        other = WrappedQuadratic(mu=0.3)
        table = trace_surface(other, mtheta=128)
        with pytest.raises(FieldError, match="mismatch"):
            localize(circle, circle, table)


class TestSurfaceCoordinates:
    def test_rho_zero_is_fermi_surface(self, circle):
        table = trace_surface(circle, mtheta=64)
        p = surface_coordinates(circle, 0.0, 0.3, table=table)
        assert np.linalg.norm(p) == pytest.approx(1.0, abs=1e-12)

    def test_quadratic_inversion(self, circle):
        p = surface_coordinates(circle, 0.105, 0.0)
        assert p[0] == pytest.approx(np.sqrt(1.21), abs=1e-12)

    def test_roundtrip(self, circle):
        rng = np.random.default_rng(4)
        table = trace_surface(circle, mtheta=64)
        rho = rng.uniform(-0.08, 0.08, size=100)
        th = rng.uniform(0, 2 * np.pi, size=100)
        pts = surface_coordinates(circle, rho, th, table=table)
        assert np.max(np.abs(circle.value(pts) - rho)) <= 1e-10

    def test_rho_out_of_range(self, circle):
        with pytest.raises(GeometryError, match="out of range"):
            surface_coordinates(circle, 5.0, 0.0)


def test_gridfield_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    f = random_smooth_polar(rng)
    path = tmp_path / "field.csv"
    f.save_csv(path)
    back = GridField.load_csv(path)
    assert back.lattice == "polar"
    assert np.array_equal(back.values, f.values)
    assert np.array_equal(back.axis1, f.axis1)


def test_norm_report_json(circle):
    rng = np.random.default_rng(6)
    rep = ck_norms(random_smooth_polar(rng), 3)
    d = rep.as_dict()
    assert set(d) == {"lattice", "seminorms", "norms", "radial", "angular"}
    assert d["norms"] == list(np.cumsum(d["seminorms"]))
