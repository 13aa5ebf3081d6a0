"""Sampled fields, C^k and radial norms, and surface localization.

Norms follow the sup-of-derivatives convention: the seminorm ||F||_k sums
sup|D^a F| over multi-indices |a| = k, |F|_k accumulates the seminorms, and
the radial norm is |F|_{p,r} = |F|_{p-1} + ||d_r F~||_{p-1}.  Derivatives
are nested central differences on the grid, so every grid norm is a mild
under-estimate of the true sup; inequality tests carry a 5 percent slack.

Localization l_e evaluates a field at the Fermi surface of e along each ray
and extends it ray-constant, which kills the radial derivative exactly.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from fermikit.dispersion import Dispersion
from fermikit.geometry import FermiRadiusTable, GeometryError
from fermikit.rootfind import RayRootError, bracketed_roots
from fermikit.torus import TWO_PI


class FieldError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridField:
    """Values on a uniform rectangular grid, polar (r, theta) or cartesian.

    axis2 is periodic (theta, or the second torus direction); axis1 is the
    radial coordinate for polar grids and periodic for cartesian ones.
    """

    lattice: str
    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray
    metadata: dict | None = None

    def __post_init__(self):
        if self.lattice not in ("polar", "cartesian"):
            raise ValueError("lattice must be 'polar' or 'cartesian'")
        if self.values.shape != (len(self.axis1), len(self.axis2)):
            raise ValueError("values shape must match the axes")
        if not np.all(np.isfinite(self.values)):
            raise FieldError("field has non-finite nodes")

    @property
    def periodic1(self) -> bool:
        return self.lattice == "cartesian"

    @property
    def h1(self) -> float:
        return float(self.axis1[1] - self.axis1[0])

    @property
    def h2(self) -> float:
        return float(self.axis2[1] - self.axis2[0])

    def with_values(self, values, metadata=None) -> "GridField":
        return GridField(self.lattice, self.axis1, self.axis2, np.asarray(values, dtype=float),
                         metadata if metadata is not None else self.metadata)

    def __sub__(self, other: "GridField") -> "GridField":
        return self.with_values(self.values - other.values)

    def __add__(self, other: "GridField") -> "GridField":
        return self.with_values(self.values + other.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lattice", self.lattice])
            writer.writerow(["axis1"] + [f"{x:.17g}" for x in self.axis1])
            writer.writerow(["axis2"] + [f"{x:.17g}" for x in self.axis2])
            for row in self.values:
                writer.writerow([f"{x:.17g}" for x in row])

    @classmethod
    def load_csv(cls, path) -> "GridField":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        lattice = rows[0][1]
        axis1 = np.array([float(x) for x in rows[1][1:]])
        axis2 = np.array([float(x) for x in rows[2][1:]])
        values = np.array([[float(x) for x in row] for row in rows[3:]])
        return cls(lattice, axis1, axis2, values)


def polar_axes(r_lo: float, r_hi: float, nr: int, mtheta: int):
    return np.linspace(r_lo, r_hi, nr), TWO_PI * np.arange(mtheta) / mtheta


def cartesian_axes(n: int):
    axis = -np.pi + TWO_PI * np.arange(n) / n
    return axis, axis.copy()


def sample_polar(fn, r_axis, theta_axis, center=(0.0, 0.0), metadata=None) -> GridField:
    """Sample a point function or dispersion on the polar grid about center."""
    rg, tg = np.meshgrid(r_axis, theta_axis, indexing="ij")
    pts = np.asarray(center) + np.stack([rg * np.cos(tg), rg * np.sin(tg)], axis=-1)
    vals = fn.value(pts) if isinstance(fn, Dispersion) else fn(pts)
    return GridField("polar", np.asarray(r_axis, dtype=float), np.asarray(theta_axis, dtype=float),
                     np.asarray(vals, dtype=float), metadata)


def sample_cartesian(fn, n: int, metadata=None) -> GridField:
    ax1, ax2 = cartesian_axes(n)
    pts = np.stack(np.meshgrid(ax1, ax2, indexing="ij"), axis=-1)
    vals = fn.value(pts) if isinstance(fn, Dispersion) else fn(pts)
    return GridField("cartesian", ax1, ax2, np.asarray(vals, dtype=float), metadata)


# -- finite differences ---------------------------------------------------


def _d1(values, axis: int, h: float, periodic: bool):
    if periodic:
        return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)
    out = np.empty_like(values)
    v = np.moveaxis(values, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    # one-sided second-order edges, written in difference form so that a
    # field constant along the axis differentiates to exactly zero
    o[0] = (4.0 * (v[1] - v[0]) - (v[2] - v[0])) / (2.0 * h)
    o[-1] = (4.0 * (v[-1] - v[-2]) - (v[-1] - v[-3])) / (2.0 * h)
    return out


def derivative(field: GridField, a1: int, a2: int) -> GridField:
    """Nested central-difference derivative D^(a1, a2) of the field."""
    vals = field.values
    for _ in range(a1):
        vals = _d1(vals, 0, field.h1, field.periodic1)
    for _ in range(a2):
        vals = _d1(vals, 1, field.h2, True)
    return field.with_values(vals)


@dataclass(frozen=True)
class NormReport:
    """Seminorms ||F||_k, norms |F|_k, radial |F|_{p,r}, angular |F|_{p,theta}."""

    lattice: str
    seminorms: tuple
    norms: tuple
    radial: tuple
    angular: tuple

    def seminorm(self, k: int) -> float:
        return self.seminorms[k]

    def norm(self, k: int) -> float:
        return self.norms[k]

    def radial_norm(self, p: int) -> float:
        if not self.radial or p < 1 or p > len(self.radial):
            raise FieldError("radial norm not available at this order")
        return self.radial[p - 1]

    def angular_norm(self, p: int) -> float:
        return self.angular[p]

    def as_dict(self):
        return {
            "lattice": self.lattice,
            "seminorms": list(self.seminorms),
            "norms": list(self.norms),
            "radial": list(self.radial),
            "angular": list(self.angular),
        }


def ck_norms(field: GridField, k_max: int = 3) -> NormReport:
    """Grid sup-norm report up to order ``k_max`` (radial norms on polar grids)."""
    if k_max < 0 or k_max > 3:
        raise ValueError("k_max must be in 0..3")
    if min(len(field.axis1), len(field.axis2)) < 5:
        raise FieldError("grid too coarse for order-k stencils (need >= 5 nodes per axis)")
    seminorms = []
    for k in range(k_max + 1):
        total = 0.0
        for a1 in range(k + 1):
            total += derivative(field, a1, k - a1).sup()
        seminorms.append(total)
    norms = list(np.cumsum(seminorms))
    radial = []
    if field.lattice == "polar":
        dr = derivative(field, 1, 0)
        for p in range(1, k_max + 1):
            semi = 0.0
            for a1 in range(p):
                semi += derivative(dr, a1, p - 1 - a1).sup()
            radial.append(norms[p - 1] + semi)
    angular = []
    for p in range(k_max + 1):
        angular.append(float(sum(derivative(field, 0, l).sup() for l in range(p + 1))))
    return NormReport(
        lattice=field.lattice,
        seminorms=tuple(float(x) for x in seminorms),
        norms=tuple(float(x) for x in norms),
        radial=tuple(float(x) for x in radial),
        angular=tuple(float(x) for x in angular),
    )


def radial_norm(field: GridField, p: int) -> float:
    """|F|_{p,r} = |F|_{p-1} + ||d_r F~||_{p-1} on a polar grid."""
    if field.lattice != "polar":
        raise FieldError("radial norms need a polar grid")
    if p < 1 or p > 3:
        raise ValueError("p must be 1..3")
    return ck_norms(field, k_max=p).radial_norm(p)


# -- localization and surface coordinates ---------------------------------


def _check_table(e: Dispersion, table: FermiRadiusTable, tol: float = 1e-9):
    probe = table.points()[:: max(1, table.mtheta // 16)]
    if float(np.max(np.abs(e.value(probe)))) > tol:
        raise FieldError("table/dispersion mismatch: traced radii do not zero the field")


def localize(e: Dispersion, F, table: FermiRadiusTable, r_axis=None) -> GridField:
    """(l_e F)(r, theta) = F~(r_F(theta), theta), extended constant along rays.

    ``F`` may be a callable on torus points, a Dispersion, or a GridField
    (cartesian fields are resampled to the polar grid bilinearly first).
    """
    _check_table(e, table)
    theta = table.theta
    if r_axis is None:
        width = max(0.05, 0.1 * float(np.mean(table.r_f)))
        r_axis = np.linspace(max(float(np.min(table.r_f)) - width, 1e-3),
                             float(np.max(table.r_f)) + width, 17)
    r_axis = np.asarray(r_axis, dtype=float)
    if isinstance(F, GridField):
        surface_vals = _surface_values_from_grid(F, table)
    else:
        pts = table.points()
        surface_vals = F.value(pts) if isinstance(F, Dispersion) else F(pts)
    values = np.tile(np.asarray(surface_vals, dtype=float), (len(r_axis), 1))
    return GridField("polar", r_axis, theta, values, metadata={"localized": True})


def _surface_values_from_grid(F: GridField, table: FermiRadiusTable):
    if F.lattice == "cartesian":
        F = resample_to_polar(F, table)
    if len(F.axis2) != table.mtheta or float(np.max(np.abs(F.axis2 - table.theta))) > 1e-12:
        raise FieldError("polar field and table use different angular grids")
    spline = CubicSpline(F.axis1, F.values, axis=0)
    r = np.clip(table.r_f, F.axis1[0], F.axis1[-1])
    return np.diagonal(spline(r))


def resample_to_polar(F: GridField, table: FermiRadiusTable, nr: int = 17) -> GridField:
    """Bilinear periodic resampling of a cartesian field onto the table's annulus."""
    if F.lattice != "cartesian":
        raise FieldError("resample_to_polar expects a cartesian field")
    width = max(0.05, 0.1 * float(np.mean(table.r_f)))
    r_axis = np.linspace(max(float(np.min(table.r_f)) - width, 1e-3),
                         float(np.max(table.r_f)) + width, nr)
    rg, tg = np.meshgrid(r_axis, table.theta, indexing="ij")
    pts = np.asarray(table.center) + np.stack([rg * np.cos(tg), rg * np.sin(tg)], axis=-1)
    n = len(F.axis1)
    h = F.h1
    x = (pts[..., 0] - F.axis1[0]) / h
    y = (pts[..., 1] - F.axis2[0]) / h
    i0 = np.floor(x).astype(int) % n
    j0 = np.floor(y).astype(int) % n
    fx = x - np.floor(x)
    fy = y - np.floor(y)
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n
    v = F.values
    vals = (
        v[i0, j0] * (1 - fx) * (1 - fy)
        + v[i1, j0] * fx * (1 - fy)
        + v[i0, j1] * (1 - fx) * fy
        + v[i1, j1] * fx * fy
    )
    return GridField("polar", r_axis, table.theta, vals)


def surface_coordinates(e: Dispersion, rho, theta, table: FermiRadiusTable | None = None,
                        bracket=None, tol: float = 1e-12):
    """Point p on the ray at ``theta`` with e(p) = rho (Fermi coordinates).

    Round-trips to |e(p) - rho| <= 1e-10 by construction of the rootfinder.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    rho_arr = np.broadcast_to(np.asarray(rho, dtype=float), th.shape)
    if bracket is not None:
        lo, hi = bracket
        lo = np.broadcast_to(np.asarray(lo, dtype=float), th.shape)
        hi = np.broadcast_to(np.asarray(hi, dtype=float), th.shape)
    elif table is not None:
        base = table.interp_radius(th)
        lo = np.maximum(base - 0.45 * base, 1e-3)
        hi = base + 0.45 * base
    else:
        lo = np.full(th.shape, 0.05)
        hi = np.full(th.shape, np.pi / 2 - 0.01)
    try:
        r = bracketed_roots(
            lambda rr: e.radial_value(rr, th) - rho_arr,
            lambda rr: e.radial_derivative(rr, th),
            lo,
            hi,
            tol=tol,
            context="surface coordinates",
        )
    except RayRootError as err:
        raise GeometryError(f"rho out of range for surface coordinates: {err}") from err
    pts = e.ray_points(r, th)
    return pts[0] if np.isscalar(theta) and np.isscalar(rho) else pts
