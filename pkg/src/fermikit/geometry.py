"""Fermi-surface tracing, class membership, and convex-surface bounds.

The surface S_e = {p : e(p) = 0} is parametrized by the radius r_F(theta)
along rays from a reference center.  Class membership in
E_s(delta0, g0, G0, omega0) asks for the surface inside the half cell with
margin delta0, gradient above g0 on the surface, |e|_2 below G0, and the
tangential curvature form above omega0.  The convex-center construction
brackets the surface between spheres of radii 1/K and 1/k about the
midpoint of a maximal chord, and the radial-derivative constants
g1 = omega0 g0^2 / (4 G0^2), r0 = min(g1/G0, delta0) quantify how far the
radial parametrization survives a perturbation of the dispersion.
"""

import csv
from dataclasses import dataclass

import numpy as np

from fermikit.dispersion import Dispersion
from fermikit.rootfind import RayRootError, bracketed_roots
from fermikit.torus import TWO_PI


class GeometryError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClassParams:
    delta0: float
    g0: float
    G0: float
    omega0: float

    def __post_init__(self):
        if min(self.delta0, self.g0, self.G0, self.omega0) <= 0.0:
            raise ValueError("class parameters must be strictly positive")
        if self.G0 <= max(self.g0, self.omega0):
            raise ValueError("need G0 > max(g0, omega0)")

    def relaxed(self) -> "ClassParams":
        """The invariant-set parameters (delta0/2, g0/2, 2 G0, omega0/2)."""
        return ClassParams(self.delta0 / 2, self.g0 / 2, 2 * self.G0, self.omega0 / 2)


@dataclass(frozen=True)
class RadialConstants:
    g1: float
    r0: float
    eps_max: float


def derive_radial_constants(params: ClassParams) -> RadialConstants:
    """g1 = omega0 g0^2/(4 G0^2), r0 = min(g1/G0, delta0), eps < g1."""
    g1 = params.omega0 * params.g0**2 / (4.0 * params.G0**2)
    r0 = min(g1 / params.G0, params.delta0)
    return RadialConstants(g1=g1, r0=r0, eps_max=g1)


@dataclass(frozen=True)
class FermiRadiusTable:
    """Sampled radii r_F(theta_i) with a bracketing annulus per angle."""

    theta: np.ndarray
    r_f: np.ndarray
    r_under: np.ndarray
    r_over: np.ndarray
    center: tuple = (0.0, 0.0)

    @property
    def mtheta(self) -> int:
        return len(self.theta)

    def points(self):
        c = np.asarray(self.center)
        return c + np.stack(
            [self.r_f * np.cos(self.theta), self.r_f * np.sin(self.theta)], axis=-1
        )

    def sea_volume_fraction(self) -> float:
        """|I_e| / (2 pi)^2 for a sea star-shaped about the center."""
        return float(np.mean(self.r_f**2) / (4.0 * np.pi))

    def interp_radius(self, theta):
        """Periodic linear interpolation of r_F at arbitrary angles."""
        th = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        grid = np.concatenate([self.theta, [self.theta[0] + TWO_PI]])
        vals = np.concatenate([self.r_f, [self.r_f[0]]])
        return np.interp(th, grid, vals)

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["theta", "r_F", "R_under", "R_over"])
            for row in zip(self.theta, self.r_f, self.r_under, self.r_over):
                writer.writerow([f"{x:.17g}" for x in row])

    @classmethod
    def load_csv(cls, path, center=(0.0, 0.0)) -> "FermiRadiusTable":
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        return cls(
            theta=data[:, 0], r_f=data[:, 1], r_under=data[:, 2], r_over=data[:, 3],
            center=tuple(center),
        )


def default_bracket(e: Dispersion):
    """[0.05, distance(center, boundary of F_2) - 0.01] along every ray."""
    return 0.05, np.pi / 2.0 - 0.01


def fermi_radius(e: Dispersion, theta: float, bracket=None, tol: float = 1e-12) -> float:
    """Radius of S_e along the ray at ``theta``; bisection plus Newton polish."""
    lo, hi = bracket if bracket is not None else default_bracket(e)
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    lo = np.broadcast_to(np.asarray(lo, dtype=float), th.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), th.shape)
    roots = bracketed_roots(
        lambda r: e.radial_value(r, th),
        lambda r: e.radial_derivative(r, th),
        lo,
        hi,
        tol=tol,
        context="fermi radius",
    )
    return float(roots[0]) if np.isscalar(theta) else roots


def trace_surface(
    e: Dispersion,
    mtheta: int = 256,
    bracket=None,
    reference: FermiRadiusTable | None = None,
    reference_slack: float = 0.05,
    tol: float = 1e-12,
) -> FermiRadiusTable:
    """Trace r_F on the uniform angular grid theta_i = 2 pi i / mtheta.

    A reference table from a previous iterate narrows the brackets to
    r_F(prev) +- slack; otherwise the default conservative bracket is used.
    """
    if mtheta < 64:
        raise ValueError("need mtheta >= 64")
    theta = TWO_PI * np.arange(mtheta) / mtheta
    if reference is not None:
        prev = reference.interp_radius(theta)
        lo = np.maximum(prev - reference_slack, 1e-3)
        hi = prev + reference_slack
    elif bracket is not None:
        lo = np.broadcast_to(np.asarray(bracket[0], dtype=float), theta.shape)
        hi = np.broadcast_to(np.asarray(bracket[1], dtype=float), theta.shape)
    else:
        b = default_bracket(e)
        lo = np.full(mtheta, b[0])
        hi = np.full(mtheta, b[1])
    try:
        r = bracketed_roots(
            lambda rr: e.radial_value(rr, theta),
            lambda rr: e.radial_derivative(rr, theta),
            lo,
            hi,
            tol=tol,
            context="surface trace",
        )
    except RayRootError as err:
        bad_angles = [float(theta[i]) for i in err.bad_indices[:8]]
        raise GeometryError(
            f"surface trace failed at theta = {bad_angles}: {err}"
        ) from err
    return FermiRadiusTable(
        theta=theta, r_f=r, r_under=np.asarray(lo), r_over=np.asarray(hi),
        center=tuple(e.center),
    )


def curvature(e: Dispersion, p):
    """Level-curve curvature kappa = (t, e''(p) t) / |grad e(p)|, t unit tangent."""
    p = np.asarray(p, dtype=float)
    g = e.gradient(p)
    gn = np.linalg.norm(g, axis=-1)
    if np.any(gn < 1e-12):
        raise GeometryError("vanishing gradient: curvature undefined")
    n = g / gn[..., None]
    t = np.stack([-n[..., 1], n[..., 0]], axis=-1)
    h = e.hessian(p)
    form = np.einsum("...i,...ij,...j->...", t, h, t)
    return form / gn


def turning_rate_curvature(table: FermiRadiusTable, e: Dispersion):
    """Finite-difference Gauss-map oracle: d(angle of normal)/d(arclength).

    Independent of the curvature formula; second-order accurate on the
    traced grid (quadratic fit through unevenly spaced neighbours).
    """
    pts = table.points()
    g = e.gradient(pts)
    phi = np.unwrap(np.arctan2(g[..., 1], g[..., 0]))
    seg = np.linalg.norm(np.diff(pts, axis=0, append=pts[:1] + 0.0), axis=-1)
    # arclength positions; close the curve periodically
    s = np.concatenate([[0.0], np.cumsum(seg)])[:-1]
    total = float(np.sum(seg))
    phi_prev = np.roll(phi, 1).copy()
    phi_next = np.roll(phi, -1).copy()
    phi_prev[0] -= TWO_PI * np.sign(phi[-1] - phi[0])  # undo the unwrap jump
    phi_next[-1] += TWO_PI * np.sign(phi[-1] - phi[0])
    h2 = s - np.roll(s, 1)
    h2[0] = s[0] + total - s[-1]
    h1 = np.roll(s, -1) - s
    h1[-1] = total - s[-1] + s[0]
    num = h2**2 * phi_next + (h1**2 - h2**2) * phi - h1**2 * phi_prev
    return num / (h1 * h2 * (h1 + h2))


@dataclass(frozen=True)
class ClassReport:
    """Signed margins per condition; already reduced by the guard band."""

    margin_distance: float
    margin_gradient: float
    margin_norm: float
    margin_curvature: float
    min_distance: float
    min_gradient: float
    norm_c2: float
    min_curvature_form: float
    sea_ok: bool
    guard: float
    verdict: bool

    def as_dict(self):
        return {
            "margin_distance": self.margin_distance,
            "margin_gradient": self.margin_gradient,
            "margin_norm": self.margin_norm,
            "margin_curvature": self.margin_curvature,
            "min_distance": self.min_distance,
            "min_gradient": self.min_gradient,
            "norm_c2": self.norm_c2,
            "min_curvature_form": self.min_curvature_form,
            "sea_ok": self.sea_ok,
            "guard": self.guard,
            "verdict": self.verdict,
        }


def c2_norm_estimate(e: Dispersion, grid_n: int = 256, polar_domain=None, mtheta: int = 256):
    """Grid estimate of |e|_2 = sup|e| + sum of first/second derivative sups.

    ``polar_domain=(r_lo, r_hi)`` restricts to an annulus about e.center:
    ray-offset iterates are only smooth away from the ray origin, and their
    class data live on the annulus anyway.  Documented under-estimate O(h^2).
    """
    if polar_domain is None:
        axis = -np.pi + TWO_PI * np.arange(grid_n) / grid_n
        pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
    else:
        r_lo, r_hi = polar_domain
        r = np.linspace(r_lo, r_hi, max(grid_n // 4, 16))
        th = TWO_PI * np.arange(mtheta) / mtheta
        rg, tg = np.meshgrid(r, th, indexing="ij")
        pts = e.ray_points(rg, tg)
    vals = e.value(pts)
    grad = e.gradient(pts)
    hess = e.hessian(pts)
    # |e|_2 sums an individual sup per derivative multi-index
    return float(
        np.max(np.abs(vals))
        + np.max(np.abs(grad[..., 0]))
        + np.max(np.abs(grad[..., 1]))
        + np.max(np.abs(hess[..., 0, 0]))
        + np.max(np.abs(hess[..., 0, 1]))
        + np.max(np.abs(hess[..., 1, 1]))
    )


def check_class(
    e: Dispersion,
    params: ClassParams,
    mtheta: int = 256,
    grid_n: int = 256,
    guard: float = 1e-3,
    table: FermiRadiusTable | None = None,
    bracket=None,
    norm_domain=None,
) -> ClassReport:
    """Membership report for E_s(delta0, g0, G0, omega0).

    All surface conditions are evaluated at the traced samples; |e|_2 comes
    from a dense grid, so every margin carries the guard band against
    discretization optimism.
    """
    if table is None:
        table = trace_surface(e, mtheta=mtheta, bracket=bracket)
    pts = table.points()
    dist = float(np.min(e.torus.distance_to_half_cell_boundary(pts)))
    grad = e.gradient(pts)
    gn = np.linalg.norm(grad, axis=-1)
    min_grad = float(np.min(gn))
    n = grad / gn[..., None]
    t = np.stack([-n[..., 1], n[..., 0]], axis=-1)
    form = np.einsum("...i,...ij,...j->...", t, e.hessian(pts), t)
    min_form = float(np.min(form))
    norm2 = c2_norm_estimate(e, grid_n=grid_n, polar_domain=norm_domain, mtheta=mtheta)
    lo, hi = e.sea_probe()
    sea_ok = lo < 0.0 < hi
    margins = dict(
        margin_distance=dist - params.delta0 - guard,
        margin_gradient=min_grad - params.g0 - guard,
        margin_norm=params.G0 - norm2 - guard,
        margin_curvature=min_form - params.omega0 - guard,
    )
    verdict = sea_ok and all(v > 0.0 for v in margins.values())
    return ClassReport(
        **margins,
        min_distance=dist,
        min_gradient=min_grad,
        norm_c2=norm2,
        min_curvature_form=min_form,
        sea_ok=bool(sea_ok),
        guard=guard,
        verdict=bool(verdict),
    )


@dataclass(frozen=True)
class ConvexCenterReport:
    chord_a: tuple
    chord_b: tuple
    center: tuple
    radius_min: float
    radius_max: float
    cos_min: float
    curvature_min: float
    curvature_max: float
    slack: float
    radius_lower_ok: bool
    radius_upper_ok: bool
    angle_ok: bool
    center_norm: float

    def as_dict(self):
        d = dict(self.__dict__)
        d["chord_a"] = list(self.chord_a)
        d["chord_b"] = list(self.chord_b)
        d["center"] = list(self.center)
        return d


def convex_center(table: FermiRadiusTable, e: Dispersion, slack_factor: float = 10.0) -> ConvexCenterReport:
    """Maximal-chord center and the 1/K <= |p - c| <= 1/k bounds.

    The maximally separated pair is found by brute force over all sample
    pairs; bounds are checked with slack ``slack_factor * 2 pi / mtheta``
    for the discretization of the chord.
    """
    pts = table.points()
    kappa = curvature(e, pts)
    if np.any(kappa <= 0.0):
        raise GeometryError("non-convex sample detected (curvature <= 0)")
    k_lo = float(np.min(kappa))
    k_hi = float(np.max(kappa))
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    i, j = np.unravel_index(int(np.argmax(d2)), d2.shape)
    c = 0.5 * (pts[i] + pts[j])
    rel = pts - c
    radii = np.linalg.norm(rel, axis=-1)
    grad = e.gradient(pts)
    nrm = grad / np.linalg.norm(grad, axis=-1)[..., None]
    cosines = np.sum(rel * nrm, axis=-1) / np.maximum(radii, 1e-300)
    slack = slack_factor * TWO_PI / table.mtheta
    return ConvexCenterReport(
        chord_a=tuple(pts[i]),
        chord_b=tuple(pts[j]),
        center=tuple(c),
        radius_min=float(np.min(radii)),
        radius_max=float(np.max(radii)),
        cos_min=float(np.min(cosines)),
        curvature_min=k_lo,
        curvature_max=k_hi,
        slack=slack,
        radius_lower_ok=bool(np.min(radii) >= 1.0 / k_hi - slack),
        radius_upper_ok=bool(np.max(radii) <= 1.0 / k_lo + slack),
        angle_ok=bool(np.min(cosines) >= k_lo / k_hi - slack),
        center_norm=float(np.linalg.norm(c)),
    )


def offset_surface(table: FermiRadiusTable, e: Dispersion, L: float):
    """Offset points p~ = p - n(p)/L; requires L above every sampled curvature."""
    pts = table.points()
    kappa = curvature(e, pts)
    kmax = float(np.max(kappa))
    if L <= kmax:
        raise GeometryError(f"offset parameter L = {L} must exceed max curvature {kmax:.6g}")
    grad = e.gradient(pts)
    nrm = grad / np.linalg.norm(grad, axis=-1)[..., None]
    return pts - nrm / L


def discrete_convexity(points) -> bool:
    """True when the closed polygon through ``points`` has positive turning."""
    pts = np.asarray(points)
    edges = np.roll(pts, -1, axis=0) - pts
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    return bool(np.all(cross > 0.0))
