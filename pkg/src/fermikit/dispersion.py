"""Dispersion-relation families on the Brillouin torus with C^2 jets.

Closed-form families (periodized free quadratic, tight binding, elliptic
level set), grid-sampled dispersions with spectrally accurate interpolation,
symmetric trigonometric perturbation fields, and the ray-constant-offset
representation produced by the counterterm iteration.

The free dispersion |p|^2/2 - mu is not periodic, so its radial derivative
is tapered to zero before the cell boundary; the taper is chosen so the
canonical class parameters (delta0, g0, G0, omega0) = (0.1, 0.5, 10, 0.5)
hold for moderate mu.  Every family is exactly quadratic (resp. elliptic)
out to ``taper_start``, which contains the Fermi surface for the parameter
ranges used here.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from fermikit.torus import TWO_PI, BrillouinTorus, smoothstep, smoothstep_d1, smoothstep_d2

_GL_NODES, _GL_WEIGHTS = leggauss(48)


class Dispersion:
    """Base class: a periodic scalar field with value / gradient / hessian."""

    torus: BrillouinTorus = BrillouinTorus()
    symmetric: bool = True
    center: tuple = (0.0, 0.0)
    kind: str = "abstract"

    def value(self, p):
        raise NotImplementedError

    def gradient(self, p):
        raise NotImplementedError

    def hessian(self, p):
        raise NotImplementedError

    def __call__(self, p):
        return self.value(p)

    # -- polar helpers (rays anchored at self.center) ------------------

    def ray_points(self, r, theta):
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        c = np.asarray(self.center)
        return c + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def radial_value(self, r, theta):
        """e~(r, theta) = e(p(r, theta))."""
        return self.value(self.ray_points(r, theta))

    def radial_derivative(self, r, theta):
        """d/dr of e~ along the ray, i.e. grad(e) . omega(theta)."""
        theta = np.asarray(theta, dtype=float)
        omega = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        g = self.gradient(self.ray_points(r, theta))
        return np.sum(g * omega, axis=-1)

    def sea_probe(self, n: int = 96):
        """(min, max) of e on an n x n probe grid."""
        _, grid = self.torus.grid(n)
        vals = self.value(grid)
        return float(vals.min()), float(vals.max())


def evaluate_jet(e: Dispersion, p, order: int = 2):
    """Value, gradient and hessian of ``e`` at wrap(p).

    Total on the torus; the finite-difference jet sources inherit the same
    interface, so the hessian is symmetric by construction.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    out = [e.value(p)]
    if order >= 1:
        out.append(e.gradient(p))
    if order >= 2:
        out.append(e.hessian(p))
    return tuple(out)


def _radial_hessian(q, hpp, hp_over_r):
    """Hessian of a radial profile h(|q|): h'' on q^, h'/r transverse."""
    q = np.asarray(q, dtype=float)
    r = np.linalg.norm(q, axis=-1)
    safe = np.maximum(r, 1e-300)
    qhat = q / safe[..., None]
    outer = qhat[..., :, None] * qhat[..., None, :]
    eye = np.eye(2)
    h = hpp[..., None, None] * outer + hp_over_r[..., None, None] * (eye - outer)
    # at the axis the two eigenvalues coincide; fall back to h'' * I
    at_origin = r < 1e-12
    if np.any(at_origin):
        h = np.where(at_origin[..., None, None], hpp[..., None, None] * eye, h)
    return h


@dataclass(frozen=True)
class WrappedQuadratic(Dispersion):
    """Free dispersion |p|^2/2 - mu with the radial slope tapered to zero.

    Beyond ``taper_start`` the slope is

        h'(ra + w t) = ra (1 - s(t)) + w t (1 - s(t / kick)),   t in [0, 1],

    with the exp(-1/x) smoothstep s and w = taper_end - taper_start.  The
    short kick term restores h''(ra) = 1, so the field equals |p|^2/2 - mu
    exactly for |p| <= ra, joins C-infinity there, and levels off before the
    cell boundary with |h''| small enough that the canonical class bound
    |e|_2 < 10 holds.  ``center`` shifts the profile on the torus (used for
    asymmetric test surfaces).
    """

    mu: float = 0.5
    center: tuple = (0.0, 0.0)
    taper_start: float = 1.12
    taper_end: float = 3.04
    taper_kick: float = 0.12
    kind: str = "wrapped-quadratic"
    torus: BrillouinTorus = field(default=BrillouinTorus())

    def __post_init__(self):
        if not 0.0 < self.taper_start < self.taper_end < np.pi:
            raise ValueError("need 0 < taper_start < taper_end < pi")
        if self.mu <= 0.0 or self._h(np.pi / 2.0 - 0.05) <= self.mu:
            raise ValueError("mu must place the Fermi circle inside the half cell")

    @property
    def symmetric(self) -> bool:
        return tuple(self.center) == (0.0, 0.0)

    # radial profile -----------------------------------------------------

    def _s_arg(self, r):
        return (r - self.taper_start) / (self.taper_end - self.taper_start)

    def _hp(self, r):
        r = np.asarray(r, dtype=float)
        t = self._s_arg(r)
        ra = self.taper_start
        w = self.taper_end - self.taper_start
        taper = ra * (1.0 - smoothstep(t)) + w * np.maximum(t, 0.0) * (
            1.0 - smoothstep(t / self.taper_kick)
        )
        return np.where(r <= ra, r, taper)

    def _hpp(self, r):
        r = np.asarray(r, dtype=float)
        t = self._s_arg(r)
        ra = self.taper_start
        w = self.taper_end - self.taper_start
        eps = self.taper_kick
        taper = (
            -ra * smoothstep_d1(t) / w
            + (1.0 - smoothstep(t / eps))
            - np.maximum(t, 0.0) * smoothstep_d1(t / eps) / eps
        )
        return np.where(r <= ra, 1.0, taper)

    def _h(self, r):
        r = np.asarray(r, dtype=float)
        flat = np.atleast_1d(r).reshape(-1)
        ra = self.taper_start
        out = 0.5 * flat**2
        in_taper = flat > ra
        if np.any(in_taper):
            # Gauss-Legendre integral of h' over [ra, min(r, rb)], only where needed
            up = np.minimum(flat[in_taper], self.taper_end)
            half = 0.5 * (up - ra)
            mid = 0.5 * (up + ra)
            nodes = mid[:, None] + half[:, None] * _GL_NODES
            out[in_taper] = 0.5 * ra**2 + np.sum(_GL_WEIGHTS * self._hp(nodes), axis=-1) * half
        return out.reshape(r.shape) if r.ndim else float(out[0])

    # jets ----------------------------------------------------------------

    def _local(self, p):
        return self.torus.wrap(np.asarray(p, dtype=float) - np.asarray(self.center))

    def value(self, p):
        q = self._local(p)
        r = np.linalg.norm(q, axis=-1)
        return self._h(r) - self.mu

    def gradient(self, p):
        q = self._local(p)
        r = np.linalg.norm(q, axis=-1)
        safe = np.maximum(r, 1e-300)
        scale = np.where(r < 1e-12, 1.0 - smoothstep(self._s_arg(r)), self._hp(r) / safe)
        return q * scale[..., None]

    def hessian(self, p):
        q = self._local(p)
        r = np.linalg.norm(q, axis=-1)
        safe = np.maximum(r, 1e-300)
        hp_over_r = np.where(r < 1e-12, self._hpp(r), self._hp(r) / safe)
        return _radial_hessian(q, self._hpp(r), hp_over_r)


@dataclass(frozen=True)
class TightBinding(Dispersion):
    """Nearest-neighbour band e(p) = -2 t (cos p1 + cos p2) - mu."""

    t: float = 1.0
    mu: float = 0.0
    kind: str = "tight-binding"
    symmetric: bool = True
    center: tuple = (0.0, 0.0)
    torus: BrillouinTorus = field(default=BrillouinTorus())

    def value(self, p):
        q = self.torus.wrap(p)
        return -2.0 * self.t * (np.cos(q[..., 0]) + np.cos(q[..., 1])) - self.mu

    def gradient(self, p):
        q = self.torus.wrap(p)
        return 2.0 * self.t * np.sin(q)

    def hessian(self, p):
        q = self.torus.wrap(p)
        h = np.zeros(q.shape[:-1] + (2, 2))
        h[..., 0, 0] = 2.0 * self.t * np.cos(q[..., 0])
        h[..., 1, 1] = 2.0 * self.t * np.cos(q[..., 1])
        return h

    def hole_pocket_view(self, center):
        """-e with rays anchored at a pocket center such as (pi, pi).

        A hole pocket has the sea outside, so e decreases along rays from the
        pocket center; negating restores the sea-inside orientation that the
        radial tracer assumes.  The traced points are on S_e either way.
        """
        return HolePocketView(self, tuple(center))


@dataclass(frozen=True)
class HolePocketView(Dispersion):
    base: Dispersion = None
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "torus", self.base.torus)
        object.__setattr__(self, "symmetric", False)
        object.__setattr__(self, "kind", self.base.kind + "-hole-pocket")

    def value(self, p):
        return -self.base.value(p)

    def gradient(self, p):
        return -self.base.gradient(p)

    def hessian(self, p):
        return -self.base.hessian(p)


@dataclass(frozen=True)
class EllipseLevelSet(Dispersion):
    """Level-set dispersion p1^2/a^2 + p2^2/b^2 - 1, radially blended to a
    positive plateau outside ``taper_start`` so it is periodic."""

    a: float = 1.2
    b: float = 0.8
    taper_start: float = 0.0  # 0 -> max(a, b) + 0.2
    taper_end: float = 3.04
    plateau: float = 8.0
    kind: str = "ellipse-level-set"
    symmetric: bool = True
    center: tuple = (0.0, 0.0)
    torus: BrillouinTorus = field(default=BrillouinTorus())

    def __post_init__(self):
        ra = self.taper_start if self.taper_start > 0 else max(self.a, self.b) + 0.2
        if not ra < self.taper_end < np.pi:
            raise ValueError("taper window must fit inside the cell")
        object.__setattr__(self, "taper_start", ra)

    def _quad(self, q):
        return q[..., 0] ** 2 / self.a**2 + q[..., 1] ** 2 / self.b**2 - 1.0

    def _quad_grad(self, q):
        return np.stack([2.0 * q[..., 0] / self.a**2, 2.0 * q[..., 1] / self.b**2], axis=-1)

    def _blend(self, q):
        r = np.linalg.norm(q, axis=-1)
        t = (r - self.taper_start) / (self.taper_end - self.taper_start)
        return r, t

    def value(self, p):
        q = self.torus.wrap(p)
        _, t = self._blend(q)
        s = smoothstep(t)
        return (1.0 - s) * self._quad(q) + s * self.plateau

    def gradient(self, p):
        q = self.torus.wrap(p)
        r, t = self._blend(q)
        w = self.taper_end - self.taper_start
        s = smoothstep(t)
        sp = smoothstep_d1(t) / w
        safe = np.maximum(r, 1e-300)
        qhat = q / safe[..., None]
        return (1.0 - s)[..., None] * self._quad_grad(q) + (
            (self.plateau - self._quad(q)) * sp
        )[..., None] * qhat

    def hessian(self, p):
        q = self.torus.wrap(p)
        r, t = self._blend(q)
        w = self.taper_end - self.taper_start
        s = smoothstep(t)
        sp = smoothstep_d1(t) / w
        spp = smoothstep_d2(t) / w**2
        safe = np.maximum(r, 1e-300)
        qhat = q / safe[..., None]
        outer = qhat[..., :, None] * qhat[..., None, :]
        eye = np.eye(2)
        quad = self._quad(q)
        gq = self._quad_grad(q)
        qxx = np.zeros(q.shape[:-1] + (2, 2))
        qxx[..., 0, 0] = 2.0 / self.a**2
        qxx[..., 1, 1] = 2.0 / self.b**2
        grad_s = sp[..., None] * qhat
        hess_s = spp[..., None, None] * outer + (sp / safe)[..., None, None] * (eye - outer)
        h = (1.0 - s)[..., None, None] * qxx
        h -= grad_s[..., :, None] * gq[..., None, :] + gq[..., :, None] * grad_s[..., None, :]
        h += (self.plateau - quad)[..., None, None] * hess_s
        return h


class TrigField(Dispersion):
    """Real trigonometric polynomial sum_m amp_m * cos/sin(k_m . p).

    Pure-cosine combinations are symmetric under p -> -p; sine terms are
    allowed for deliberately asymmetric test fields.
    """

    kind = "trig-field"
    center = (0.0, 0.0)

    def __init__(self, terms, torus: BrillouinTorus = BrillouinTorus()):
        # terms: iterable of (kx, ky, amplitude, "cos"|"sin")
        self.terms = tuple((int(kx), int(ky), float(a), str(fn)) for kx, ky, a, fn in terms)
        self.torus = torus
        self.symmetric = all(fn == "cos" for *_, fn in self.terms)

    def value(self, p):
        q = np.asarray(p, dtype=float)
        out = np.zeros(q.shape[:-1])
        for kx, ky, a, fn in self.terms:
            phase = kx * q[..., 0] + ky * q[..., 1]
            out += a * (np.cos(phase) if fn == "cos" else np.sin(phase))
        return out

    def gradient(self, p):
        q = np.asarray(p, dtype=float)
        out = np.zeros(q.shape)
        for kx, ky, a, fn in self.terms:
            phase = kx * q[..., 0] + ky * q[..., 1]
            d = -a * np.sin(phase) if fn == "cos" else a * np.cos(phase)
            out[..., 0] += d * kx
            out[..., 1] += d * ky
        return out

    def hessian(self, p):
        q = np.asarray(p, dtype=float)
        out = np.zeros(q.shape + (2,))
        for kx, ky, a, fn in self.terms:
            phase = kx * q[..., 0] + ky * q[..., 1]
            dd = -a * np.cos(phase) if fn == "cos" else -a * np.sin(phase)
            kk = np.array([[kx * kx, kx * ky], [kx * ky, ky * ky]], dtype=float)
            out += dd[..., None, None] * kk
        return out

    def scaled(self, factor: float) -> "TrigField":
        return TrigField(
            [(kx, ky, a * factor, fn) for kx, ky, a, fn in self.terms], self.torus
        )


class SumDispersion(Dispersion):
    """base + coeff * field, e.g. a class member plus a small perturbation."""

    kind = "sum"

    def __init__(self, base: Dispersion, fieldpart: Dispersion, coeff: float = 1.0):
        self.base = base
        self.fieldpart = fieldpart
        self.coeff = float(coeff)
        self.torus = base.torus
        self.center = base.center
        self.symmetric = base.symmetric and fieldpart.symmetric

    def value(self, p):
        return self.base.value(p) + self.coeff * self.fieldpart.value(p)

    def gradient(self, p):
        return self.base.gradient(p) + self.coeff * self.fieldpart.gradient(p)

    def hessian(self, p):
        return self.base.hessian(p) + self.coeff * self.fieldpart.hessian(p)


class RayOffsetDispersion(Dispersion):
    """base(p) - o(theta(p)): a dispersion minus a ray-constant offset.

    This is the exact form of a counterterm iterate e_{n+1} = E - K(e_n),
    since localized counterterms are constant along rays.  The offset is a
    periodic cubic spline through the sampled surface values.
    """

    kind = "ray-offset"

    def __init__(self, base: Dispersion, theta_nodes, offsets):
        theta_nodes = np.asarray(theta_nodes, dtype=float)
        offsets = np.asarray(offsets, dtype=float)
        if theta_nodes.ndim != 1 or theta_nodes.shape != offsets.shape:
            raise ValueError("theta grid and offsets must be matching 1d arrays")
        self.base = base
        self.torus = base.torus
        self.center = base.center
        self.theta_nodes = theta_nodes
        self.offsets = offsets
        tx = np.concatenate([theta_nodes, [theta_nodes[0] + TWO_PI]])
        ty = np.concatenate([offsets, [offsets[0]]])
        self._spline = CubicSpline(tx, ty, bc_type="periodic")
        self._spline_d1 = self._spline.derivative(1)
        self._spline_d2 = self._spline.derivative(2)
        half = len(offsets) // 2
        pi_periodic = (
            len(offsets) % 2 == 0
            and float(np.max(np.abs(offsets - np.roll(offsets, half)))) < 1e-10
        )
        self.symmetric = base.symmetric and pi_periodic

    def _theta(self, p):
        q = self.torus.wrap(np.asarray(p, dtype=float) - np.asarray(self.center))
        return np.mod(np.arctan2(q[..., 1], q[..., 0]), TWO_PI), q

    def offset_at(self, theta):
        return self._spline(np.mod(theta, TWO_PI))

    def value(self, p):
        th, _ = self._theta(p)
        return self.base.value(p) - self._spline(th)

    def gradient(self, p):
        th, q = self._theta(p)
        r2 = np.maximum(np.sum(q * q, axis=-1), 1e-300)
        grad_th = np.stack([-q[..., 1], q[..., 0]], axis=-1) / r2[..., None]
        return self.base.gradient(p) - self._spline_d1(th)[..., None] * grad_th

    def hessian(self, p):
        th, q = self._theta(p)
        x, y = q[..., 0], q[..., 1]
        r2 = np.maximum(x * x + y * y, 1e-300)
        grad_th = np.stack([-y, x], axis=-1) / r2[..., None]
        hess_th = np.empty(q.shape + (2,))
        hess_th[..., 0, 0] = 2.0 * x * y
        hess_th[..., 0, 1] = y * y - x * x
        hess_th[..., 1, 0] = y * y - x * x
        hess_th[..., 1, 1] = -2.0 * x * y
        hess_th /= (r2 * r2)[..., None, None]
        o1 = self._spline_d1(th)
        o2 = self._spline_d2(th)
        out = self.base.hessian(p)
        out = out - o2[..., None, None] * (grad_th[..., :, None] * grad_th[..., None, :])
        out = out - o1[..., None, None] * hess_th
        return out


class GridSampled(Dispersion):
    """Dispersion from samples on a uniform N x N torus grid.

    Interpolation is the trigonometric interpolant of the samples (exactly
    periodic, C-infinity, and spectrally accurate), with jets either from
    differentiating the interpolant or from central differences of step h.
    """

    kind = "grid-sampled"
    center = (0.0, 0.0)

    def __init__(self, values, jet_source: str = "spectral", fd_step: float | None = None,
                 torus: BrillouinTorus = BrillouinTorus()):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        if values.shape != (n, n) or n < 8 or n % 2:
            raise ValueError("values must be (n, n) with even n >= 8")
        if jet_source not in ("spectral", "fd"):
            raise ValueError("jet_source must be 'spectral' or 'fd'")
        self.values = values
        self.n = n
        self.torus = torus
        self.jet_source = jet_source
        self.fd_step = fd_step if fd_step is not None else 0.5 * TWO_PI / n
        # grid node (i, j) sits at -pi + 2 pi i / n; shift the FFT phases so
        # the coefficient array is indexed by integer modes in [-n/2, n/2].
        coef = np.fft.fft2(values) / n**2
        ks = np.arange(-n // 2, n // 2 + 1)
        halfw = np.where(np.abs(ks) == n // 2, 0.5, 1.0)  # split the Nyquist mode
        cext = (halfw[:, None] * halfw[None, :]) * coef[np.ix_(ks % n, ks % n)]
        # samples sit at -pi + 2 pi i / n, so undo the origin phase per mode
        shift = np.exp(1j * np.pi * ks)
        cext = cext * shift[:, None] * shift[None, :]
        self._modes = ks
        self._cext = cext
        self.symmetric = bool(np.max(np.abs(cext.imag)) < 1e-9) and bool(
            np.max(np.abs(cext - cext[::-1, ::-1])) < 1e-9
        )

    @classmethod
    def from_dispersion(cls, e: Dispersion, n: int = 128, **kw) -> "GridSampled":
        _, grid = e.torus.grid(n)
        return cls(e.value(grid), torus=e.torus, **kw)

    def _eval_modes(self, p, dx: int = 0, dy: int = 0):
        q = self.torus.wrap(p)
        flat = q.reshape(-1, 2)
        ks = self._modes
        ex = np.exp(1j * np.outer(flat[:, 0], ks))
        ey = np.exp(1j * np.outer(flat[:, 1], ks))
        c = self._cext
        if dx:
            c = c * (1j * ks)[:, None] ** dx
        if dy:
            c = c * (1j * ks)[None, :] ** dy
        out = np.einsum("bk,kl,bl->b", ex, c, ey).real
        return out.reshape(q.shape[:-1])

    def value(self, p):
        return self._eval_modes(p)

    def gradient(self, p):
        if self.jet_source == "fd":
            return self._fd_gradient(p)
        return np.stack([self._eval_modes(p, dx=1), self._eval_modes(p, dy=1)], axis=-1)

    def hessian(self, p):
        if self.jet_source == "fd":
            return self._fd_hessian(p)
        q = np.asarray(p, dtype=float)
        h = np.empty(q.shape[:-1] + (2, 2))
        h[..., 0, 0] = self._eval_modes(p, dx=2)
        h[..., 0, 1] = h[..., 1, 0] = self._eval_modes(p, dx=1, dy=1)
        h[..., 1, 1] = self._eval_modes(p, dy=2)
        return h

    def _fd_gradient(self, p):
        q = np.asarray(p, dtype=float)
        h = self.fd_step
        e = np.eye(2) * h
        return np.stack(
            [(self.value(q + e[i]) - self.value(q - e[i])) / (2 * h) for i in range(2)],
            axis=-1,
        )

    def _fd_hessian(self, p):
        q = np.asarray(p, dtype=float)
        h = self.fd_step
        e = np.eye(2) * h
        out = np.empty(q.shape[:-1] + (2, 2))
        f0 = self.value(q)
        for i in range(2):
            out[..., i, i] = (self.value(q + e[i]) - 2 * f0 + self.value(q - e[i])) / h**2
        mixed = (
            self.value(q + e[0] + e[1])
            - self.value(q + e[0] - e[1])
            - self.value(q - e[0] + e[1])
            + self.value(q - e[0] - e[1])
        ) / (4 * h**2)
        out[..., 0, 1] = out[..., 1, 0] = mixed
        return out

    # CSV round trip: header line is N, then N*N values row-major.

    def save_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"{self.n}\n")
            for v in self.values.reshape(-1):
                fh.write(f"{v:.17g}\n")

    @classmethod
    def load_csv(cls, path, **kw) -> "GridSampled":
        with open(path) as fh:
            n = int(fh.readline())
            vals = np.array([float(fh.readline()) for _ in range(n * n)])
        return cls(vals.reshape(n, n), **kw)


_FAMILIES = {
    "wrapped-quadratic": WrappedQuadratic,
    "tight-binding": TightBinding,
    "ellipse-level-set": EllipseLevelSet,
}


def make_dispersion(family: str, params: dict | None = None) -> Dispersion:
    """Instantiate a dispersion family and check it has a proper Fermi sea."""
    params = dict(params or {})
    if family == "grid-sampled":
        if "path" in params:
            e = GridSampled.load_csv(params.pop("path"), **params)
        elif "values" in params:
            e = GridSampled(params.pop("values"), **params)
        else:
            raise ValueError("grid-sampled needs 'values' or 'path'")
    elif family in _FAMILIES:
        e = _FAMILIES[family](**params)
    else:
        raise ValueError(f"unknown dispersion family {family!r}")
    lo, hi = e.sea_probe()
    if lo >= 0.0:
        raise ValueError("parameters produce an empty Fermi sea")
    if hi <= 0.0:
        raise ValueError("parameters produce a full Fermi sea")
    return e
