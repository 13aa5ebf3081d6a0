"""Counterterm models K(e, lambda V) and their scale decomposition.

The first-order (Fock) counterterm for an instantaneous interaction is

    K_1(p) = lambda * [ w_H * v~(0) * n_e  -  int_{I_e} v~(p - q) d^2q/(2pi)^2 ]

localized on the Fermi surface of e and extended constant along rays.  The
Hartree spin weight w_H = 2 is fixed by a two-site second-quantized oracle
(see tests), not assumed.

The scale-resolved variant replaces the static sea density theta(-e(q)) by
the frequency integral of the single-scale propagator
C_j = chi_j(p0, p) / (i p0 - e(p)), whose support is the energy shell
M^(j-2) <= |i p0 - e(p)| <= M^j.  Summed over shells the densities
telescope; the top slice completes the frequency integral (ultraviolet tail
plus the static half) so that the family sums to the Fock counterterm up to
an infrared remainder supported on |e| < M^(j_min - 1).
"""

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial.legendre import leggauss

from fermikit.dispersion import Dispersion, TrigField
from fermikit.fields import GridField, ck_norms, sample_polar
from fermikit.geometry import FermiRadiusTable, trace_surface
from fermikit.interaction import InteractionModel
from fermikit.rootfind import bracketed_roots
from fermikit.torus import TWO_PI, smoothstep

# Spin multiplicity of the tadpole: both spin species run around the Hartree
# loop, only the like-spin one around the exchange loop.  Pinned by the
# exact-diagonalization oracle in tests/test_counterterm.py.
HARTREE_SPIN_WEIGHT = 2.0
EXCHANGE_SPIN_WEIGHT = 1.0

_QUARTER_TURN = (2.0 * np.pi) ** 2


class CountertermError(RuntimeError):
    pass


def _gl(n: int):
    return leggauss(n)


@dataclass(frozen=True)
class QuadratureSettings:
    sea_radial_nodes: int = 32
    shell_x_nodes: int = 48
    freq_nodes: int = 48
    target_chunk: int = 64
    abs_tol: float = 1e-8


@dataclass(frozen=True)
class ScaleCutoff:
    """Smooth multiscale partition chi_j built from a C-infinity profile.

    a(u) = 1 on [0, 1/M^2], 0 on [1, inf);
    chi_j(p0, p) = a(|i p0 - e|^2 / M^(2j)) - a(|i p0 - e|^2 / M^(2(j-1))).
    The windows telescope: summed over j_min <= j <= j_max they equal one on
    the shell M^(j_min - 1) <= |i p0 - e| <= M^(j_max - 1).
    """

    M: float = 2.0
    j_min: int = -12
    j_max: int = 0

    def __post_init__(self):
        if self.M <= 1.0:
            raise ValueError("need scale base M > 1")
        if self.j_min >= self.j_max:
            raise ValueError("need j_min < j_max")

    @property
    def scales(self):
        return list(range(self.j_min, self.j_max + 1))

    def profile(self, u):
        u = np.asarray(u, dtype=float)
        lo = 1.0 / self.M**2
        return 1.0 - smoothstep((u - lo) / (1.0 - lo))

    def chi_abs(self, j: int, absval):
        """chi_j as a function of |i p0 - e(p)|."""
        x2 = np.asarray(absval, dtype=float) ** 2
        return self.profile(x2 / self.M ** (2 * j)) - self.profile(x2 / self.M ** (2 * (j - 1)))

    def chi(self, j: int, p0, evals):
        return self.chi_abs(j, np.sqrt(np.asarray(p0) ** 2 + np.asarray(evals) ** 2))

    def support_bounds(self, j: int):
        return self.M ** (j - 2), self.M**j

    def partition_shell(self):
        """The |i p0 - e| shell where the chi windows sum exactly to one."""
        return self.M ** (self.j_min - 1), self.M ** (self.j_max - 1)


# -- frequency integrals ---------------------------------------------------


def slice_density(cutoff: ScaleCutoff, j: int, x, nq: int = 48):
    """n_j(x) = -(x/pi) * int chi_j(sqrt(q0^2+x^2)) / (q0^2+x^2) dq0, q0 >= 0 doubled.

    The single-scale propagator's frequency integral; odd in x and supported
    on |x| <= M^j.
    """
    x = np.asarray(x, dtype=float)
    qmax = np.sqrt(np.maximum(cutoff.M ** (2 * j) - x**2, 0.0))
    tt, ww = _gl(nq)
    q0 = 0.5 * qmax[..., None] * (tt + 1.0)
    wq = 0.5 * qmax[..., None] * ww
    u = q0**2 + x[..., None] ** 2
    integ = np.sum(wq * cutoff.chi_abs(j, np.sqrt(u)) / np.maximum(u, 1e-300), axis=-1)
    return -(x / np.pi) * integ


def cumulative_soft_density(cutoff: ScaleCutoff, j: int, x, nq: int = 48):
    """N_{<=j}(x): frequency integral with the profile a(|.|^2 / M^(2j))."""
    x = np.asarray(x, dtype=float)
    qmax = np.sqrt(np.maximum(cutoff.M ** (2 * j) - x**2, 0.0))
    tt, ww = _gl(nq)
    q0 = 0.5 * qmax[..., None] * (tt + 1.0)
    wq = 0.5 * qmax[..., None] * ww
    u = q0**2 + x[..., None] ** 2
    integ = np.sum(wq * cutoff.profile(u / cutoff.M ** (2 * j)) / np.maximum(u, 1e-300), axis=-1)
    return -(x / np.pi) * integ


def top_slice_density(cutoff: ScaleCutoff, x, nq: int = 48):
    """theta(-x) - N_{<= j_max - 1}(x): completes the frequency integral."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.0, 1.0, 0.0) - cumulative_soft_density(cutoff, cutoff.j_max - 1, x, nq)


# -- momentum-shell quadrature ---------------------------------------------


def _shell_points(e: Dispersion, theta, x_nodes, r_hi: float = 3.1):
    """Solve e~(r, theta') = x on every ray and return points and Jacobian.

    The change of variables d^2q = (r / d_r e~) dx dtheta turns a thin energy
    shell into a rectangle in (theta', x).
    """
    th_grid, x_grid = np.meshgrid(theta, x_nodes, indexing="ij")
    th_flat = th_grid.reshape(-1)
    x_flat = x_grid.reshape(-1)
    lo = np.full_like(th_flat, 1e-9)
    hi = np.full_like(th_flat, r_hi)
    r = bracketed_roots(
        lambda rr: e.radial_value(rr, th_flat) - x_flat,
        lambda rr: e.radial_derivative(rr, th_flat),
        lo,
        hi,
        tol=1e-10,
        context="energy shell",
    )
    slope = e.radial_derivative(r, th_flat)
    pts = e.ray_points(r, th_flat)
    jac = r / slope
    shape = th_grid.shape
    return pts.reshape(shape + (2,)), jac.reshape(shape)


def _x_panels(x_lo: float, x_hi: float, floor: float, n_nodes: int):
    """Gauss nodes/weights on [x_lo, x_hi], split at 0, with a sqrt
    substitution on a panel whose lower edge sits at the dispersion minimum
    (the ray radius behaves like sqrt(x - floor) there)."""
    tt, ww = _gl(n_nodes)
    edges = [x_lo, x_hi]
    if x_lo < 0.0 < x_hi:
        edges = [x_lo, 0.0, x_hi]
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 1e-300:
            continue
        if a - floor < 1e-9:
            # substitute x = a + u^2 to absorb the sqrt behaviour of r(x)
            umax = np.sqrt(b - a)
            u = 0.5 * umax * (tt + 1.0)
            nodes.append(a + u**2)
            weights.append(0.5 * umax * ww * 2.0 * u)
        else:
            nodes.append(0.5 * (b - a) * (tt + 1.0) + a)
            weights.append(np.full(n_nodes, 0.5 * (b - a)) * ww)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def _shell_integrals(e, v, table, density, x_lo, x_hi, quad, targets):
    """(hartree, exchange[targets]) for int v~(p - q) nu(e(q)) d^2q/(2pi)^2."""
    # the shell parametrization starts where every ray reaches: the sup over
    # rays of the on-axis value (equal to min e for radial profiles)
    floor = float(np.max(e.radial_value(np.full(table.mtheta, 1e-6), table.theta))) + 1e-12
    x_lo = max(x_lo, floor)
    if x_hi <= x_lo:
        z = np.zeros(len(targets))
        return 0.0, z
    x_nodes, x_w = _x_panels(x_lo, x_hi, floor, quad.shell_x_nodes)
    pts, jac = _shell_points(e, table.theta, x_nodes)
    dens = density(x_nodes)
    w = jac * (dens * x_w)[None, :] * (TWO_PI / table.mtheta) / _QUARTER_TURN
    hartree = float(np.sum(w))
    q_flat = pts.reshape(-1, 2)
    w_flat = w.reshape(-1)
    exch = np.empty(len(targets))
    step = quad.target_chunk
    for start in range(0, len(targets), step):
        block = targets[start : start + step]
        vals = v.spatial(block[:, None, :] - q_flat[None, :, :])
        exch[start : start + len(block)] = vals @ w_flat
    return hartree, exch


def _sea_integrals(e, v, table, quad, targets):
    """(n_e, exchange[targets]) with the Fermi sea integrated in polar form."""
    tt, ww = _gl(quad.sea_radial_nodes)
    r = 0.5 * table.r_f[:, None] * (tt + 1.0)
    wr = 0.5 * table.r_f[:, None] * ww * r  # includes the r dr Jacobian
    th = np.broadcast_to(table.theta[:, None], r.shape)
    pts = np.asarray(table.center) + np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    w = wr * (TWO_PI / table.mtheta) / _QUARTER_TURN
    n_e = float(np.sum(w))
    q_flat = pts.reshape(-1, 2)
    w_flat = w.reshape(-1)
    exch = np.empty(len(targets))
    step = quad.target_chunk
    for start in range(0, len(targets), step):
        block = targets[start : start + step]
        vals = v.spatial(block[:, None, :] - q_flat[None, :, :])
        exch[start : start + len(block)] = vals @ w_flat
    return n_e, exch


# -- models -----------------------------------------------------------------


class CountertermModel:
    """A map e -> K(e, lambda V), evaluated on the Fermi surface of e."""

    kind = "abstract"
    lam: float = 0.0

    def surface_values(self, e: Dispersion, table: FermiRadiusTable):
        raise NotImplementedError

    def as_gridfield(self, e, table, r_axis=None) -> GridField:
        vals = self.surface_values(e, table)
        if r_axis is None:
            width = max(0.05, 0.1 * float(np.mean(table.r_f)))
            r_axis = np.linspace(max(float(np.min(table.r_f)) - width, 1e-3),
                                 float(np.max(table.r_f)) + width, 17)
        values = np.tile(vals, (len(r_axis), 1))
        return GridField("polar", np.asarray(r_axis, dtype=float), table.theta, values,
                         metadata=self.metadata())

    def with_coupling(self, lam: float) -> "CountertermModel":
        return replace(self, lam=lam)

    def metadata(self) -> dict:
        return {"kind": self.kind, "lambda": self.lam}


@dataclass(frozen=True)
class FockCounterterm(CountertermModel):
    """First-order counterterm, exact Fermi-sea quadrature."""

    v: InteractionModel = None
    lam: float = 0.0
    quad: QuadratureSettings = field(default=QuadratureSettings())
    kind: str = "fock-first-order"

    def __post_init__(self):
        if self.v is None or not self.v.is_instantaneous:
            raise CountertermError("fock counterterm needs an instantaneous interaction")

    def surface_values(self, e, table):
        targets = table.points()
        n_e, exch = _sea_integrals(e, self.v, table, self.quad, targets)
        v0 = float(self.v.spatial(np.zeros(2)))
        return self.lam * (HARTREE_SPIN_WEIGHT * v0 * n_e - EXCHANGE_SPIN_WEIGHT * exch)

    def metadata(self):
        return {
            "kind": self.kind,
            "lambda": self.lam,
            "hartree_spin_weight": HARTREE_SPIN_WEIGHT,
            "exchange_spin_weight": EXCHANGE_SPIN_WEIGHT,
            "sign_convention": "K = + (hartree - exchange), oracle-pinned",
        }


@dataclass(frozen=True)
class SyntheticCounterterm(CountertermModel):
    """Lipschitz test double: lambda * compress(shape at the surface of e).

    compress(x) = tanh(x)/tanh(1) fixes compress(1) = 1, so shape == 1 gives
    the constant counterterm lambda exactly.  The Lipschitz constant
    sup|compress'| * sup|grad shape| / min d_r e~ is computable from samples.
    """

    lam: float = 0.0
    shape: Dispersion = field(default_factory=lambda: TrigField([(0, 0, 1.0, "cos")]))
    kind: str = "synthetic-lipschitz"

    def surface_values(self, e, table):
        vals = self.shape.value(table.points())
        return self.lam * np.tanh(vals) / np.tanh(1.0)

    def slice_surface_values(self, e, table, j, complete_top=False):
        # no scale structure: a flat ledger, kept for the degenerate case
        return self.surface_values(e, table)

    def lipschitz_constant(self, e, table) -> float:
        slope = e.radial_derivative(table.r_f, table.theta)
        gmax = float(np.max(np.linalg.norm(self.shape.gradient(table.points()), axis=-1)))
        return (1.0 / np.tanh(1.0)) * gmax / float(np.min(slope))


@dataclass(frozen=True)
class ScaleResolvedFock(CountertermModel):
    """K = sum_j K_j with single-scale propagators; top slice completes the sum."""

    v: InteractionModel = None
    lam: float = 0.0
    cutoff: ScaleCutoff = field(default=ScaleCutoff())
    quad: QuadratureSettings = field(default=QuadratureSettings())
    kind: str = "scale-resolved"

    def __post_init__(self):
        if self.v is None or not self.v.is_instantaneous:
            raise CountertermError("scale-resolved fock needs an instantaneous interaction")

    def slice_surface_values(self, e, table, j: int, complete_top: bool = False):
        if j < self.cutoff.j_min or j > self.cutoff.j_max:
            raise CountertermError(f"scale index {j} out of cutoff range")
        targets = table.points()
        v0 = float(self.v.spatial(np.zeros(2)))
        if complete_top:
            n_sea, exch_sea = _sea_integrals(e, self.v, table, self.quad, targets)
            bound = self.cutoff.M ** (self.cutoff.j_max - 1)
            hartree_soft, exch_soft = _shell_integrals(
                e, self.v, table,
                lambda x: cumulative_soft_density(self.cutoff, self.cutoff.j_max - 1, x,
                                                  self.quad.freq_nodes),
                -bound, bound, self.quad, targets,
            )
            hartree = n_sea - hartree_soft
            exch = exch_sea - exch_soft
        else:
            bound = self.cutoff.M**j
            hartree, exch = _shell_integrals(
                e, self.v, table,
                lambda x: slice_density(self.cutoff, j, x, self.quad.freq_nodes),
                -bound, bound, self.quad, targets,
            )
        return self.lam * (HARTREE_SPIN_WEIGHT * v0 * hartree - EXCHANGE_SPIN_WEIGHT * exch)

    def surface_values(self, e, table):
        total = self.slice_surface_values(e, table, self.cutoff.j_max, complete_top=True)
        for j in range(self.cutoff.j_min, self.cutoff.j_max):
            total = total + self.slice_surface_values(e, table, j)
        return total

    def metadata(self):
        return {
            "kind": self.kind,
            "lambda": self.lam,
            "M": self.cutoff.M,
            "j_min": self.cutoff.j_min,
            "j_max": self.cutoff.j_max,
            "hartree_spin_weight": HARTREE_SPIN_WEIGHT,
        }


# -- spec-level operations ---------------------------------------------------


def fock_counterterm(e, v, lam, table=None, quad=QuadratureSettings(), r_axis=None) -> GridField:
    if table is None:
        table = trace_surface(e)
    return FockCounterterm(v=v, lam=lam, quad=quad).as_gridfield(e, table, r_axis)


def synthetic_counterterm(e, lam, shape=None, table=None, r_axis=None) -> GridField:
    if table is None:
        table = trace_surface(e)
    model = SyntheticCounterterm(lam=lam) if shape is None else SyntheticCounterterm(lam=lam, shape=shape)
    return model.as_gridfield(e, table, r_axis)


def single_scale_counterterm(e, v, lam, j, cutoff=ScaleCutoff(), table=None,
                             quad=QuadratureSettings(), complete_top=False,
                             r_axis=None) -> GridField:
    if table is None:
        table = trace_surface(e)
    model = ScaleResolvedFock(v=v, lam=lam, cutoff=cutoff, quad=quad)
    vals = model.slice_surface_values(e, table, j, complete_top=complete_top)
    if r_axis is None:
        width = max(0.05, 0.1 * float(np.mean(table.r_f)))
        r_axis = np.linspace(max(float(np.min(table.r_f)) - width, 1e-3),
                             float(np.max(table.r_f)) + width, 17)
    values = np.tile(vals, (len(r_axis), 1))
    meta = model.metadata()
    meta["scale"] = j
    meta["complete_top"] = complete_top
    return GridField("polar", np.asarray(r_axis, dtype=float), table.theta, values, metadata=meta)


@dataclass(frozen=True)
class ScaleLedger:
    scales: tuple
    norm0: tuple
    norm1: tuple
    norm2: tuple
    gamma_fit: float
    M: float

    def as_dict(self):
        return {
            "scales": list(self.scales),
            "norm0": list(self.norm0),
            "norm1": list(self.norm1),
            "norm2": list(self.norm2),
            "gamma_fit": self.gamma_fit,
            "M": self.M,
        }


def scale_ledger(model, e, j_range, table=None, cutoff=None) -> ScaleLedger:
    """Per-scale norms |K_j|_0..2 and the least-squares decay slope.

    gamma_fit is the slope of log_M |K_j|_0 against j; a flat (or zero)
    ledger fits to 0.
    """
    if not hasattr(model, "slice_surface_values"):
        raise CountertermError("scale ledger needs a scale-resolved model")
    js = list(j_range)
    if not js:
        raise CountertermError("empty scale range")
    if table is None:
        table = trace_surface(e)
    M = getattr(getattr(model, "cutoff", None), "M", 2.0)
    n0, n1, n2 = [], [], []
    for j in js:
        vals = model.slice_surface_values(e, table, j)
        width = max(0.05, 0.1 * float(np.mean(table.r_f)))
        r_axis = np.linspace(max(float(np.min(table.r_f)) - width, 1e-3),
                             float(np.max(table.r_f)) + width, 9)
        gf = GridField("polar", r_axis, table.theta, np.tile(vals, (len(r_axis), 1)))
        rep = ck_norms(gf, k_max=2)
        n0.append(rep.norm(0))
        n1.append(rep.norm(1))
        n2.append(rep.norm(2))
    n0a = np.asarray(n0)
    if np.all(n0a > 0.0) and len(js) >= 2:
        slope = np.polyfit(np.asarray(js, dtype=float), np.log(n0a) / np.log(M), 1)[0]
    else:
        slope = 0.0
    return ScaleLedger(
        scales=tuple(js),
        norm0=tuple(float(x) for x in n0),
        norm1=tuple(float(x) for x in n1),
        norm2=tuple(float(x) for x in n2),
        gamma_fit=float(slope),
        M=float(M),
    )


# -- probes -------------------------------------------------------------------


@dataclass(frozen=True)
class LipschitzReport:
    de_norms: tuple  # |e1-e0|_0, _1, _2
    dk_norms: tuple  # |K1-K0|_0, _1, _2
    quotient0: float
    quotient1: float
    quotient2: float
    delta: float
    s3: float

    def as_dict(self):
        return {
            "de_norms": list(self.de_norms),
            "dk_norms": list(self.dk_norms),
            "quotient0": self.quotient0,
            "quotient1": self.quotient1,
            "quotient2": self.quotient2,
            "delta": self.delta,
            "s3": self.s3,
        }


def lipschitz_probe(model: CountertermModel, e0: Dispersion, e1: Dispersion,
                    delta: float = 0.5, mtheta: int = 256, bracket=None) -> LipschitzReport:
    """Holder quotients of the counterterm map between two dispersions.

    Reports |dK|_0/|de|_0, |dK|_1/(|de|_0^delta + |de|_1) and
    |dK|_2/(|de|_1^delta + |de|_2 + S3 |de|_0); no pass/fail.
    """
    t0 = trace_surface(e0, mtheta=mtheta, bracket=bracket)
    t1 = trace_surface(e1, mtheta=mtheta, bracket=bracket)
    width = max(0.05, 0.15 * float(np.mean(t0.r_f)))
    r_axis = np.linspace(max(float(np.min(t0.r_f)) - width, 1e-3),
                         float(np.max(t0.r_f)) + width, 17)
    k0 = model.as_gridfield(e0, t0, r_axis)
    k1 = model.as_gridfield(e1, t1, r_axis)
    dk = ck_norms(k1 - k0, k_max=2)
    de_field = sample_polar(e1, r_axis, t0.theta, center=e0.center) - sample_polar(
        e0, r_axis, t0.theta, center=e0.center
    )
    de = ck_norms(de_field, k_max=3)
    s3 = max(
        ck_norms(sample_polar(e0, r_axis, t0.theta, center=e0.center), 3).radial_norm(3),
        ck_norms(sample_polar(e1, r_axis, t0.theta, center=e0.center), 3).radial_norm(3),
    )
    d0, d1, d2 = de.norm(0), de.norm(1), de.norm(2)
    k0n, k1n, k2n = dk.norm(0), dk.norm(1), dk.norm(2)
    q0 = k0n / d0 if d0 > 0 else 0.0
    den1 = d0**delta + d1
    q1 = k1n / den1 if den1 > 0 else 0.0
    den2 = d1**delta + d2 + s3 * d0
    q2 = k2n / den2 if den2 > 0 else 0.0
    return LipschitzReport(
        de_norms=(d0, d1, d2),
        dk_norms=(k0n, k1n, k2n),
        quotient0=float(q0),
        quotient1=float(q1),
        quotient2=float(q2),
        delta=float(delta),
        s3=float(s3),
    )


# -- volume improvement -------------------------------------------------------


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    std_error: float
    shell1_volume: float
    shell2_volume: float
    hits: int
    samples: int

    def as_dict(self):
        return dict(self.__dict__)


def _shell_radii(e: Dispersion, eps: float, table: FermiRadiusTable):
    """r at e~ = -eps and +eps on every table ray (the eps-shell boundary)."""
    e_min, e_max = e.sea_probe()
    if eps <= 0 or eps >= -e_min or eps >= e_max:
        raise CountertermError(f"shell half-width {eps} does not cut the dispersion range")
    theta = table.theta
    out = []
    for sign in (-1.0, 1.0):
        lo = np.zeros_like(theta)
        hi = np.full_like(theta, 3.1)
        out.append(
            bracketed_roots(
                lambda rr: e.radial_value(rr, theta) - sign * eps,
                lambda rr: e.radial_derivative(rr, theta),
                lo,
                hi,
                tol=1e-10,
                context="shell radius",
            )
        )
    return out[0], out[1]


def shell_volume(e: Dispersion, eps: float, table: FermiRadiusTable | None = None) -> float:
    """Plain measure of U(e, eps) = {p : |e(p)| <= eps} via the polar coarea form."""
    if table is None:
        table = trace_surface(e)
    r_lo, r_hi = _shell_radii(e, eps, table)
    return float(np.mean(0.5 * (r_hi**2 - r_lo**2)) * TWO_PI)


def _sample_shell(e, eps, table, n, rng):
    r_lo, r_hi = _shell_radii(e, eps, table)
    if np.any(r_hi <= r_lo):
        raise CountertermError("empty shell: zero samples possible")
    theta = rng.uniform(0.0, TWO_PI, size=n)
    idx = np.minimum((theta / TWO_PI * table.mtheta).astype(int), table.mtheta - 1)
    lo = r_lo[idx]
    hi = r_hi[idx]
    r = np.sqrt(lo**2 + rng.uniform(size=n) * (hi**2 - lo**2))
    area_density = 0.5 * (hi**2 - lo**2)  # per-theta shell area density A(theta)
    pts = np.asarray(e.center) + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    return pts, area_density


def volume_improvement(e: Dispersion, eps1: float, eps2: float, eps3: float,
                       q=(0.0, 0.0), signs=(1, 1), samples: int = 1_000_000,
                       seed: int = 0, table: FermiRadiusTable | None = None) -> VolumeEstimate:
    """Monte-Carlo estimate of the overlap volume

        int_{U(e, eps1)} dp1 int_{U(e, eps2)} dp2  1[|e(s1 p1 + s2 p2 + q)| <= eps3].

    Momenta are drawn inside the shells (with the exact per-angle area
    density as weight), so the standard error scales with the indicator's
    variance rather than the shells' small acceptance fraction.
    """
    if not (0 < eps1 <= eps2):
        raise CountertermError("need 0 < eps1 <= eps2")
    if table is None:
        table = trace_surface(e, mtheta=512)
    rng = np.random.default_rng(seed)
    p1, a1 = _sample_shell(e, eps1, table, samples, rng)
    p2, a2 = _sample_shell(e, eps2, table, samples, rng)
    z = signs[0] * p1 + signs[1] * p2 + np.asarray(q, dtype=float)
    ind = (np.abs(e.value(z)) <= eps3).astype(float)
    weights = a1 * a2 * ind
    mean = float(np.mean(weights))
    se = float(np.std(weights) / np.sqrt(samples))
    return VolumeEstimate(
        value=TWO_PI**2 * mean,
        std_error=TWO_PI**2 * se,
        shell1_volume=shell_volume(e, eps1, table),
        shell2_volume=shell_volume(e, eps2, table),
        hits=int(ind.sum()),
        samples=samples,
    )


def volume_exponent_fit(e, eps12: float, eps3_ladder, samples=200_000, seed=0,
                        q=(0.0, 0.0), signs=(1, 1), table=None):
    """Fit 2*gamma from estimates over an eps3 ladder; returns (slope, estimates)."""
    if table is None:
        table = trace_surface(e, mtheta=512)
    ests = [
        volume_improvement(e, eps12, eps12, e3, q=q, signs=signs, samples=samples,
                           seed=seed + i, table=table)
        for i, e3 in enumerate(eps3_ladder)
    ]
    vals = np.array([x.value for x in ests])
    slope = np.polyfit(np.log(np.asarray(eps3_ladder)), np.log(vals), 1)[0]
    return float(slope), ests


def shell_volume_slope(e, eps_ladder, table=None):
    """log-log slope of |U(e, eps)| against eps (coarea oracle: slope 1)."""
    if table is None:
        table = trace_surface(e, mtheta=512)
    vols = np.array([shell_volume(e, x, table) for x in eps_ladder])
    return float(np.polyfit(np.log(np.asarray(eps_ladder)), np.log(vols), 1)[0])
