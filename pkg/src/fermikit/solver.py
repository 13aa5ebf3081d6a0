"""Iterative solution of the counterterm equation e + K(e, lambda V) = E.

The iteration e_0 = E, e_{n+1} = E - K(e_n) stays inside a ball around E
(measured in |.|_2 and in the radial norm |.|_{3,r}) and inside the relaxed
dispersion class E_s(delta0/2, g0/2, 2 G0, omega0/2); each step's increment
f_n = e_n - e_{n-1} is tracked in the three norms that control the proof's
mixed geometric/Holder rates:

    |f_n|_0 <= (Q|l|)^n,   |f_n|_1 <= B_R (Q|l|)^(n d),
    |f_n|_{3,r} <= C_R max(B_R^d, 1) (Q|l|)^(n d^2),

with B_R = (Q|l|)^(1-d) / (1 - (Q|l|)^(1-d)) and C_R the same with d^2.

Because localized counterterms are constant along rays, every iterate is
exactly E minus a ray-constant offset; iterates are represented that way
(RayOffsetDispersion) while all norms live on a fixed polar grid over the
annulus of the original E.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from fermikit.counterterm import CountertermModel
from fermikit.dispersion import Dispersion, RayOffsetDispersion, SumDispersion
from fermikit.fields import GridField, ck_norms, polar_axes, sample_polar
from fermikit.geometry import (
    ClassParams,
    FermiRadiusTable,
    GeometryError,
    check_class,
    derive_radial_constants,
    trace_surface,
)
from fermikit.interaction import InteractionModel


class SolverError(RuntimeError):
    pass


class DivergenceError(SolverError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DegenerateTraceError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    lam: float
    model: CountertermModel
    class_params: ClassParams
    eps_ball: float = 0.05          # |e - E|_2 radius of the invariant ball
    radial_ball: float = 1.0        # |e - E|_{3,r} radius
    radial_guard: float = 0.9       # guard factor on the radial ball
    n_max: int = 60
    tol: float = 1e-10              # stop tolerance on |f_n|_{3,r}
    mtheta: int = 256
    nr: int = 17
    g3_max: float = 50.0            # reject starting E with larger |E|_{3,r}
    q_estimate: float | None = None
    check_class_each_step: bool = True

    def __post_init__(self):
        if self.q_estimate is not None:
            if self.q_estimate * abs(self.lam) >= min(1.0, self.eps_ball):
                raise ValueError(
                    "coupling guard violated: Q * |lambda| must stay below min(1, eps_ball)"
                )


@dataclass(frozen=True)
class RateConstants:
    """Q, delta and the derived rate prefactors B_R, C_R."""

    q: float
    delta: float
    lam: float

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.contraction >= 1.0:
            raise ValueError("need Q |lambda| < 1 for finite rate constants")

    @property
    def contraction(self) -> float:
        return self.q * abs(self.lam)

    @property
    def b_r(self) -> float:
        x = self.contraction ** (1.0 - self.delta)
        return x / (1.0 - x)

    @property
    def c_r(self) -> float:
        x = self.contraction ** (1.0 - self.delta**2)
        return x / (1.0 - x)


@dataclass
class TraceRow:
    n: int
    f0: float
    f1: float
    f3r: float
    residual: float
    class_ok: bool
    ball_ok: bool


@dataclass
class IterationTrace:
    rows: list
    converged: bool
    stop_reason: str
    lam: float
    increments: list = field(default_factory=list)  # f_n grid values, in order
    ratio_geomean: dict = field(default_factory=dict)
    ratio_max: dict = field(default_factory=dict)
    solution_norms: dict = field(default_factory=dict)
    reconstruction_error: float = 0.0
    d_empirical: float = 0.0

    def norm_track(self, key: str):
        return np.array([getattr(r, key) for r in self.rows])

    def fit_ratios(self):
        """Geometric-mean and max step ratios per norm track, for n >= 2."""
        for key in ("f0", "f1", "f3r"):
            vals = self.norm_track(key)
            vals = vals[vals > 0.0]
            if len(vals) >= 3:
                ratios = vals[2:] / vals[1:-1]
                self.ratio_geomean[key] = float(np.exp(np.mean(np.log(ratios))))
                self.ratio_max[key] = float(np.max(ratios))
            elif len(vals) >= 2:
                self.ratio_geomean[key] = float(vals[-1] / vals[-2])
                self.ratio_max[key] = self.ratio_geomean[key]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "f0", "f1", "f3r", "residual", "class_ok", "ball_ok"])
            for r in self.rows:
                writer.writerow(
                    [r.n]
                    + [f"{x:.17g}" for x in (r.f0, r.f1, r.f3r, r.residual)]
                    + [int(r.class_ok), int(r.ball_ok)]
                )

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "steps": len(self.rows),
            "lambda": self.lam,
            "ratio_geomean": self.ratio_geomean,
            "ratio_max": self.ratio_max,
            "solution_norms": self.solution_norms,
            "reconstruction_error": self.reconstruction_error,
            "d_empirical": self.d_empirical,
            "rows": [
                {
                    "n": r.n,
                    "f0": r.f0,
                    "f1": r.f1,
                    "f3r": r.f3r,
                    "residual": r.residual,
                    "class_ok": r.class_ok,
                    "ball_ok": r.ball_ok,
                }
                for r in self.rows
            ],
        }


def _solver_grid(E: Dispersion, table: FermiRadiusTable, config: SolverConfig):
    slope = E.radial_derivative(table.r_f, table.theta)
    g_emp = float(np.min(slope))
    rc = derive_radial_constants(config.class_params)
    width = max(2.0 * rc.r0, 1.5 * config.eps_ball / g_emp, 0.02)
    r_lo = max(float(np.min(table.r_f)) - width, 1e-3)
    r_hi = float(np.max(table.r_f)) + width
    return polar_axes(r_lo, r_hi, config.nr, config.mtheta)


def invert(E: Dispersion, config: SolverConfig, initial: Dispersion | None = None):
    """Solve e + K(e) = E by iteration from e_0 = E (or a supplied start).

    Returns (solution, trace).  Aborts with DivergenceError when an iterate
    leaves the invariant ball or class, or when the residual grows for three
    consecutive steps; the partial trace rides on the exception.
    """
    model = config.model.with_coupling(config.lam)
    params = config.class_params
    base_report = check_class(E, params, mtheta=config.mtheta)
    if not base_report.verdict:
        raise SolverError(f"starting dispersion fails the class check: {base_report.as_dict()}")
    table_E = trace_surface(E, mtheta=config.mtheta)
    r_axis, theta = _solver_grid(E, table_E, config)
    S_E = sample_polar(E, r_axis, theta, center=E.center).values
    base_field = GridField("polar", r_axis, theta, S_E)
    e3r = ck_norms(base_field, 3).radial_norm(3)
    if e3r > config.g3_max:
        raise SolverError(f"|E|_3r estimate {e3r:.3g} exceeds the configured bound {config.g3_max}")

    e_cur = E if initial is None else initial
    S_cur = S_E if initial is None else sample_polar(e_cur, r_axis, theta, center=E.center).values
    table_cur = table_E if initial is None else trace_surface(
        e_cur, mtheta=config.mtheta, reference=table_E, reference_slack=0.3 * float(np.mean(table_E.r_f))
    )
    trace = IterationTrace(rows=[], converged=False, stop_reason="max-iterations", lam=config.lam)
    residual_history = []
    increase_streak = 0
    d_emp = 0.0
    slack = 0.3 * float(np.mean(table_E.r_f))

    for n in range(1, config.n_max + 1):
        K = np.asarray(model.surface_values(e_cur, table_cur), dtype=float)
        k_field = GridField("polar", r_axis, theta, np.tile(K, (config.nr, 1)))
        if config.lam != 0.0:
            d_emp = max(d_emp, ck_norms(k_field, 3).radial_norm(3) / abs(config.lam))
        residual = float(np.max(np.abs(S_cur + K[None, :] - S_E)))
        residual_history.append(residual)
        if len(residual_history) >= 2 and residual > residual_history[-2] + 1e-10:
            increase_streak += 1
        else:
            increase_streak = 0
        if increase_streak >= 3:
            trace.stop_reason = "diverging residual"
            trace.fit_ratios()
            raise DivergenceError("residual increased for three consecutive steps", trace)

        e_next = RayOffsetDispersion(E, theta, K)
        f_vals = (S_E - K[None, :]) - S_cur
        S_next = S_cur + f_vals
        f_field = GridField("polar", r_axis, theta, f_vals)
        rep = ck_norms(f_field, 3)
        diff_field = GridField("polar", r_axis, theta, S_next - S_E)
        diff_rep = ck_norms(diff_field, 3)
        ball_ok = (
            diff_rep.norm(2) < config.eps_ball
            and diff_rep.radial_norm(3) < config.radial_guard * config.radial_ball
        )
        row = TraceRow(
            n=n,
            f0=rep.norm(0),
            f1=rep.norm(1),
            f3r=rep.radial_norm(3),
            residual=residual,
            class_ok=True,
            ball_ok=bool(ball_ok),
        )
        trace.rows.append(row)
        trace.increments.append(f_vals)
        if not ball_ok:
            trace.stop_reason = "iterate left the ball"
            trace.fit_ratios()
            raise DivergenceError(
                f"iterate {n} left the invariant ball "
                f"(|e-E|_2 = {diff_rep.norm(2):.3g} vs eps = {config.eps_ball})",
                trace,
            )
        try:
            table_next = trace_surface(
                e_next, mtheta=config.mtheta, reference=table_cur, reference_slack=slack
            )
        except GeometryError as err:
            trace.stop_reason = "iterate surface left the bracketed annulus"
            trace.fit_ratios()
            raise DivergenceError(f"iterate {n} is no longer traceable: {err}", trace) from err
        if config.check_class_each_step:
            step_report = check_class(
                e_next,
                params.relaxed(),
                mtheta=config.mtheta,
                table=table_next,
                norm_domain=(r_axis[0], r_axis[-1]),
            )
            row.class_ok = bool(step_report.verdict)
        if not row.class_ok:
            trace.stop_reason = "iterate left the dispersion class"
            trace.fit_ratios()
            raise DivergenceError(f"iterate {n} failed the relaxed class check", trace)
        e_cur, S_cur, table_cur = e_next, S_next, table_next
        if rep.radial_norm(3) < config.tol:
            trace.converged = True
            trace.stop_reason = "increment below tolerance"
            break
        if rep.norm(0) <= 64.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(S_E)))):
            # increments at the rounding floor: the fixed point is resolved
            trace.converged = True
            trace.stop_reason = "increment at rounding floor"
            break

    # residual of the final iterate (one extra counterterm evaluation)
    K_fin = np.asarray(model.surface_values(e_cur, table_cur), dtype=float)
    final_residual = float(np.max(np.abs(S_cur + K_fin[None, :] - S_E)))
    if trace.rows:
        trace.rows[-1].residual = final_residual

    # bookkeeping identity e_n = E + sum f_k, accumulated in step order
    recon = S_E.copy()
    for f in trace.increments:
        recon = recon + f
    trace.reconstruction_error = float(np.max(np.abs(recon - S_cur)))

    diff_field = GridField("polar", r_axis, theta, S_cur - S_E)
    diff_rep = ck_norms(diff_field, 3)
    trace.d_empirical = d_emp
    trace.solution_norms = {
        "residual": final_residual,
        "diff0": diff_rep.norm(0),
        "diff1": diff_rep.norm(1),
        "diff2": diff_rep.norm(2),
        "diff3r": diff_rep.radial_norm(3),
        "diff2_over_lambda": diff_rep.norm(2) / abs(config.lam) if config.lam else 0.0,
        "radial_bound_ok": bool(
            config.lam == 0.0
            or diff_rep.radial_norm(3) <= d_emp * abs(config.lam) * (1.0 + 1e-6) + 1e-12
        ),
    }
    trace.fit_ratios()
    if trace.converged and final_residual > 10.0 * max(config.tol, 1e-14):
        trace.stop_reason = "converged but residual above 10*tol"
    return e_cur, trace


@dataclass(frozen=True)
class RateReport:
    slope0: float
    slope1: float
    slope3r: float
    envelope0_ok: bool
    envelope1_ok: bool
    envelope3r_ok: bool
    slope0_bound: float
    constants: RateConstants

    def as_dict(self):
        return {
            "slope0": self.slope0,
            "slope1": self.slope1,
            "slope3r": self.slope3r,
            "envelope0_ok": self.envelope0_ok,
            "envelope1_ok": self.envelope1_ok,
            "envelope3r_ok": self.envelope3r_ok,
            "slope0_bound": self.slope0_bound,
            "q": self.constants.q,
            "delta": self.constants.delta,
            "lambda": self.constants.lam,
            "b_r": self.constants.b_r,
            "c_r": self.constants.c_r,
        }


def rate_check(trace: IterationTrace, constants: RateConstants, slack: float = 0.2) -> RateReport:
    """Fit the three norm tracks and test the geometric/Holder envelopes.

    slope0 is the least-squares slope of log|f_n|_0 against n (compared with
    log of the contraction factor), slope1 against n*delta, slope3r against
    n*delta^2; the envelope booleans check the explicit bounds at every step.
    """
    ns, f0, f1, f3r = [], [], [], []
    for r in trace.rows:
        if r.f0 > 0.0 and r.f1 > 0.0 and r.f3r > 0.0:
            ns.append(r.n)
            f0.append(r.f0)
            f1.append(r.f1)
            f3r.append(r.f3r)
    if len(ns) < 4:
        raise DegenerateTraceError("need >= 4 steps with nonzero increments to fit rates")
    ns = np.asarray(ns, dtype=float)
    d = constants.delta
    slope0 = float(np.polyfit(ns, np.log(f0), 1)[0])
    slope1 = float(np.polyfit(ns * d, np.log(f1), 1)[0])
    slope3 = float(np.polyfit(ns * d * d, np.log(f3r), 1)[0])
    rho = constants.contraction
    env0 = all(r.f0 <= rho**r.n * (1.0 + 1e-9) for r in trace.rows)
    env1 = all(r.f1 <= constants.b_r * rho ** (r.n * d) * (1.0 + 1e-9) for r in trace.rows)
    pref = constants.c_r * max(constants.b_r**d, 1.0)
    env3 = all(r.f3r <= pref * rho ** (r.n * d * d) * (1.0 + 1e-9) for r in trace.rows)
    return RateReport(
        slope0=slope0,
        slope1=slope1,
        slope3r=slope3,
        envelope0_ok=bool(env0),
        envelope1_ok=bool(env1),
        envelope3r_ok=bool(env3),
        slope0_bound=float(np.log(rho) + slack),
        constants=constants,
    )


def uniqueness_probe(E: Dispersion, config: SolverConfig, perturbation: Dispersion | None):
    """|e - e'|_0 for two solver runs started at E and at E + perturbation."""
    from fermikit.geometry import c2_norm_estimate

    e_a, _ = invert(E, config)
    if perturbation is None:
        return 0.0
    pert_norm = c2_norm_estimate(perturbation, grid_n=128)
    if pert_norm >= config.eps_ball:
        raise SolverError(
            f"perturbation with |h|_2 = {pert_norm:.3g} leaves the ball (eps = {config.eps_ball})"
        )
    e_b, _ = invert(E, config, initial=SumDispersion(E, perturbation))
    table = trace_surface(E, mtheta=config.mtheta)
    r_axis, theta = _solver_grid(E, table, config)
    va = sample_polar(e_a, r_axis, theta, center=E.center).values
    vb = sample_polar(e_b, r_axis, theta, center=E.center).values
    return float(np.max(np.abs(va - vb)))


@dataclass(frozen=True)
class ContinuityReport:
    diff0: float
    diff1: float
    diff2: float
    de_norms: tuple
    dv_norm: float
    delta: float
    envelope: float
    zeroth_bound: float
    zeroth_ok: bool
    halved_diff2: float | None
    halved_monotone_ok: bool | None

    def as_dict(self):
        d = dict(self.__dict__)
        d["de_norms"] = list(self.de_norms)
        return d


def interaction_c2_difference(v: InteractionModel, v2: InteractionModel, n_grid: int = 64) -> float:
    """Grid estimate of |v - v'|_2 for instantaneous interactions."""
    from fermikit.torus import BrillouinTorus

    _, grid = BrillouinTorus().grid(n_grid)
    dv = v.spatial(grid) - v2.spatial(grid)
    dg = v.spatial_gradient(grid) - v2.spatial_gradient(grid)
    dh = v.spatial_hessian(grid) - v2.spatial_hessian(grid)
    return float(
        np.max(
            np.abs(dv)
            + np.abs(dg[..., 0]) + np.abs(dg[..., 1])
            + np.abs(dh[..., 0, 0]) + np.abs(dh[..., 0, 1]) + np.abs(dh[..., 1, 1])
        )
    )


def continuity_probe(
    E: Dispersion,
    E2: Dispersion,
    v: InteractionModel,
    v2: InteractionModel,
    config: SolverConfig,
    delta: float = 0.5,
    run_halved: bool = True,
) -> ContinuityReport:
    """Discrepancy of the two solutions against the Holder envelope

        4 (|E-E'|_2 + |E-E'|_1^d + |E-E'|_0^(d^2) + |V-V'|_2^(d^2)).

    Only smallness is asserted, never the constant 4; when E' = E + h with a
    representable h, a third run at h/2 checks that halving the perturbation
    does not increase |e - e'|_2.
    """
    from fermikit.counterterm import FockCounterterm

    def solve(Ex, vx):
        cfg = config
        if isinstance(config.model, FockCounterterm):
            cfg = replace(config, model=replace(config.model, v=vx))
        e_sol, tr = invert(Ex, cfg)
        return e_sol, tr

    e_a, _ = solve(E, v)
    e_b, _ = solve(E2, v2)
    table = trace_surface(E, mtheta=config.mtheta)
    r_axis, theta = _solver_grid(E, table, config)
    diff = sample_polar(e_a, r_axis, theta, center=E.center) - sample_polar(
        e_b, r_axis, theta, center=E.center
    )
    rep = ck_norms(diff, 2)
    de = ck_norms(
        sample_polar(E, r_axis, theta, center=E.center)
        - sample_polar(E2, r_axis, theta, center=E.center),
        2,
    )
    dv = interaction_c2_difference(v, v2)
    envelope = 4.0 * (
        de.norm(2) + de.norm(1) ** delta + de.norm(0) ** (delta**2) + dv ** (delta**2)
    )
    zeroth_bound = 2.0 * de.norm(0) + dv
    halved_diff2 = None
    halved_ok = None
    if run_halved and isinstance(E2, SumDispersion) and E2.base is E:
        E_half = SumDispersion(E, E2.fieldpart, coeff=0.5 * E2.coeff)
        e_h, _ = solve(E_half, v)
        diff_h = sample_polar(e_a, r_axis, theta, center=E.center) - sample_polar(
            e_h, r_axis, theta, center=E.center
        )
        halved_diff2 = ck_norms(diff_h, 2).norm(2)
        halved_ok = bool(halved_diff2 <= rep.norm(2) * 1.05 + 10.0 * config.tol)
    return ContinuityReport(
        diff0=rep.norm(0),
        diff1=rep.norm(1),
        diff2=rep.norm(2),
        de_norms=(de.norm(0), de.norm(1), de.norm(2)),
        dv_norm=dv,
        delta=delta,
        envelope=float(envelope),
        zeroth_bound=float(zeroth_bound),
        zeroth_ok=bool(rep.norm(0) <= zeroth_bound + 10.0 * config.tol),
        halved_diff2=halved_diff2,
        halved_monotone_ok=halved_ok,
    )
