"""Interaction vertices v^(p0, p) and their class-membership report.

Three families: an instantaneous constant, an instantaneous smooth
trigonometric v~(p), and a frequency-decaying
v^(p0, p) = v~(p) + (1 + p0^2)^(-alpha/2) * w(p).

Class conditions: (i) |v^|_2 <= 1, (ii) v^(-p0, p) = conj v^(p0, p),
(iii) v^(p0, -p) = v^(p0, p), (iv) power-law approach to an instantaneous
limit at large |p0|.  The conditions are reported, not enforced: the norm
bound is a normalization convention (a rescaling of v trades against the
coupling), so over-unity interactions are representable and simply fail (i).
"""

from dataclasses import dataclass, field

import numpy as np

from fermikit.dispersion import TrigField
from fermikit.torus import BrillouinTorus


@dataclass(frozen=True)
class InteractionModel:
    """Interaction in momentum space; ``spatial`` is the instantaneous part."""

    family: str = "constant"  # constant | smooth | p0-decaying
    constant: float = 0.5
    spatial_field: TrigField | None = None
    decay_field: TrigField | None = None
    alpha: float = 1.0
    torus: BrillouinTorus = field(default=BrillouinTorus())

    def __post_init__(self):
        if self.family not in ("constant", "smooth", "p0-decaying"):
            raise ValueError(f"unknown interaction family {self.family!r}")
        if self.family in ("smooth", "p0-decaying") and self.spatial_field is None:
            raise ValueError("smooth families need a spatial field")
        if self.family == "p0-decaying" and self.decay_field is None:
            raise ValueError("p0-decaying needs a decay field")

    @property
    def is_instantaneous(self) -> bool:
        return self.family in ("constant", "smooth")

    # -- evaluation -----------------------------------------------------

    def spatial(self, p):
        """v~(p): the instantaneous (large-p0) part."""
        p = np.asarray(p, dtype=float)
        if self.family == "constant":
            return np.full(p.shape[:-1], self.constant)
        return self.spatial_field.value(p)

    def spatial_gradient(self, p):
        p = np.asarray(p, dtype=float)
        if self.family == "constant":
            return np.zeros(p.shape)
        return self.spatial_field.gradient(p)

    def spatial_hessian(self, p):
        p = np.asarray(p, dtype=float)
        if self.family == "constant":
            return np.zeros(p.shape + (2,))
        return self.spatial_field.hessian(p)

    def full(self, p0, p):
        """v^(p0, p); real for these families."""
        p0 = np.asarray(p0, dtype=float)
        base = self.spatial(p)
        if self.family != "p0-decaying":
            return np.broadcast_to(base, np.broadcast(p0, base).shape).copy()
        return base + (1.0 + p0**2) ** (-0.5 * self.alpha) * self.decay_field.value(p)

    def scaled(self, factor: float) -> "InteractionModel":
        kw = dict(
            family=self.family,
            constant=self.constant * factor,
            alpha=self.alpha,
            torus=self.torus,
        )
        if self.spatial_field is not None:
            kw["spatial_field"] = self.spatial_field.scaled(factor)
        if self.decay_field is not None:
            kw["decay_field"] = self.decay_field.scaled(factor)
        return InteractionModel(**kw)

    # -- norms -----------------------------------------------------------

    def c2_norm(self, n_grid: int = 64, p0_samples=(0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0)):
        """Grid estimate of |v^|_2: one sup per (p0, p1, p2) multi-index.

        Closed-form jets per family; sups over the sample set under-estimate,
        as for every grid sup-norm in this package.
        """
        _, grid = self.torus.grid(n_grid)
        wv = np.abs(self._wvals(grid))
        wg = np.abs(self._wgrad(grid))
        wh = np.abs(self._whess(grid))
        sups = np.zeros(10)  # v, d0, d1, d2, d00, d01, d02, d11, d12, d22
        for p0 in p0_samples:
            g, g1, g2 = self._decay_jet(p0)
            if self.family != "p0-decaying":
                g = 0.0
            sv = np.abs(self.spatial(grid)) + abs(g) * wv
            sg = np.abs(self.spatial_gradient(grid)) + abs(g) * wg
            sh = np.abs(self.spatial_hessian(grid)) + abs(g) * wh
            comps = np.array(
                [
                    np.max(sv),
                    abs(g1) * np.max(wv),
                    np.max(sg[..., 0]),
                    np.max(sg[..., 1]),
                    abs(g2) * np.max(wv),
                    abs(g1) * np.max(wg[..., 0]),
                    abs(g1) * np.max(wg[..., 1]),
                    np.max(sh[..., 0, 0]),
                    np.max(sh[..., 0, 1]),
                    np.max(sh[..., 1, 1]),
                ]
            )
            sups = np.maximum(sups, comps)
        return float(np.sum(sups))

    def _wvals(self, p):
        if self.family != "p0-decaying":
            return np.zeros(np.asarray(p).shape[:-1])
        return self.decay_field.value(p)

    def _wgrad(self, p):
        if self.family != "p0-decaying":
            return np.zeros(np.asarray(p).shape)
        return self.decay_field.gradient(p)

    def _whess(self, p):
        if self.family != "p0-decaying":
            return np.zeros(np.asarray(p).shape + (2,))
        return self.decay_field.hessian(p)

    def _decay_jet(self, p0: float):
        """(g, g', g'') for g(p0) = (1 + p0^2)^(-alpha/2); zero if instantaneous."""
        if self.family != "p0-decaying":
            return 0.0, 0.0, 0.0
        a = self.alpha
        u = 1.0 + p0**2
        g = u ** (-0.5 * a)
        g1 = -a * p0 * u ** (-0.5 * a - 1.0)
        g2 = -a * u ** (-0.5 * a - 1.0) + a * (a + 2.0) * p0**2 * u ** (-0.5 * a - 2.0)
        return g, g1, g2


@dataclass(frozen=True)
class InteractionReport:
    norm_c2: float
    norm_bound_ok: bool
    frequency_symmetry_ok: bool
    momentum_symmetry_ok: bool
    decay_ok: bool
    fitted_alpha: float | None
    verdict: bool

    def as_dict(self):
        return {
            "norm_c2": self.norm_c2,
            "condition_i_norm_bound": self.norm_bound_ok,
            "condition_ii_frequency_symmetry": self.frequency_symmetry_ok,
            "condition_iii_momentum_symmetry": self.momentum_symmetry_ok,
            "condition_iv_decay": self.decay_ok,
            "fitted_alpha": self.fitted_alpha,
            "verdict": self.verdict,
        }


def check_interaction(v: InteractionModel, n_grid: int = 64, seed: int = 0) -> InteractionReport:
    """Membership report for the interaction class, one entry per condition.

    Condition (iv) is fitted from |p0| in {10, 100, 1000}: the log-log slope
    of sup_p |v^ - v~| must be a positive power.  Instantaneous families pass
    vacuously with v~ = v^.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-np.pi, np.pi, size=(256, 2))
    norm = v.c2_norm(n_grid=n_grid)
    norm_ok = norm <= 1.0 + 1e-12

    p0s = np.array([0.3, 1.7, 4.0])
    freq_ok = True
    for p0 in p0s:
        a = v.full(p0, pts)
        b = v.full(-p0, pts)  # real families: conjugate == value
        freq_ok &= bool(np.max(np.abs(a - b)) < 1e-10)

    mom_ok = True
    for p0 in (0.0, 1.3):
        a = v.full(p0, pts)
        b = v.full(p0, -pts)
        mom_ok &= bool(np.max(np.abs(a - b)) < 1e-10)

    if v.is_instantaneous:
        decay_ok, fitted = True, None
    else:
        p0_lad = np.array([10.0, 100.0, 1000.0])
        sups = np.array(
            [float(np.max(np.abs(v.full(p0, pts) - v.spatial(pts)))) for p0 in p0_lad]
        )
        if np.any(sups <= 0):
            decay_ok, fitted = True, None
        else:
            slope = np.polyfit(np.log(p0_lad), np.log(sups), 1)[0]
            fitted = float(-slope)
            decay_ok = fitted > 0.05
    return InteractionReport(
        norm_c2=float(norm),
        norm_bound_ok=bool(norm_ok),
        frequency_symmetry_ok=bool(freq_ok),
        momentum_symmetry_ok=bool(mom_ok),
        decay_ok=bool(decay_ok),
        fitted_alpha=fitted,
        verdict=bool(norm_ok and freq_ok and mom_ok and decay_ok),
    )
