"""The 2d Brillouin torus and its fundamental cells."""

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class BrillouinTorus:
    """Momentum torus R^2 / (2pi Z)^2 with cells F = (-pi,pi)^2, F_2 = F/2.

    Only the square dual lattice 2*pi*I is supported; ``basis`` is kept as a
    stub so non-square lattices stay representable in configuration files.
    """

    dimension: int = 2
    basis: tuple = ((TWO_PI, 0.0), (0.0, TWO_PI))

    def __post_init__(self):
        if self.dimension != 2:
            raise ValueError("only d = 2 is implemented")
        b = np.asarray(self.basis)
        if not np.allclose(b, TWO_PI * np.eye(2)):
            raise ValueError("only the square dual lattice 2*pi*I is supported")

    @property
    def cell_halfwidth(self) -> float:
        return np.pi

    @property
    def half_cell_halfwidth(self) -> float:
        return np.pi / 2.0

    def wrap(self, p):
        """Map momenta to the fundamental cell [-pi, pi)^2, shape (..., 2)."""
        p = np.asarray(p, dtype=float)
        return (p + np.pi) % TWO_PI - np.pi

    def in_half_cell(self, p):
        """True where wrap(p) lies in the open half cell F_2."""
        w = self.wrap(p)
        return np.all(np.abs(w) < np.pi / 2.0, axis=-1)

    def distance_to_half_cell_boundary(self, p):
        """Signed distance from wrap(p) to the boundary of F_2 (>0 inside)."""
        w = self.wrap(p)
        return np.min(np.pi / 2.0 - np.abs(w), axis=-1)

    def grid(self, n: int):
        """Uniform n x n grid on the torus, nodes at -pi + 2*pi*k/n."""
        axis = -np.pi + TWO_PI * np.arange(n) / n
        return axis, np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, exp(-1/t)-type blend."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", under="ignore", invalid="ignore"):
        lo = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
        hi = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)
    return lo / (lo + hi)


def smoothstep_d1(t):
    """First derivative of :func:`smoothstep` (closed form)."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    ts = np.where(inside, t, 0.5)
    with np.errstate(over="ignore", under="ignore"):
        a = np.exp(-1.0 / ts)
        b = np.exp(-1.0 / (1.0 - ts))
        da = a / ts**2
        db = -b / (1.0 - ts) ** 2
        num = da * (a + b) - a * (da + db)
        out = num / (a + b) ** 2
    return np.where(inside, out, 0.0)


def smoothstep_d2(t, h: float = 1e-5):
    # Central difference of the closed-form d1; the second derivative is only
    # consumed by sup-norm estimates, never by root finding.
    return (smoothstep_d1(t + h) - smoothstep_d1(t - h)) / (2.0 * h)
