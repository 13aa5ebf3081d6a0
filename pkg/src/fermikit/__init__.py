"""Numerical toolkit for strictly convex Fermi surfaces in d = 2.

The package traces Fermi surfaces in polar coordinates on the Brillouin
torus, verifies dispersion-class membership, measures C^k / radial norms,
evaluates first-order counterterms (full and scale-resolved), solves the
counterterm equation e + K(e) = E by iteration, and provides the
two-legged-graph combinatorics used by the multiscale bookkeeping.
"""

from fermikit.torus import BrillouinTorus
from fermikit.dispersion import (
    Dispersion,
    EllipseLevelSet,
    GridSampled,
    RayOffsetDispersion,
    SumDispersion,
    TightBinding,
    TrigField,
    WrappedQuadratic,
    make_dispersion,
)
from fermikit.interaction import InteractionModel, check_interaction
from fermikit.geometry import (
    ClassParams,
    ClassReport,
    ConvexCenterReport,
    FermiRadiusTable,
    RadialConstants,
    check_class,
    convex_center,
    curvature,
    derive_radial_constants,
    fermi_radius,
    offset_surface,
    trace_surface,
)
from fermikit.fields import (
    GridField,
    NormReport,
    ck_norms,
    localize,
    radial_norm,
    surface_coordinates,
)
from fermikit.counterterm import (
    CountertermModel,
    FockCounterterm,
    ScaleCutoff,
    ScaleLedger,
    ScaleResolvedFock,
    SyntheticCounterterm,
    fock_counterterm,
    lipschitz_probe,
    scale_ledger,
    shell_volume,
    single_scale_counterterm,
    synthetic_counterterm,
    volume_improvement,
)
from fermikit.solver import (
    IterationTrace,
    RateConstants,
    SolverConfig,
    continuity_probe,
    invert,
    rate_check,
    uniqueness_probe,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
