"""Plain-text key=value configuration (INI sections) for the CLI.

Sections: [dispersion], [interaction], [class], [solver], [trace],
[cutoff], [ledger], [probe], [continuity], [volume].  Trig-polynomial
fields are written as comma-separated terms "kind kx ky amplitude".
"""

import configparser
import os

import numpy as np

from fermikit.counterterm import (
    FockCounterterm,
    QuadratureSettings,
    ScaleCutoff,
    ScaleResolvedFock,
    SyntheticCounterterm,
)
from fermikit.dispersion import TrigField, make_dispersion
from fermikit.geometry import ClassParams
from fermikit.interaction import InteractionModel
from fermikit.solver import SolverConfig


class ConfigError(RuntimeError):
    pass


def load_config(path) -> configparser.ConfigParser:
    if not os.path.exists(path):
        raise ConfigError(f"configuration file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep key case: g0 and G0 are distinct
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (configparser.Error, OSError) as err:
        raise ConfigError(f"cannot parse configuration: {err}") from err
    return parser


def _floats(text: str):
    return [float(x) for x in text.replace(",", " ").split()]


def parse_trig_terms(text: str) -> TrigField:
    terms = []
    for chunk in text.split(","):
        parts = chunk.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise ConfigError(f"trig term needs 'kind kx ky amp', got {chunk!r}")
        kind, kx, ky, amp = parts
        if kind not in ("cos", "sin"):
            raise ConfigError(f"trig term kind must be cos or sin, got {kind!r}")
        terms.append((int(kx), int(ky), float(amp), kind))
    if not terms:
        raise ConfigError("empty trig term list")
    return TrigField(terms)


def dispersion_from_config(cfg) -> object:
    if "dispersion" not in cfg:
        raise ConfigError("missing [dispersion] section")
    sec = cfg["dispersion"]
    family = sec.get("family", "").strip()
    try:
        if family == "wrapped-quadratic":
            params = {"mu": sec.getfloat("mu", 0.5)}
            if "center" in sec:
                params["center"] = tuple(_floats(sec["center"]))
            return make_dispersion(family, params)
        if family == "tight-binding":
            return make_dispersion(family, {"t": sec.getfloat("t", 1.0), "mu": sec.getfloat("mu", 0.0)})
        if family == "ellipse-level-set":
            return make_dispersion(family, {"a": sec.getfloat("a", 1.2), "b": sec.getfloat("b", 0.8)})
        if family == "grid-sampled":
            return make_dispersion(family, {"path": sec.get("path")})
    except (ValueError, TypeError) as err:
        raise ConfigError(f"bad dispersion parameters: {err}") from err
    raise ConfigError(f"unknown dispersion family {family!r}")


def interaction_from_config(cfg) -> InteractionModel:
    if "interaction" not in cfg:
        raise ConfigError("missing [interaction] section")
    sec = cfg["interaction"]
    family = sec.get("family", "constant").strip()
    try:
        if family == "constant":
            return InteractionModel(family="constant", constant=sec.getfloat("c", 0.5))
        if family == "smooth":
            return InteractionModel(family="smooth", spatial_field=parse_trig_terms(sec["terms"]))
        if family == "p0-decaying":
            return InteractionModel(
                family="p0-decaying",
                spatial_field=parse_trig_terms(sec["terms"]),
                decay_field=parse_trig_terms(sec["decay_terms"]),
                alpha=sec.getfloat("alpha", 1.0),
            )
    except (KeyError, ValueError) as err:
        raise ConfigError(f"bad interaction parameters: {err}") from err
    raise ConfigError(f"unknown interaction family {family!r}")


def class_params_from_config(cfg) -> ClassParams:
    if "class" not in cfg:
        raise ConfigError("missing [class] section")
    sec = cfg["class"]
    try:
        return ClassParams(
            delta0=sec.getfloat("delta0"),
            g0=sec.getfloat("g0"),
            G0=sec.getfloat("G0"),
            omega0=sec.getfloat("omega0"),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad class parameters: {err}") from err


def cutoff_from_config(cfg) -> ScaleCutoff:
    sec = cfg["cutoff"] if "cutoff" in cfg else {}
    get = sec.get if hasattr(sec, "get") else (lambda *_: None)
    try:
        return ScaleCutoff(
            M=float(get("m", None) or get("M", None) or 2.0),
            j_min=int(get("j_min", None) or -12),
            j_max=int(get("j_max", None) or 0),
        )
    except ValueError as err:
        raise ConfigError(f"bad cutoff parameters: {err}") from err


def quadrature_from_config(cfg) -> QuadratureSettings:
    if "quadrature" not in cfg:
        return QuadratureSettings()
    sec = cfg["quadrature"]
    try:
        return QuadratureSettings(
            sea_radial_nodes=sec.getint("sea_radial_nodes", 32),
            shell_x_nodes=sec.getint("shell_x_nodes", 48),
            freq_nodes=sec.getint("freq_nodes", 48),
            target_chunk=sec.getint("target_chunk", 64),
            abs_tol=sec.getfloat("abs_tol", 1e-8),
        )
    except ValueError as err:
        raise ConfigError(f"bad quadrature parameters: {err}") from err


def solver_config_from_config(cfg, model=None) -> SolverConfig:
    if "solver" not in cfg:
        raise ConfigError("missing [solver] section")
    sec = cfg["solver"]
    lam = sec.getfloat("lambda", 0.0)
    if model is None:
        kind = sec.get("model", "fock").strip()
        quad = quadrature_from_config(cfg)
        if kind == "fock":
            model = FockCounterterm(v=interaction_from_config(cfg), lam=lam, quad=quad)
        elif kind == "synthetic":
            shape = (
                parse_trig_terms(sec["shape_terms"])
                if "shape_terms" in sec
                else TrigField([(0, 0, 1.0, "cos")])
            )
            model = SyntheticCounterterm(lam=lam, shape=shape)
        elif kind == "scale-resolved":
            model = ScaleResolvedFock(
                v=interaction_from_config(cfg), lam=lam, cutoff=cutoff_from_config(cfg),
                quad=quad,
            )
        else:
            raise ConfigError(f"unknown counterterm model {kind!r}")
    try:
        return SolverConfig(
            lam=lam,
            model=model,
            class_params=class_params_from_config(cfg),
            eps_ball=sec.getfloat("eps_ball", 0.05),
            radial_ball=sec.getfloat("radial_ball", 1.0),
            radial_guard=sec.getfloat("radial_guard", 0.9),
            n_max=sec.getint("n_max", 60),
            tol=sec.getfloat("tol", 1e-10),
            mtheta=sec.getint("mtheta", 256),
            nr=sec.getint("nr", 17),
            g3_max=sec.getfloat("g3_max", 50.0),
            check_class_each_step=sec.getboolean("check_class_each_step", True),
        )
    except ValueError as err:
        raise ConfigError(f"bad solver parameters: {err}") from err


def trace_options(cfg):
    mtheta = 256
    bracket = None
    if "trace" in cfg:
        sec = cfg["trace"]
        mtheta = sec.getint("mtheta", 256)
        if "bracket_lo" in sec or "bracket_hi" in sec:
            bracket = (
                sec.getfloat("bracket_lo", 0.05),
                sec.getfloat("bracket_hi", np.pi / 2 - 0.01),
            )
    return mtheta, bracket
