"""Batch command-line front-end.

Commands: check-class, trace-surface, invert, scale-ledger,
lipschitz-probe, continuity-probe, volume-improvement, graph-verify.
Outputs are CSV/JSON with 17-significant-digit floats; figures are rendered
next to the data when --plot is passed.  Exit codes: 0 ok, 1 check failed,
2 configuration error, 3 geometry error, 4 divergence.
"""

import argparse
import json
import os
import sys

import numpy as np

from fermikit.configio import (
    ConfigError,
    class_params_from_config,
    cutoff_from_config,
    dispersion_from_config,
    interaction_from_config,
    load_config,
    solver_config_from_config,
    trace_options,
)
from fermikit.counterterm import (
    ScaleResolvedFock,
    scale_ledger,
    lipschitz_probe,
    shell_volume_slope,
    volume_improvement,
)
from fermikit.dispersion import SumDispersion, TrigField
from fermikit.fields import sample_polar
from fermikit.geometry import GeometryError, check_class, trace_surface
from fermikit.graphs import (
    enumerate_two_legged_1pi,
    is_one_pi,
    overlapping_loops,
    spanning_tree_count,
    spanning_trees,
    tree_path,
)
from fermikit.rootfind import RayRootError
from fermikit.solver import DivergenceError, SolverError, continuity_probe, invert

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_GEOMETRY = 3
EXIT_DIVERGENCE = 4


def _write_json(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_check_class(args) -> int:
    cfg = load_config(args.config)
    e = dispersion_from_config(cfg)
    params = class_params_from_config(cfg)
    mtheta, bracket = trace_options(cfg)
    out = _outdir(args)
    table = trace_surface(e, mtheta=mtheta, bracket=bracket)
    report = check_class(e, params, mtheta=mtheta, table=table)
    _write_json(report.as_dict(), os.path.join(out, "class_report.json"))
    if args.plot:
        from fermikit.plots import plot_surface

        plot_surface(table, os.path.join(out, "surface.png"))
    return EXIT_OK if report.verdict else EXIT_CHECK_FAILED


def cmd_trace_surface(args) -> int:
    cfg = load_config(args.config)
    e = dispersion_from_config(cfg)
    mtheta, bracket = trace_options(cfg)
    out = _outdir(args)
    table = trace_surface(e, mtheta=mtheta, bracket=bracket)
    table.save_csv(os.path.join(out, "surface.csv"))
    try:
        from fermikit.geometry import convex_center

        _write_json(convex_center(table, e).as_dict(), os.path.join(out, "convex_center.json"))
    except GeometryError:
        pass  # non-convex surfaces have no convex-center report
    if args.plot:
        from fermikit.plots import plot_surface

        plot_surface(table, os.path.join(out, "surface.png"))
    return EXIT_OK


def cmd_invert(args) -> int:
    cfg = load_config(args.config)
    e = dispersion_from_config(cfg)
    config = solver_config_from_config(cfg)
    out = _outdir(args)
    try:
        solution, trace = invert(e, config)
    except DivergenceError as err:
        if err.trace is not None:
            err.trace.to_csv(os.path.join(out, "trace.csv"))
            _write_json(err.trace.summary(), os.path.join(out, "summary.json"))
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    trace.to_csv(os.path.join(out, "trace.csv"))
    _write_json(trace.summary(), os.path.join(out, "summary.json"))
    table = trace_surface(e, mtheta=config.mtheta)
    from fermikit.solver import _solver_grid

    r_axis, theta = _solver_grid(e, table, config)
    sol_field = sample_polar(solution, r_axis, theta, center=e.center)
    sol_field.save_csv(os.path.join(out, "solution.csv"))
    if args.plot:
        from fermikit.plots import plot_trace

        plot_trace(trace, os.path.join(out, "trace.png"))
    return EXIT_OK


def cmd_scale_ledger(args) -> int:
    cfg = load_config(args.config)
    e = dispersion_from_config(cfg)
    v = interaction_from_config(cfg)
    lam = cfg["solver"].getfloat("lambda", 0.01) if "solver" in cfg else 0.01
    cutoff = cutoff_from_config(cfg)
    j_lo, j_hi = -10, -1
    if "ledger" in cfg:
        j_lo = cfg["ledger"].getint("j_lo", -10)
        j_hi = cfg["ledger"].getint("j_hi", -1)
    out = _outdir(args)
    model = ScaleResolvedFock(v=v, lam=lam, cutoff=cutoff)
    mtheta, bracket = trace_options(cfg)
    table = trace_surface(e, mtheta=mtheta, bracket=bracket)
    ledger = scale_ledger(model, e, range(j_lo, j_hi + 1), table=table)
    _write_json(ledger.as_dict(), os.path.join(out, "ledger.json"))
    with open(os.path.join(out, "ledger.csv"), "w") as fh:
        fh.write("j,norm0,norm1,norm2\n")
        for j, n0, n1, n2 in zip(ledger.scales, ledger.norm0, ledger.norm1, ledger.norm2):
            fh.write(f"{j},{n0:.17g},{n1:.17g},{n2:.17g}\n")
    if args.plot:
        from fermikit.plots import plot_ledger

        plot_ledger(ledger, os.path.join(out, "ledger.png"))
    return EXIT_OK


def _seeded_bumps(rng, count, amp_lo, amp_hi):
    """Random low-order symmetric bumps with log-spaced amplitudes."""
    amps = np.exp(np.linspace(np.log(amp_lo), np.log(amp_hi), count))
    waves = [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (0, 0)]
    bumps = []
    for amp in amps:
        weights = rng.normal(size=len(waves))
        weights /= np.max(np.abs(weights))
        terms = [(kx, ky, float(w), "cos") for (kx, ky), w in zip(waves, weights)]
        bumps.append(TrigField(terms).scaled(float(amp)))
    return bumps


def cmd_lipschitz_probe(args) -> int:
    cfg = load_config(args.config)
    e = dispersion_from_config(cfg)
    config = solver_config_from_config(cfg)
    sec = cfg["probe"] if "probe" in cfg else {}
    count = int(sec.get("pairs", 12)) if hasattr(sec, "get") else 12
    amp_lo = float(sec.get("amp_lo", 1e-4)) if hasattr(sec, "get") else 1e-4
    amp_hi = float(sec.get("amp_hi", 1e-1)) if hasattr(sec, "get") else 1e-1
    rng = np.random.default_rng(args.seed)
    out = _outdir(args)
    model = config.model.with_coupling(config.lam)
    rows = []
    for bump in _seeded_bumps(rng, count, amp_lo, amp_hi):
        e1 = SumDispersion(e, bump)
        rep = lipschitz_probe(model, e, e1, mtheta=config.mtheta)
        rows.append(rep.as_dict())
    _write_json({"pairs": rows, "lambda": config.lam}, os.path.join(out, "lipschitz.json"))
    with open(os.path.join(out, "lipschitz.csv"), "w") as fh:
        fh.write("de0,dk0,quotient0,quotient1,quotient2\n")
        for r in rows:
            fh.write(
                f"{r['de_norms'][0]:.17g},{r['dk_norms'][0]:.17g},"
                f"{r['quotient0']:.17g},{r['quotient1']:.17g},{r['quotient2']:.17g}\n"
            )
    return EXIT_OK


def cmd_continuity_probe(args) -> int:
    cfg = load_config(args.config)
    e = dispersion_from_config(cfg)
    v = interaction_from_config(cfg)
    config = solver_config_from_config(cfg)
    sec = cfg["continuity"] if "continuity" in cfg else {}
    amp = float(sec.get("bump_amp", 1e-3)) if hasattr(sec, "get") else 1e-3
    v_scale = float(sec.get("v_scale", 1.0)) if hasattr(sec, "get") else 1.0
    bump = TrigField([(1, 0, 0.6, "cos"), (0, 1, 0.4, "cos")]).scaled(amp)
    e2 = SumDispersion(e, bump)
    v2 = v.scaled(v_scale)
    out = _outdir(args)
    report = continuity_probe(e, e2, v, v2, config)
    _write_json(report.as_dict(), os.path.join(out, "continuity.json"))
    return EXIT_OK


def cmd_volume_improvement(args) -> int:
    cfg = load_config(args.config)
    e = dispersion_from_config(cfg)
    sec = cfg["volume"] if "volume" in cfg else {}

    def get(key, default):
        return sec.get(key, default) if hasattr(sec, "get") else default

    eps1 = float(get("eps1", 0.05))
    eps2 = float(get("eps2", 0.05))
    ladder = [float(x) for x in str(get("eps3", "0.4 0.2 0.1 0.05")).split()]
    samples = int(float(get("samples", 1e6)))
    signs = tuple(int(x) for x in str(get("signs", "1 1")).split())
    qshift = tuple(float(x) for x in str(get("q", "0 0")).split())
    out = _outdir(args)
    table = trace_surface(e, mtheta=512)
    results = []
    for i, eps3 in enumerate(ladder):
        est = volume_improvement(
            e, eps1, eps2, eps3, q=qshift, signs=signs, samples=samples,
            seed=args.seed + i, table=table,
        )
        results.append({"eps3": eps3, **est.as_dict()})
    vals = np.array([r["value"] for r in results])
    slope = float(np.polyfit(np.log(np.array(ladder)), np.log(vals), 1)[0])
    shell_slope = shell_volume_slope(e, ladder, table=table)
    payload = {
        "eps1": eps1,
        "eps2": eps2,
        "estimates": results,
        "fitted_exponent_2gamma": slope,
        "shell_volume_slope": shell_slope,
        "seed": args.seed,
    }
    _write_json(payload, os.path.join(out, "volume.json"))
    if args.plot:
        from fermikit.plots import plot_volume

        plot_volume(
            ladder, vals, [r["std_error"] for r in results],
            os.path.join(out, "volume.png"), slope=slope,
        )
    return EXIT_OK


def cmd_graph_verify(args) -> int:
    if args.max_vertices > 4:
        print("graph-verify supports max-vertices <= 4", file=sys.stderr)
        return EXIT_CONFIG
    out = _outdir(args)
    corpus = enumerate_two_legged_1pi(args.max_vertices)
    passed = 0
    failures = []
    for idx, g in enumerate(corpus):
        ok = True
        trees = spanning_trees(g)
        if len(trees) != spanning_tree_count(g):
            ok = False
            failures.append({"graph": idx, "reason": "matrix-tree mismatch"})
        if not is_one_pi(g):
            ok = False
            failures.append({"graph": idx, "reason": "not 1PI"})
        ext = g.external_vertices()
        if len(ext) == 2:
            for tree in trees:
                for line in tree_path(g, tree, ext[0], ext[1]):
                    try:
                        overlapping_loops(g, tree, line)
                    except Exception as err:  # noqa: BLE001
                        ok = False
                        failures.append(
                            {"graph": idx, "tree": list(tree), "line": line, "reason": str(err)}
                        )
        if ok:
            passed += 1
    payload = {
        "max_vertices": args.max_vertices,
        "corpus_size": len(corpus),
        "lemma_pass_count": passed,
        "failures": failures,
    }
    _write_json(payload, os.path.join(out, "graph_report.json"))
    return EXIT_OK if passed == len(corpus) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fermikit",
        description="Fermi-surface tracing, class checks, counterterm inversion and graph audits",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "check-class": cmd_check_class,
        "trace-surface": cmd_trace_surface,
        "invert": cmd_invert,
        "scale-ledger": cmd_scale_ledger,
        "lipschitz-probe": cmd_lipschitz_probe,
        "continuity-probe": cmd_continuity_probe,
        "volume-improvement": cmd_volume_improvement,
        "graph-verify": cmd_graph_verify,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        if name != "graph-verify":
            p.add_argument("--config", required=True, help="key=value configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--plot", action="store_true", help="render figures beside the data")
        if name == "graph-verify":
            p.add_argument("--max-vertices", type=int, default=4, dest="max_vertices")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, RayRootError) as err:
        print(f"geometry error: {err}", file=sys.stderr)
        return EXIT_GEOMETRY
    except DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except SolverError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
