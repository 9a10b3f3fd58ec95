"""Command-line entry points.

Three subcommands: `run` simulates a Monte Carlo campaign and writes the
indicator table, per-path summaries, and mesh snapshots; `validate`
executes one of the built-in validation suites; `sweep` repeats a run
over the spatial/temporal tolerance levels for side-by-side comparison.

Exit codes: 0 success, 1 run or validation failure, 2 malformed
configuration or arguments.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, RunConfig
from .driver import PathError, run_mc
from .io import write_run_outputs
from .validate import SUITES, run_suite


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="JSON config file; defaults fill anything omitted")
    p.add_argument("--paths", type=int, metavar="N", help="number of sample paths")
    p.add_argument("--seed", type=int, metavar="S", help="base RNG seed")
    p.add_argument("--tol-level", type=int, metavar="K", help="tolerance level (halves both tolerances per level)")
    p.add_argument("--scheme", choices=("si", "fix3", "fix"), help="linearization scheme")
    p.add_argument("--no-adapt", action="store_true", help="disable mesh and step adaptivity")
    p.add_argument("--out", metavar="DIR", help="output directory")


def _build_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_json(args.config)
    else:
        cfg = RunConfig()
    updates = {}
    if args.paths is not None:
        updates["paths"] = args.paths
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.tol_level is not None:
        updates["tol_level"] = args.tol_level
        updates["tol_h"] = None
        updates["tol_tau"] = None
    if args.scheme is not None:
        updates["scheme"] = args.scheme
    if args.no_adapt:
        updates["adaptive"] = False
    if args.out is not None:
        updates["out_dir"] = args.out
    return cfg.replace(**updates) if updates else cfg


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    result = run_mc(config)
    written = write_run_outputs(config.out_dir, result)
    if args.figures:
        code = _render_figures(written["indicators"], config.out_dir)
        if code != 0:
            return code
    for p in result.summary["paths"]:
        print(
            f"path {p['path_id']}: {p['steps']} steps, final ndof {p['final_ndof']}, "
            f"tau in [{p['min_tau']:.2e}, {p['max_tau']:.2e}]"
        )
    ens = result.summary["ensemble"]
    avg = ens["time_averages"]
    print(
        f"ensemble time averages: eta_time2 {avg['eta_time2']:.4e}, "
        f"eta_h {avg['eta_h']:.4e}, eta_lin {avg['eta_lin']:.4e}"
    )
    print(f"wrote {written['indicators']} and {written['summary']}")
    if "snapshots" in written:
        print(f"wrote {len(written['snapshots'])} snapshots under {config.out_dir}/snapshots")
    return 0


def _render_figures(csv_path: str, out_dir: str) -> int:
    try:
        from stvfigures import render_all
    except ImportError:
        print(
            "error: --figures needs the stvfigures package (pip install ./figures)",
            file=sys.stderr,
        )
        return 2
    fig_dir = os.path.join(out_dir, "figures")
    for path in render_all(csv_path, fig_dir):
        print(f"wrote {path}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    config = _build_config(args)
    result = run_suite(args.suite, config)
    for line in result.lines:
        print(line)
    print(f"suite {result.name}: {'PASS' if result.passed else 'FAIL'}")
    return 0 if result.passed else 1


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _build_config(args)
    base_out = config.out_dir
    final_dofs = []
    for level in args.levels:
        cfg = config.replace(tol_level=level, tol_h=None, tol_tau=None,
                             out_dir=os.path.join(base_out, f"tol{level}"))
        result = run_mc(cfg)
        write_run_outputs(cfg.out_dir, result, snapshots=False)
        dof = result.summary["ensemble"]["mean_final_ndof"]
        final_dofs.append(dof)
        print(f"level {level}: mean final ndof {dof:.0f}, "
              f"mean steps {result.summary['ensemble']['mean_steps']:.0f}")
    print(f"wrote {len(args.levels)} indicator tables under {base_out}/tol*/")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stvf",
        description="Adaptive finite element solver for stochastic total variation flow.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    run_p = sub.add_parser("run", help="simulate sample paths and write indicator logs")
    _add_common(run_p)
    run_p.add_argument("--figures", action="store_true",
                       help="also render indicator figures (needs the stvfigures package)")

    val_p = sub.add_parser("validate", help="run a built-in validation suite")
    val_p.add_argument("suite", choices=sorted(SUITES))
    _add_common(val_p)

    sweep_p = sub.add_parser("sweep", help="repeat a run over tolerance levels")
    _add_common(sweep_p)
    sweep_p.add_argument("--levels", type=int, nargs="+", default=[0, 1, 2],
                         metavar="K", help="tolerance levels to run (default 0 1 2)")

    args = parser.parse_args(argv)
    try:
        if args.cmd == "run":
            return _cmd_run(args)
        if args.cmd == "validate":
            return _cmd_validate(args)
        return _cmd_sweep(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
