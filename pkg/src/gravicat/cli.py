"""``gravicat`` command-line entry point.

Exit codes: 0 every check passed, 1 a check failed (or the run could not
finish), 2 usage or configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time

from . import __version__
from .config import SUBCOMMANDS, KEY_INDEX, help_text, parse_config, parse_override
from .errors import (ConfigError, ConstructionError, ConvergenceError, DimensionError,
                     DivergenceError, GravicatError, ParameterError, ResolutionError)
from .experiments import (CatConfig, JanossyConfig, ScalingConfig, SolitonConfig, Measurement,
                          convergence_gate, estimate_delta_t, estimate_period, run_cat,
                          run_evolve, run_janossy, run_mixing_witness, run_ortho_time,
                          run_planck, run_scaling_suite, run_soliton, run_telegraph,
                          solve_soliton)
from .field import Grid, Params, WaveFunction
from .io import OutputLock, emit_outputs
from .potentials import PotentialField, StateDependentPotential

log = logging.getLogger("gravicat")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_DIVERGENCE = 0, 1, 2, 3

# flag name -> (section, key)
SHORTCUTS = {
    "M": ("physics", "M"), "alpha": ("physics", "alpha"), "dim": ("grid", "dim"),
    "n_points": ("grid", "n_points"), "box_length": ("grid", "box_length"),
    "kind": ("potential", "kind"), "softening": ("potential", "softening"),
    "dt": ("time", "dt"), "t_max": ("time", "t_max"), "ell": ("cat", "ell"),
    "seed": ("run", "seed"), "shots": ("run", "shots"), "output_dir": ("run", "output_dir"),
}


# ----------------------------------------------------------- config -> objects

def build_params(rc):
    M, alpha = rc["physics.M"], rc["physics.alpha"]
    if rc["physics.unit_system"] == "SI":
        return Params.si(M, alpha=alpha)
    return Params.dimensionless(M=M, alpha=alpha)


def build_grid(rc):
    return Grid(rc["grid.dim"], rc["grid.n_points"], rc["grid.box_length"])


def build_potential(rc):
    kind = rc["potential.kind"]
    if kind == "auto":
        kind = "newton3d" if rc["grid.dim"] == 3 else "newton1d_soft"
    return StateDependentPotential.from_kind(kind, rc["potential.softening"])


def soliton_config(rc):
    return SolitonConfig(build_params(rc), build_grid(rc), build_potential(rc),
                         tol=rc["solver.tol"], max_iter=rc["solver.max_iter"], dt=rc["time.dt"],
                         t_evolve=rc["time.t_max"])


def cat_config(rc):
    return CatConfig(build_params(rc), build_grid(rc), build_potential(rc), ell=rc["cat.ell"],
                     dt=rc["time.dt"], record_interval=rc["time.record_interval"],
                     threshold=rc["cat.threshold"], t_max_factor=rc["cat.t_max_factor"],
                     relax_tol=rc["solver.tol"], shots=rc["run.shots"], seed=rc["run.seed"])


def scaling_config(rc):
    return ScalingConfig(build_params(rc), build_grid(rc), build_potential(rc),
                         ells=rc["scaling.ells"], mass_factors=rc["scaling.mass_factors"],
                         periodic_ell=rc["scaling.periodic_ell"], mass_ell=rc["scaling.mass_ell"],
                         dt=rc["time.dt"], record_interval=rc["time.record_interval"],
                         threshold=rc["cat.threshold"], relax_tol=rc["solver.tol"])


def janossy_config(rc):
    return JanossyConfig(build_params(rc), build_grid(rc), dt=rc["time.dt"],
                         sigma0=rc["janossy.sigma0"], t_free=rc["janossy.t_free"],
                         periods=rc["janossy.periods"])


# ------------------------------------------------------------------ runners

def _soliton_snapshots(sol, unit_system):
    values = sol.potential.field(sol.state.density, sol.grid, sol.params)
    return [("soliton.wf", sol.state, unit_system),
            ("soliton_potential.pot", PotentialField(sol.grid, values), unit_system)]


def _cmd_soliton(rc):
    cfg = soliton_config(rc)
    rep = _maybe_refined(run_soliton, cfg, rc)
    return rep, _soliton_snapshots(rep.extra["soliton"], rc["physics.unit_system"])


def _cmd_evolve(rc):
    params, grid, pot = build_params(rc), build_grid(rc), build_potential(rc)
    if rc["run.initial"] == "gaussian":
        psi = WaveFunction.gaussian(grid, rc["run.sigma"])
    else:
        psi = solve_soliton(params, grid, pot, rc["solver.tol"], rc["solver.max_iter"]).state
    rep = run_evolve(psi, params, pot, rc["time.dt"], rc["time.t_max"], rc["time.record_interval"])
    us = rc["physics.unit_system"]
    return rep, [("initial.wf", psi, us), ("final.wf", rep.extra["final"], us)]


def _cat_runner(fn):
    def run(rc):
        return _maybe_refined(fn, cat_config(rc), rc), []
    return run


def _cmd_scaling(rc):
    return _maybe_refined(run_scaling_suite, scaling_config(rc), rc), []


def _cmd_janossy(rc):
    if rc["grid.dim"] != 1:
        raise ConfigError("janossy runs on a 1D grid (grid.dim = 1)")
    return _maybe_refined(run_janossy, janossy_config(rc), rc), []


def _cmd_planck(rc):
    if rc["physics.unit_system"] != "SI":
        raise ConfigError("planck needs physics.unit_system = SI")
    return run_planck(build_params(rc), ells=(rc["cat.ell"],), seed=rc["run.seed"]), []


def _maybe_refined(runner, cfg, rc):
    if not rc["run.refine"]:
        return runner(cfg)
    coarse, fine, changes = convergence_gate(runner, cfg)
    for name, (delta, allowed) in changes.items():
        coarse.measurements.append(Measurement(f"refinement_change_{name}", delta, "1", "le",
                                               allowed, allowed, "analytic"))
    coarse.extra["refined"] = fine
    return coarse


COMMANDS = {
    "soliton": _cmd_soliton,
    "evolve": _cmd_evolve,
    "cat": _cat_runner(run_cat),
    "ortho-time": _cat_runner(run_ortho_time),
    "telegraph": _cat_runner(run_telegraph),
    "witness": _cat_runner(run_mixing_witness),
    "planck": _cmd_planck,
    "janossy": _cmd_janossy,
    "scaling": _cmd_scaling,
}


# ------------------------------------------------------------------ dry run

def estimate_cost(rc):
    """``(bytes, steps)``: rough peak memory and number of time steps of a run."""
    dim, n = rc["grid.dim"], rc["grid.n_points"]
    cells = n**dim
    field_bytes = 3 * 8 * (2 * n) ** dim
    sub = rc.subcommand
    dt = rc["time.dt"]
    states = {"cat": 3, "telegraph": 3, "witness": 3}.get(sub, 1)
    steps = 0
    if sub in ("soliton", "evolve"):
        steps = math.ceil(rc["time.t_max"] / dt)
    elif sub in ("cat", "telegraph", "witness", "ortho-time"):
        params = build_params(rc)
        ell = rc["cat.ell"]
        if sub == "ortho-time":
            steps = math.ceil(0.6 * estimate_period(params, ell) / dt)
        else:
            dt_f = estimate_delta_t(params, ell).formula
            steps = 2 * states * math.ceil(rc["cat.t_max_factor"] * dt_f / dt)
    elif sub == "scaling":
        params = build_params(rc)
        steps = sum(math.ceil(0.6 * estimate_period(params, ell) / dt)
                    for ell in rc["scaling.ells"])
        steps += math.ceil(estimate_period(params, rc["scaling.periodic_ell"]) / dt)
        for f in rc["scaling.mass_factors"]:
            steps += math.ceil(4 * estimate_delta_t(params.with_mass(params.M * f),
                                                    rc["scaling.mass_ell"]).formula / dt)
    elif sub == "janossy":
        omega = rc["physics.alpha"] / math.sqrt(rc["physics.M"])
        steps = math.ceil((rc["janossy.t_free"] + rc["janossy.periods"] * 2 * math.pi / omega)
                          / dt)
    if rc["run.refine"]:
        steps *= 3  # fine run has twice the steps
    return 16 * cells * (2 * states + 4) + field_bytes, steps


# --------------------------------------------------------------------- main

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="INI configuration file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any configuration key (repeatable)")
    for flag, path in SHORTCUTS.items():
        key = KEY_INDEX[path]
        names = ["--" + flag.replace("_", "-")] + (["-o"] if flag == "output_dir" else [])
        common.add_argument(*names, dest=flag, default=None, help=f"{key.path}: {key.doc}")
    common.add_argument("--dry-run", action="store_true",
                        help="print the resolved configuration and cost estimate, then exit")
    common.add_argument("--gnuplot", action="store_true", help="also write plot.gp")
    common.add_argument("--refine", action="store_true",
                        help="repeat at doubled grid and halved dt; fail on large changes")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(
        prog="gravicat", description="Schrodinger-Newton laboratory",
        epilog="configuration keys (defaults):\n" + help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"gravicat {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], epilog="configuration keys (defaults):\n"
                       + help_text(), formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def resolve(args):
    text, origin = None, "<config>"
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
        origin = args.config
    overrides = []
    for item in args.set:
        path, value = parse_override(item)
        overrides.append((path, value, f"--set {item}"))
    for flag, path in SHORTCUTS.items():
        value = getattr(args, flag)
        if value is not None:
            overrides.append((path, value, "--" + flag.replace("_", "-")))
    if args.gnuplot:
        overrides.append((("run", "gnuplot"), "true", "--gnuplot"))
    if args.refine:
        overrides.append((("run", "refine"), "true", "--refine"))
    return parse_config(args.subcommand, text, overrides, origin)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = resolve(args)
        if args.dry_run:
            memory, steps = estimate_cost(rc)
            print(rc.to_ini(), end="")
            print(f"# subcommand: {rc.subcommand}")
            print(f"# estimated peak memory: {memory / 2**20:.1f} MiB")
            print(f"# estimated time steps: {steps}")
            return EXIT_PASS
        out = rc["run.output_dir"]
        with OutputLock(out):
            start = time.perf_counter()
            report, snapshots = COMMANDS[rc.subcommand](rc)
            wall = time.perf_counter() - start
            emit_outputs(report, out, rc, snapshots, gnuplot=rc["run.gnuplot"], wall_time=wall)
    except DivergenceError as exc:
        print(f"gravicat: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ParameterError, DimensionError, ConstructionError,
            ResolutionError) as exc:
        print(f"gravicat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, GravicatError, OSError) as exc:
        print(f"gravicat: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for m in report.measurements:
        verdict = {True: "PASS", False: "FAIL", None: "    "}[m.passed]
        print(f"{verdict} {m.name} = {m.value:.6g} {m.unit}")
    print(f"{report.experiment}: {'PASS' if report.passed else 'FAIL'} ({wall:.1f} s) -> {out}")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
