"""Config-driven experiment runner.

Every subcommand reads a line-oriented ``key = value`` config with
``[section]`` headers, validates it into a full in-memory plan before any
solve, runs the corresponding module pipeline, and writes CSV artifacts plus
a manifest with content checksums into the output directory.

Exit codes: 0 success, 2 config parse error (including unknown keys),
3 validation error, 4 numerical failure.
"""

import argparse
import configparser
import csv
import datetime
import hashlib
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .dirichlet import DirichletProblem, SolverError, solve, write_solution_summary
from .fracops import div_raw, grad_classical, grad_raw, table_for
from .heat import (HeatProblem, heat_homog_experiment, solve_heat,
                   write_heat_report_csv, write_trajectory_csv)
from .homog import (bump_probes, checkerboard_sequence_2d, kernel_family_1d,
                    periodic_sequence_1d, predicted_limit_1d,
                    run_homog_experiment, write_report_csv, write_verdicts_csv,
                    ds_metric, global_metric)
from .lattice import (Grid, ScalarField, ValidationError, ball_mask,
                      identity_coefficient, inner, interval_mask,
                      scalar_coefficient, validate_coefficient,
                      write_field_csv)
from .schur import (build_decomposition, canonical_gamma, membership_check,
                    schur_convergence_probe, write_probe_report_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4

COMMANDS = ("solve", "homog", "metric", "heat", "schur", "kernel",
            "validate", "ops-check")


class ConfigError(Exception):
    pass


_COEFF_KEYS = {"kind", "scale", "offset", "amplitude", "frequency",
               "alpha", "beta"}
_SECTION_KEYS = {
    "grid": {"dim", "l", "n"},
    "mask": {"kind", "a", "b", "center", "radius"},
    "problem": {"s", "tol", "max_iter"},
    "coefficient": _COEFF_KEYS,
    "coefficient_a": _COEFF_KEYS,
    "coefficient_b": _COEFF_KEYS,
    "sequence": {"kind", "offset", "amplitude", "alpha", "beta",
                 "value_a", "value_b"},
    "forcing": {"kind", "value"},
    "experiment": {"command", "n_list", "ds_terms", "n_terms", "n_bumps",
                   "rel_tol", "seed", "t", "dt", "shifts", "scheme", "mode",
                   "gamma_alpha", "gamma_beta"},
    "output": {"directory"},
}
_COMMAND_SECTIONS = {
    "solve": {"grid", "mask", "problem", "coefficient", "forcing",
              "experiment", "output"},
    "homog": {"grid", "mask", "problem", "sequence", "forcing", "experiment",
              "output"},
    "metric": {"grid", "mask", "problem", "coefficient_a", "coefficient_b",
               "experiment", "output"},
    "heat": {"grid", "mask", "problem", "sequence", "coefficient", "forcing",
             "experiment", "output"},
    "schur": {"grid", "mask", "problem", "sequence", "experiment", "output"},
    "kernel": {"grid", "mask", "problem", "experiment", "output"},
    "validate": {"grid", "coefficient", "experiment", "output"},
    "ops-check": {"grid", "problem", "experiment", "output"},
}


@dataclass
class ExperimentConfig:
    """Fully validated in-memory plan; built before any solve starts."""
    command: str
    grid: Grid
    out_dir: str
    seed: int
    threads: int
    s: float = 0.5
    tol: float = 1e-10
    mask: object = None
    coefficient: object = None
    coefficient_b: object = None
    sequence: object = None
    forcing: object = None
    n_list: tuple = ()
    ds_terms: int = 8
    n_terms: int = 16
    n_bumps: int = 8
    rel_tol: float = 0.05
    mode: str = "ds"
    T: float = 1.0
    dt: float = 1.0 / 64
    shifts: tuple = ()
    scheme: str = "implicit-euler"
    gamma: object = None


# ---------------------------------------------------------------------------
# parsing

def _read_ini(path):
    cp = configparser.ConfigParser(interpolation=None,
                                   inline_comment_prefixes=("#", ";"))
    try:
        loaded = cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")
    if not loaded:
        raise ConfigError(f"cannot read config file {path}")
    return cp


def _check_schema(cp, command):
    allowed = _COMMAND_SECTIONS[command]
    for section in cp.sections():
        if section not in allowed:
            raise ConfigError(
                f"unknown section [{section}] for command {command}")
        for key in cp[section]:
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")


def _require(cp, section, *keys):
    if section not in cp:
        raise ConfigError(f"missing required section [{section}]")
    for key in keys:
        if key not in cp[section]:
            raise ConfigError(f"missing key {key!r} in section [{section}]")


def _get_float(cp, section, key, default=None):
    if section not in cp or key not in cp[section]:
        if default is None:
            raise ConfigError(f"missing key {key!r} in section [{section}]")
        return default
    try:
        return float(cp[section][key])
    except ValueError:
        raise ConfigError(f"key {key!r} in [{section}] is not a number")


def _get_int(cp, section, key, default=None):
    if section not in cp or key not in cp[section]:
        if default is None:
            raise ConfigError(f"missing key {key!r} in section [{section}]")
        return default
    try:
        return int(cp[section][key])
    except ValueError:
        raise ConfigError(f"key {key!r} in [{section}] is not an integer")


def _get_str(cp, section, key, default=None):
    if section not in cp or key not in cp[section]:
        if default is None:
            raise ConfigError(f"missing key {key!r} in section [{section}]")
        return default
    return cp[section][key].strip()


def _get_floats(cp, section, key, default=None):
    raw = _get_str(cp, section, key, default="" if default is not None else None)
    if not raw:
        return tuple(default)
    try:
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"key {key!r} in [{section}] is not a number list")


def _get_ints(cp, section, key, default=None):
    vals = _get_floats(cp, section, key,
                       default=default if default is not None else None)
    out = []
    for v in vals:
        if v != int(v):
            raise ConfigError(f"key {key!r} in [{section}] must be integers")
        out.append(int(v))
    return tuple(out)


# ---------------------------------------------------------------------------
# plan builders

def _build_grid(cp):
    _require(cp, "grid", "dim", "l", "n")
    dim = _get_int(cp, "grid", "dim")
    return Grid(dim=dim, half_width=_get_float(cp, "grid", "l"),
                points_per_axis=_get_int(cp, "grid", "n"))


def _build_mask(cp, grid):
    _require(cp, "mask", "kind")
    kind = _get_str(cp, "mask", "kind")
    if kind == "interval":
        return interval_mask(grid, _get_float(cp, "mask", "a"),
                             _get_float(cp, "mask", "b"))
    if kind == "ball":
        center = _get_floats(cp, "mask", "center", default=(0.0,) * grid.dim)
        return ball_mask(grid, center, _get_float(cp, "mask", "radius"))
    raise ConfigError(f"unknown mask kind {kind!r}")


def _build_coefficient(cp, grid, section="coefficient"):
    _require(cp, section, "kind")
    kind = _get_str(cp, section, "kind")
    if kind == "identity":
        scale = _get_float(cp, section, "scale", default=1.0)
        alpha = _get_float(cp, section, "alpha", default=-1.0)
        beta = _get_float(cp, section, "beta", default=-1.0)
        return identity_coefficient(grid, scale=scale,
                                    alpha=None if alpha <= 0 else alpha,
                                    beta=None if beta <= 0 else beta)
    if kind == "sine":
        offset = _get_float(cp, section, "offset", default=2.0)
        amp = _get_float(cp, section, "amplitude", default=1.0)
        freq = _get_float(cp, section, "frequency", default=1.0)
        alpha = _get_float(cp, section, "alpha")
        beta = _get_float(cp, section, "beta")
        if alpha <= 0.0:
            raise ValidationError(f"[{section}] alpha must be positive")
        if beta < alpha:
            raise ValidationError(f"[{section}] beta must be >= alpha")
        x0 = grid.mesh()[0]
        vals = offset + amp * np.sin(2.0 * np.pi * freq * x0)
        return scalar_coefficient(grid, vals, alpha=alpha, beta=beta)
    raise ConfigError(f"unknown coefficient kind {kind!r} in [{section}]")


def _build_sequence(cp, grid):
    _require(cp, "sequence", "kind", "alpha", "beta")
    kind = _get_str(cp, "sequence", "kind")
    alpha = _get_float(cp, "sequence", "alpha")
    beta = _get_float(cp, "sequence", "beta")
    if alpha <= 0.0:
        raise ValidationError("[sequence] alpha must be positive")
    if beta < alpha:
        raise ValidationError("[sequence] beta must be >= alpha")
    if kind == "periodic-sine":
        offset = _get_float(cp, "sequence", "offset", default=2.0)
        amp = _get_float(cp, "sequence", "amplitude", default=1.0)
        return periodic_sequence_1d(
            grid, lambda x: offset + amp * np.sin(2.0 * np.pi * x),
            alpha=alpha, beta=beta)
    if kind == "checkerboard":
        return checkerboard_sequence_2d(
            grid, _get_float(cp, "sequence", "value_a"),
            _get_float(cp, "sequence", "value_b"), alpha=alpha, beta=beta)
    raise ConfigError(f"unknown sequence kind {kind!r}")


def _build_forcing(cp, grid, mask, cfg):
    kind = _get_str(cp, "forcing", "kind", default="constant")
    value = _get_float(cp, "forcing", "value", default=1.0)
    if kind == "constant":
        vals = np.zeros(grid.shape)
        vals[mask.inside] = value
        return ScalarField(grid, vals)
    if kind == "bump":
        probes, _ = bump_probes(mask, 1)
        return ScalarField(grid, value * probes[0].values)
    if kind == "sine-time-bump":
        probes, _ = bump_probes(mask, 1)
        core = probes[0].values
        dt = cfg.dt

        def forcing(k):
            return ScalarField(grid, value * np.sin(np.pi * k * dt) * core)

        return forcing
    raise ConfigError(f"unknown forcing kind {kind!r}")


def load_config(path, command, out=None, seed=None, threads=None):
    """Parse and validate a config file into an ExperimentConfig plan."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    cp = _read_ini(path)
    _check_schema(cp, command)
    declared = _get_str(cp, "experiment", "command", default=command)
    if declared != command:
        raise ValidationError(
            f"config declares command {declared!r} but {command!r} was invoked")

    grid = _build_grid(cp)
    out_dir = out or _get_str(cp, "output", "directory", default="out")
    if seed is None:
        seed = _get_int(cp, "experiment", "seed", default=0)
    if threads is None:
        threads = int(os.environ.get("FRAQHOM_THREADS", "1"))
    if threads < 1:
        raise ValidationError("threads must be at least 1")

    cfg = ExperimentConfig(command=command, grid=grid, out_dir=out_dir,
                           seed=seed, threads=threads)
    if command != "validate":
        cfg.s = _get_float(cp, "problem", "s", default=0.5)
        cfg.tol = _get_float(cp, "problem", "tol", default=1e-10)
        if not 0.0 < cfg.s < 1.0:
            raise ValidationError("[problem] s must lie in (0, 1)")
        if cfg.tol <= 0.0:
            raise ValidationError("[problem] tol must be positive")
    if command in ("solve", "homog", "metric", "heat", "schur", "kernel"):
        cfg.mask = _build_mask(cp, grid)

    if command == "solve":
        cfg.coefficient = _build_coefficient(cp, grid)
        cfg.forcing = _build_forcing(cp, grid, cfg.mask, cfg)
        if callable(cfg.forcing):
            raise ValidationError("solve takes a static forcing field")
    elif command == "homog":
        cfg.sequence = _build_sequence(cp, grid)
        cfg.forcing = _build_forcing(cp, grid, cfg.mask, cfg)
        if callable(cfg.forcing):
            raise ValidationError("homog takes a static forcing field")
        cfg.n_list = _get_ints(cp, "experiment", "n_list",
                               default=(4, 8, 16, 32, 64))
        cfg.ds_terms = _get_int(cp, "experiment", "ds_terms", default=8)
        cfg.rel_tol = _get_float(cp, "experiment", "rel_tol", default=0.05)
    elif command == "metric":
        cfg.coefficient = _build_coefficient(cp, grid, "coefficient_a")
        cfg.coefficient_b = _build_coefficient(cp, grid, "coefficient_b")
        cfg.n_terms = _get_int(cp, "experiment", "n_terms", default=16)
        cfg.n_bumps = _get_int(cp, "experiment", "n_bumps", default=8)
        cfg.mode = _get_str(cp, "experiment", "mode", default="ds")
        if cfg.mode not in ("ds", "global"):
            raise ValidationError("[experiment] mode must be ds or global")
    elif command == "heat":
        cfg.T = _get_float(cp, "experiment", "t", default=1.0)
        cfg.dt = _get_float(cp, "experiment", "dt", default=1.0 / 64)
        cfg.scheme = _get_str(cp, "experiment", "scheme",
                              default="implicit-euler")
        if "sequence" in cp:
            cfg.sequence = _build_sequence(cp, grid)
            cfg.n_list = _get_ints(cp, "experiment", "n_list",
                                   default=(4, 8, 16, 32, 64))
            cfg.rel_tol = _get_float(cp, "experiment", "rel_tol", default=0.05)
        elif "coefficient" in cp:
            cfg.coefficient = _build_coefficient(cp, grid)
        else:
            raise ConfigError("heat needs a [sequence] or [coefficient] section")
        cfg.forcing = _build_forcing(cp, grid, cfg.mask, cfg)
    elif command == "schur":
        cfg.sequence = _build_sequence(cp, grid)
        cfg.n_list = _get_ints(cp, "experiment", "n_list",
                               default=(4, 8, 16, 32, 64))
        ga = _get_float(cp, "experiment", "gamma_alpha",
                        default=cfg.sequence.alpha)
        gb = _get_float(cp, "experiment", "gamma_beta",
                        default=cfg.sequence.beta)
        if ga <= 0.0 or gb <= 0.0:
            raise ValidationError("[experiment] gamma bounds must be positive")
        cfg.gamma = canonical_gamma(ga, gb)
    elif command == "kernel":
        cfg.shifts = _get_floats(cp, "experiment", "shifts",
                                 default=(0.0, 0.25, 0.5, 0.75))
    elif command == "validate":
        cfg.coefficient = _build_coefficient(cp, grid)
    return cfg


# ---------------------------------------------------------------------------
# outputs

class OutputTracker:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.files = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out_dir, name)

    def write_manifest(self):
        rows = []
        for name in sorted(self.files):
            digest = hashlib.sha256()
            with open(os.path.join(self.out_dir, name), "rb") as fh:
                digest.update(fh.read())
            rows.append([name, digest.hexdigest()])
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        with open(os.path.join(self.out_dir, "manifest.csv"), "w",
                  newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["file", "sha256"])
            w.writerows(rows)
            w.writerow(["timestamp", stamp])


def _emit_plot(tracker, name, lines):
    with open(tracker.path(name), "w") as fh:
        fh.write("# gnuplot script; run as: gnuplot -p " + name + "\n")
        fh.write('set datafile separator ","\n')
        for line in lines:
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# command pipelines

def _run_solve(cfg, tracker):
    problem = DirichletProblem(mask=cfg.mask, coeff=cfg.coefficient, s=cfg.s,
                               rhs=cfg.forcing)
    solution = solve(problem, tol=cfg.tol)
    write_field_csv(tracker.path("solution.csv"), solution.u)
    write_solution_summary(tracker.path("summary.csv"), problem, solution,
                           tol=cfg.tol)
    if cfg.grid.dim == 1:
        _emit_plot(tracker, "plot.gp", [
            'set xlabel "x"',
            'set ylabel "u"',
            'plot "solution.csv" using 2:3 with lines title "u"',
        ])
    return EXIT_OK


def _run_homog(cfg, tracker):
    # 1d periodic families have a closed-form limit; other families fall
    # back to the finest member as a Cauchy-style reference
    limit = None
    if cfg.sequence.family == "periodic-1d":
        limit = predicted_limit_1d(cfg.sequence, cfg.mask)
    report = run_homog_experiment(cfg.sequence, cfg.mask, cfg.s, cfg.forcing,
                                  cfg.n_list, predicted_limit=limit,
                                  rel_tol=cfg.rel_tol,
                                  ds_terms=cfg.ds_terms, tol=cfg.tol,
                                  threads=cfg.threads)
    write_report_csv(tracker.path("report.csv"), report)
    write_verdicts_csv(tracker.path("verdicts.csv"), report)
    _emit_plot(tracker, "plot.gp", [
        "set logscale xy",
        'set xlabel "n"',
        'set key autotitle columnhead',
        'plot "report.csv" using 1:2 with linespoints, '
        '"" using 1:4 with linespoints, '
        '"" using 1:5 with linespoints, '
        '"" using 1:8 with linespoints',
    ])
    return EXIT_OK


def _run_metric(cfg, tracker):
    rows = [("ds", ds_metric(cfg.coefficient, cfg.coefficient_b, cfg.mask,
                             cfg.s, n_terms=cfg.n_terms, tol=cfg.tol))]
    if cfg.mode == "global":
        rows.append(("global", global_metric(
            cfg.coefficient, cfg.coefficient_b, cfg.mask, cfg.s,
            n_terms=cfg.n_terms, n_bumps=cfg.n_bumps, tol=cfg.tol)))
    with open(tracker.path("metric.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        for name, value in rows:
            w.writerow([name, repr(float(value))])
    return EXIT_OK


def _run_heat(cfg, tracker):
    if cfg.sequence is not None:
        report = heat_homog_experiment(cfg.sequence, cfg.mask, cfg.s,
                                       cfg.forcing, cfg.T, cfg.dt, cfg.n_list,
                                       rel_tol=cfg.rel_tol, tol=cfg.tol,
                                       threads=cfg.threads)
        write_heat_report_csv(tracker.path("heat_report.csv"), report)
        with open(tracker.path("heat_verdicts.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["verdict", "value"])
            for name in sorted(report.verdicts):
                w.writerow([name, report.verdicts[name]])
        _emit_plot(tracker, "plot.gp", [
            "set logscale xy",
            'set xlabel "n"',
            'set ylabel "space-time discrepancy"',
            'set key autotitle columnhead',
            'plot "heat_report.csv" using 1:2 with linespoints',
        ])
    else:
        problem = HeatProblem(mask=cfg.mask, coeff=cfg.coefficient, s=cfg.s,
                              T=cfg.T, dt=cfg.dt, forcing=cfg.forcing,
                              scheme=cfg.scheme)
        trajectory = solve_heat(problem, tol=cfg.tol)
        write_trajectory_csv(tracker.path("trajectory.csv"), trajectory)
        _emit_plot(tracker, "plot.gp", [
            'set xlabel "t"',
            'set ylabel "|u(t)|"',
            'set key autotitle columnhead',
            'plot "trajectory.csv" using 1:2 with lines',
        ])
    return EXIT_OK


def _run_schur(cfg, tracker):
    decomposition = build_decomposition(cfg.mask, cfg.s)
    limit = predicted_limit_1d(cfg.sequence, cfg.mask)
    report = schur_convergence_probe(cfg.sequence, limit, decomposition,
                                     cfg.n_list, threads=cfg.threads,
                                     seed=cfg.seed)
    write_probe_report_csv(tracker.path("probes.csv"), report)
    membership = membership_check(limit, decomposition, cfg.gamma,
                                  seed=cfg.seed)
    with open(tracker.path("membership.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["condition", "margin"])
        for name in sorted(membership.margins):
            w.writerow([name, repr(float(membership.margins[name]))])
        w.writerow(["passed", membership.passed])
    return EXIT_OK


def _run_kernel(cfg, tracker):
    fields = kernel_family_1d(cfg.mask, cfg.s, cfg.shifts)
    gram = np.empty((len(fields), len(fields)))
    for i, fi in enumerate(fields):
        for j, fj in enumerate(fields):
            gram[i, j] = inner(fi, fj)
    with open(tracker.path("gram.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shift"] + [repr(float(t)) for t in cfg.shifts])
        for i, t in enumerate(cfg.shifts):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in gram[i]])
    return EXIT_OK


def _run_validate(cfg, tracker):
    report = validate_coefficient(cfg.coefficient)
    with open(tracker.path("validate.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        w.writerow(["valid", report.valid])
        w.writerow(["lower_margin", repr(float(report.lower_margin))])
        w.writerow(["inverse_margin", repr(float(report.inverse_margin))])
        w.writerow(["alpha", repr(float(report.alpha))])
        w.writerow(["beta", repr(float(report.beta))])
    print(f"coercivity margin (mA1): {report.lower_margin:.6e}")
    print(f"inverse-bound margin (mA2): {report.inverse_margin:.6e}")
    if not report.valid:
        print("coefficient violates its class bounds", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def _run_ops_check(cfg, tracker):
    grid = cfg.grid
    table = table_for(grid, cfg.s)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    vol = grid.cell_volume

    def pairing(a, b):
        return vol * float(np.vdot(a, b))

    worst = {"adjoint": 0.0, "laplacian": 0.0, "classical": 0.0}
    lap = table.laplacian_multiplier(2.0 * cfg.s)
    lift = table.laplacian_multiplier(1.0 - cfg.s)
    for _ in range(8):
        u = rng.standard_normal(grid.shape)
        g = rng.standard_normal((grid.dim,) + grid.shape)
        gu = grad_raw(table, u)
        dg = div_raw(table, g)
        lhs = sum(pairing(gu[i], g[i]) for i in range(grid.dim))
        rhs = -pairing(u, dg)
        scale = max(abs(lhs), abs(rhs), 1e-300)
        worst["adjoint"] = max(worst["adjoint"], abs(lhs - rhs) / scale)

        composed = -div_raw(table, grad_raw(table, u))
        spectral = np.fft.ifftn(lap * np.fft.fftn(u)).real
        worst["laplacian"] = max(
            worst["laplacian"],
            np.max(np.abs(composed - spectral)) / np.max(np.abs(spectral)))

        lifted = np.stack([np.fft.ifftn(lift * np.fft.fftn(gu[i])).real
                           for i in range(grid.dim)])
        classical = grad_classical(ScalarField(grid, u)).values
        worst["classical"] = max(
            worst["classical"],
            np.max(np.abs(lifted - classical)) / np.max(np.abs(classical)))

    status = EXIT_OK
    with open(tracker.path("ops_check.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["identity", "residual", "status"])
        for name, value in worst.items():
            ok = value <= 1e-12
            rows.append((name, value, ok))
            w.writerow([name, repr(float(value)), "pass" if ok else "fail"])
            if not ok:
                status = EXIT_NUMERICAL
    for name, value, ok in rows:
        print(f"{name:<12} {value:.3e}  {'pass' if ok else 'fail'}")
    return status


_PIPELINES = {
    "solve": _run_solve,
    "homog": _run_homog,
    "metric": _run_metric,
    "heat": _run_heat,
    "schur": _run_schur,
    "kernel": _run_kernel,
    "validate": _run_validate,
    "ops-check": _run_ops_check,
}


def run(config_path, command, out=None, seed=None, threads=None,
        dry_run=False):
    """Load, validate, and execute one experiment config; returns exit code."""
    try:
        cfg = load_config(config_path, command, out=out, seed=seed,
                          threads=threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if dry_run:
        print(f"config ok: {command} on {cfg.grid.dim}d grid "
              f"N={cfg.grid.points_per_axis}")
        return EXIT_OK
    tracker = OutputTracker(cfg.out_dir)
    try:
        code = _PIPELINES[command](cfg, tracker)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    tracker.write_manifest()
    return code


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fraqhom",
        description="numerical laboratory for fractional-gradient diffusion "
                    "and homogenisation experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the experiment config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="seed for probe generation")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default FRAQHOM_THREADS or 1)")
        p.add_argument("--dry-run", action="store_true",
                       help="validate the config without solving")
    args = parser.parse_args(argv)
    return run(args.config, args.command, out=args.out, seed=args.seed,
               threads=args.threads, dry_run=args.dry_run)


if __name__ == "__main__":
    sys.exit(main())
