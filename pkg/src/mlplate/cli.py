"""Command line entry point: ``mlplate <command> -c config.yaml [-o out] [--seed N]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ProblemSpec, load_config
from .functionals import DisplacementField, Grid2D, Regime, RegimeError, energy, lki_constraint_residual
from .gamma import GammaError, convergence_study, preset_fields
from .laminate import LaminateError
from .minimize import (
    MinimizeResult, SolverError, cylinder_minimize_lki, minimize_energy, solve_lvk_direct, theta_sweep,
)
from .relaxation import effective_forms
from .tensor import SingularFormError

log = logging.getLogger("mlplate")

VALIDATION = 1
RUNTIME = 2
COMMANDS = ("homogenize", "energy", "minimize", "sweep-theta", "gamma-check")
FIELD_HEADER = ["x", "y", "u1", "u2", "v"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _fmt(x):
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def write_json(path, payload):
    path = Path(path)
    with _open_for_write(path) as fh:
        json.dump(_jsonable(payload), fh, indent=2)
        fh.write("\n")


def write_fields_csv(path, fields: DisplacementField, grid: Grid2D):
    """Row-major over nodes (x fastest), 17 significant digits."""
    x, y = grid.nodes()
    cols = [x, y, fields.u1, fields.u2, fields.v]
    path = Path(path)
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_HEADER)
        for row in zip(*(np.ravel(c) for c in cols)):
            w.writerow([_fmt(a) for a in row])


def read_fields_csv(path):
    """Inverse of write_fields_csv; the grid is recovered from the node coordinates."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read fields {path}: {exc.strerror}") from None
    if not rows or [h.strip() for h in rows[0]] != FIELD_HEADER:
        raise ConfigError(f"{path}: header must be {','.join(FIELD_HEADER)}", 1)
    try:
        data = np.array([[float(a) for a in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != 5:
        raise ConfigError(f"{path}: expected 5 columns")
    xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
    nx, ny = len(xs), len(ys)
    if nx * ny != len(data) or nx < 3 or ny < 3:
        raise ConfigError(f"{path}: rows do not form a tensor grid of at least 3x3 nodes")
    grid = Grid2D(float(xs[-1] - xs[0]), float(ys[-1] - ys[0]), nx, ny)
    gx, gy = grid.nodes()
    if not (np.allclose(data[:, 0], gx.ravel(), atol=1e-12) and np.allclose(data[:, 1], gy.ravel(), atol=1e-12)):
        raise ConfigError(f"{path}: nodes must be centred, uniform and in row-major order")
    fields = DisplacementField(*(data[:, k].reshape(grid.shape).copy() for k in (2, 3, 4)))
    return grid, fields


def result_report(res: MinimizeResult, regime: Regime):
    report = {
        "energy": res.energy,
        "regime": regime.tag,
        "theta": regime.theta,
        "iterations": res.iterations,
        "converged": res.converged,
        "gradient_norm": res.gradient_norm,
        "curvature": res.curvature.as_dict(),
    }
    extra = {k: v for k, v in res.extra.items() if not k.startswith("profile")}
    if extra:
        report["extra"] = extra
    return report


def forms_report(eff):
    return {
        "q00": eff.q00, "q01": eff.q01, "q11": eff.q11, "l0": eff.l0, "l1": eff.l1, "c_const": eff.c_const,
        "membrane_gain": eff.membrane_gain, "membrane_offset": eff.membrane_offset,
        "bend": eff.bend, "bend_lin": eff.bend_lin, "bend_const": eff.bend_const,
        "membrane_coercivity": eff.membrane_coercivity,
    }


def _cmd_homogenize(spec: ProblemSpec, out: Path, args):
    payload = {"moments": forms_report(effective_forms(spec.laminate))}
    write_json(out / "homogenize.json", payload)
    return payload


def _cmd_energy(spec: ProblemSpec, out: Path, args):
    path = args.fields or spec.fields_path
    if path is None:
        raise ConfigError("energy needs a fields CSV (config key `fields` or --fields)")
    grid, fields = read_fields_csv(path)
    eff = effective_forms(spec.laminate)
    theta = spec.regime.theta
    payload = {
        "energies": {
            "lKi": energy(Regime("lKi", lki_sign=spec.regime.lki_sign), eff, fields, grid),
            "vK": energy(Regime("vK", theta), eff, fields, grid),
            "lvK": energy(Regime("lvK"), eff, fields, grid),
        },
        "theta": theta,
        "lki_constraint_residual": lki_constraint_residual(fields.v, grid),
    }
    write_json(out / "energy.json", payload)
    return payload


def _solver_opts(spec, args):
    return replace(spec.solver, seed=args.seed)


def _cmd_minimize(spec: ProblemSpec, out: Path, args):
    eff = effective_forms(spec.laminate)
    regime, grid = spec.regime, spec.grid
    if regime.tag == "lKi":
        res = cylinder_minimize_lki(eff, grid, sign=regime.lki_sign)
    elif regime.tag == "lvK" and args.direct:
        res = solve_lvk_direct(eff, grid, _solver_opts(spec, args))
    else:
        res = minimize_energy(regime, eff, grid, opts=_solver_opts(spec, args))
    write_fields_csv(out / "fields.csv", res.fields, grid)
    report = result_report(res, regime)
    write_json(out / "report.json", report)
    return report


def _cmd_sweep(spec: ProblemSpec, out: Path, args):
    eff = effective_forms(spec.laminate)
    results = theta_sweep(eff, spec.grid, spec.thetas, _solver_opts(spec, args))
    reports = []
    for k, (theta, res) in enumerate(zip(spec.thetas, results)):
        reports.append(result_report(res, Regime("vK", theta)))
        write_fields_csv(out / f"fields_theta_{k:02d}.csv", res.fields, spec.grid)
    write_json(out / "sweep.json", reports)
    return reports


def _cmd_gamma(spec: ProblemSpec, out: Path, args):
    g = spec.gamma
    table = convergence_study(spec.laminate, spec.regime, preset_fields(g.preset), g.hs, g.quad,
                              Grid2D(spec.grid.Lx, spec.grid.Ly, 17, 17))
    path = out / "gamma.csv"
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "energy", "error", "projection_error"])
        for row in table.rows():
            w.writerow([_fmt(a) for a in row])
    payload = {"regime": spec.regime.tag, "alpha": spec.regime.alpha, "theta": spec.regime.theta,
               "preset": g.preset, **table.as_dict()}
    write_json(out / "gamma.json", payload)
    return payload


_HANDLERS = {
    "homogenize": _cmd_homogenize,
    "energy": _cmd_energy,
    "minimize": _cmd_minimize,
    "sweep-theta": _cmd_sweep,
    "gamma-check": _cmd_gamma,
}


def build_parser():
    parser = _Parser(prog="mlplate", description="Multilayer plate homogenization and limit energies.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    helps = {
        "homogenize": "effective plate forms of the laminate",
        "energy": "evaluate all three limit energies on a fields CSV",
        "minimize": "minimize the configured regime",
        "sweep-theta": "vK minimizers over the configured theta list",
        "gamma-check": "3D recovery energies versus the 2D limit",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("-c", "--config", required=True, help="YAML configuration file")
        p.add_argument("-o", "--out-dir", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, default=0, help="seed for optimizer initial jitter")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "energy":
            p.add_argument("--fields", help="fields CSV (overrides config key `fields`)")
        if name == "minimize":
            p.add_argument("--direct", action="store_true", help="lvK only: solve the normal equations")
    return parser


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + f"mlplate: error: a command is required: {', '.join(COMMANDS)}")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        spec = load_config(args.config)
        out = Path(args.out_dir or spec.out_dir)
        payload = _HANDLERS[args.command](spec, out, args)
    except (ConfigError, LaminateError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION
    except GammaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME if exc.code == "energy-overflow" else VALIDATION
    except (SolverError, SingularFormError, OSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME
    print(json.dumps(_jsonable(payload), indent=2))
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
