"""Command-line front end.

Subcommands: ``simulate`` (feedback trajectory), ``chatter`` (truncated origin
solution), ``verify`` (certificate and partition checks) and ``converge``
(offset family and limit sequence).  Exit codes: 0 success, 1 a check or
convergence test failed, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .dynamics import SQRT3, chattering_from_origin, simulate_feedback
from .errors import CalibrationError, CertificateViolation, DomainError, FullerError, InvalidInputError, NonConvergenceError
from .geometry import speed_bound
from .lyapunov import Check, QlfParams, QuasiLyapunov, calibrate, certificate_checks, verify_qlf
from .partition import build_ms_cover, cell_index_trace, first_decrease, validate_approximation
from .reporting import make_report, write_json, write_trajectory_csv
from .solver import (
    SolverConfig,
    default_builders,
    offset_family,
    run_engine,
    solve_via_limits,
    time_lower_bound,
    wbar_growth_margin,
)

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    """Invalid flags or configuration (exit 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    a_bar: float = 0.1
    r: float | str = "auto"
    T: float = 1.0
    grid_n: int = 200
    seed: int = 0
    out_dir: str = "out"

    def validate(self) -> "RunConfig":
        if not (isinstance(self.a_bar, (int, float)) and math.isfinite(self.a_bar) and self.a_bar > 0):
            raise UsageError("a_bar must be a positive number")
        if self.r != "auto" and not (isinstance(self.r, (int, float)) and math.isfinite(self.r) and self.r > 0):
            raise UsageError('r must be a positive number or "auto"')
        if not (isinstance(self.T, (int, float)) and math.isfinite(self.T) and self.T > 0):
            raise UsageError("T must be a positive number")
        if not (isinstance(self.grid_n, int) and self.grid_n >= 2):
            raise UsageError("grid_n must be an integer of at least 2")
        if not isinstance(self.seed, int):
            raise UsageError("seed must be an integer")
        return self

    def params(self) -> tuple[QlfParams, list[Check]]:
        """Certificate parameters: calibrated for ``r = "auto"``, else checked at the given radius."""
        if self.r == "auto":
            params, report = calibrate(self.a_bar, grid_n=self.grid_n)
            return params, list(report.checks)
        checks = certificate_checks(self.a_bar, float(self.r), self.grid_n)
        return QlfParams(a_bar=self.a_bar, r=float(self.r)), checks


def _number(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return v


def _radius(text: str):
    return "auto" if text == "auto" else _number(text)


def _offsets(text: str) -> tuple[float, ...]:
    return tuple(_number(p) for p in text.split(",") if p.strip())


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}")
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config fields: {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, v)
    for name in ("a_bar", "r", "T", "grid_n", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg.validate()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fuller-inclusion", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file with run configuration fields")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--a-bar", dest="a_bar", type=_number)
        sp.add_argument("--r", dest="r", type=_radius, help='certificate radius or "auto"')
        sp.add_argument("--T", dest="T", type=_number, help="time horizon of the partition")
        sp.add_argument("--grid-n", dest="grid_n", type=int)
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("simulate", help="feedback trajectory from a non-origin state")
    common(sp)
    sp.add_argument("--x0", type=_number, required=True)
    sp.add_argument("--y0", type=_number, required=True)
    sp.add_argument("--t-max", dest="t_max", type=_number, default=1.0)
    sp.add_argument("--radius", type=_number, default=1.0, help="stop when the state reaches this radius")
    sp.add_argument("--sample-step", dest="sample_step", type=_number, help="add uniformly spaced rows")

    sp = sub.add_parser("chatter", help="truncated chattering solution leaving the origin")
    common(sp)
    sp.add_argument("--scale", type=_number, required=True, help="ordinate magnitude of the exit switch")
    sp.add_argument("--arcs", type=int, required=True)
    sp.add_argument("--radius", type=_number, default=1.0)

    sp = sub.add_parser("verify", help="certificate and partition checks")
    common(sp)
    sp.add_argument(
        "--control",
        choices=("none", "flip-field", "negate-wbar"),
        default="none",
        help="run a negative control that must fail",
    )

    sp = sub.add_parser("converge", help="offset family and limit sequence from the origin")
    common(sp)
    sp.add_argument("--k-max", dest="k_max", type=int, default=6)
    sp.add_argument("--offsets", type=_offsets, default=(1e-3, 1e-4, 1e-5))
    return p


# ------------------------------------------------------------------ commands


def cmd_simulate(args, cfg: RunConfig) -> int:
    if args.x0 == 0 and args.y0 == 0:
        raise UsageError("the origin has no unique feedback arc; use the chatter command")
    if not args.t_max >= 0:
        raise UsageError("--t-max must be non-negative")
    if not args.radius > 0:
        raise UsageError("--radius must be positive")
    traj = simulate_feedback((args.x0, args.y0), args.t_max, r=args.radius)
    params, _ = cfg.params()
    out = Path(cfg.out_dir)
    write_trajectory_csv(out / "trajectory.csv", traj, params, args.sample_step)
    end = traj.end
    print(f"switches: {len(traj.switch_points)}")
    print(f"final state: x={end.x:.17g} y={end.y:.17g} t={end.t:.17g}")
    return EXIT_OK


def cmd_chatter(args, cfg: RunConfig) -> int:
    if args.arcs < 1:
        raise UsageError("--arcs must be at least 1")
    if not args.scale > 0:
        raise UsageError("--scale must be positive")
    traj = chattering_from_origin(args.scale, args.arcs, r=args.radius)
    params, _ = cfg.params()
    out = Path(cfg.out_dir)
    write_trajectory_csv(out / "chatter.csv", traj, params)
    summary = {
        "elapsed": traj.duration + traj.time_offset,
        "truncation_radius": traj.truncation_radius,
        "switches": len(traj.switch_points),
    }
    checks = []
    mags = [abs(p.y) for p in traj.switch_points]
    if len(mags) >= 2:
        err = max(abs(b / a - SQRT3) for a, b in zip(mags, mags[1:]))
        summary["ratio_check"] = {"max_error": err, "ratio": SQRT3, "pass": err <= 1e-9}
        checks.append(Check("switch_ratio", len(mags) - 1, err, 1e-9, "<="))
    write_json(out / "chatter.json", make_report(__version__, _config_dict(cfg, args), checks, summary))
    print(f"elapsed: {summary['elapsed']:.10f}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def _negate_control(params: QlfParams) -> Check:
    """Engine run under the negated certificate; passes only if no violation is raised."""
    bad = QuasiLyapunov(params).negated()
    pa = build_ms_cover(math.ceil(4.0 / params.r), params.r, 1.0)
    start = (0.25 * (0.2 * params.r) ** 2, 0.2 * params.r, 0.0)
    try:
        run_engine(start, pa, bad)
        completed = 1.0
    except CertificateViolation as exc:
        print(f"certificate violation: {exc}", file=sys.stderr)
        completed = 0.0
    return Check("engine_negated_wbar", 1, completed, 1.0, ">=")


def cmd_verify(args, cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    summary: dict = {}
    try:
        params, checks = cfg.params()
    except CalibrationError as exc:
        checks = list(exc.report.checks) if exc.report else []
        summary["calibration"] = str(exc)
        write_json(out / "verify.json", make_report(__version__, _config_dict(cfg, args), checks, summary))
        _print_checks(checks)
        return EXIT_FAIL
    summary["r"] = params.r
    checks += list(verify_qlf(params, grid_n=min(cfg.grid_n, 100), seed=cfg.seed).checks)
    pa = build_ms_cover(math.ceil(4.0 / params.r), params.r, cfg.T)
    if args.control == "flip-field":
        cell = pa.cell_at((0.6 * params.r, 0.0, 0.5 * cfg.T))
        pa = pa.with_flipped(cell.id)
        cell = pa.cell_at((0.6 * params.r, 0.0, 0.5 * cfg.T))
        part = validate_approximation(pa, grid_n=min(cfg.grid_n, 100), seed=cfg.seed, cells=[cell])
        summary["flipped_cell"] = list(cell.id)
    else:
        part = validate_approximation(pa, grid_n=min(cfg.grid_n, 100), seed=cfg.seed)
    checks += list(part.checks)
    summary["partition"] = {"depths": list(pa.depths), "cells_checked": part.n_cells, "max_neighbors": part.max_neighbors}
    if args.control == "negate-wbar":
        checks.append(_negate_control(params))
    summary["control"] = args.control
    write_json(out / "verify.json", make_report(__version__, _config_dict(cfg, args), checks, summary))
    _print_checks(checks)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def cmd_converge(args, cfg: RunConfig) -> int:
    if args.k_max < 2:
        raise UsageError("--k-max must be at least 2")
    params, _ = cfg.params()
    offsets = tuple(args.offsets)
    if len(offsets) < 2:
        raise UsageError("--offsets needs at least two values")
    if any(d >= params.r for d in offsets):
        raise UsageError(f"offsets must be smaller than the certificate radius {params.r}")
    try:
        solver_cfg = SolverConfig(start_offsets=offsets)
    except InvalidInputError as exc:
        raise UsageError(str(exc))
    pa_builder, qlf_builder = default_builders(params, cfg.T)
    pa, qlf = pa_builder(1), qlf_builder(1)
    out = Path(cfg.out_dir)
    checks: list[Check] = []
    summary: dict = {}
    fam = offset_family((0.0, 0.0, 0.0), pa, qlf, solver_cfg)
    summary["offset_family"] = {
        "offsets": list(fam.offsets),
        "sup_gaps": list(fam.gaps),
        "decade_ratios": fam.decade_ratios(),
        "fit": None if fam.fit() is None else {"C": fam.fit()[0], "exponent": fam.fit()[1]},
    }
    ratios = fam.decade_ratios()
    checks.append(Check("offset_gaps_decreasing", len(fam.gaps), _max_step(fam.gaps), 0.0, "<"))
    checks.append(Check("offset_decade_ratio", len(ratios), max(ratios) if ratios else 0.0, 0.5, "<="))
    c = speed_bound(params.r)
    lb = time_lower_bound((0.0, 0.0), params.r, c)
    growth = min(wbar_growth_margin(tr, qlf, 1e-5) for tr in fam.trajectories)
    checks.append(Check("wbar_growth", len(fam.runs), growth, -1e-6, ">="))
    durations = [run.trajectory.duration for run in fam.runs if not run.clipped]
    checks.append(Check("duration_bound", len(durations), min(durations) - lb if durations else 0.0, -1e-9, ">="))
    try:
        traj, report = solve_via_limits((0.0, 0.0, 0.0), args.k_max, pa_builder, qlf_builder)
        summary["limits"] = report.to_dict()
        checks.append(Check("limit_gaps_nonincreasing", len(report.sup_gaps), _max_step(report.sup_gaps), 0.0, "<="))
        checks.append(Check("final_residual", 1, report.residuals[-1], 1.0 / args.k_max, "<="))
        checks.append(Check("max_residual", len(report.residuals), max(report.residuals), 1e-9, "<="))
        trace = cell_index_trace(traj, pa, 1e-5, clip=True, auto_refine=True)
        first = first_decrease(trace)
        checks.append(Check("limit_trace_decreases", len(trace), 0.0 if first is None else 1.0, 0.0, "<="))
        write_trajectory_csv(out / "limit.csv", traj, params)
    except NonConvergenceError as exc:
        summary["limits"] = exc.report.to_dict() if exc.report is not None else None
        checks.append(Check("limit_gaps_nonincreasing", 0, math.inf, 0.0, "<="))
    write_json(out / "converge.json", make_report(__version__, _config_dict(cfg, args), checks, summary))
    _print_checks(checks)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def _max_step(values) -> float:
    """Largest increase between consecutive values (negative when strictly decreasing)."""
    steps = [b - a for a, b in zip(values, values[1:])]
    return max(steps) if steps else -math.inf


def _config_dict(cfg: RunConfig, args) -> dict:
    d = asdict(cfg)
    # where the files go is not part of the run, so reports stay comparable
    del d["out_dir"]
    d["command"] = args.command
    for k, v in sorted(vars(args).items()):
        if k not in d and k not in ("config", "out", "func"):
            d[k] = list(v) if isinstance(v, tuple) else v
    return d


def _print_checks(checks) -> None:
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"{mark} {c.name}: worst={c.worst:.6g} threshold {c.sense} {c.threshold:.6g}")


COMMANDS = {"simulate": cmd_simulate, "chatter": cmd_chatter, "verify": cmd_verify, "converge": cmd_converge}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args)
        return COMMANDS[args.command](args, cfg)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except (UsageError, InvalidInputError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FullerError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
