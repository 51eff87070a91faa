"""
Command line entry point.

    meanfieldpy constants
    meanfieldpy certify --config configs/half_shift.yaml --out runs/half_shift
    meanfieldpy continue --config configs/half_shift.yaml --grid 128 --format json

Every run directory receives ``config.json``, the result files of the
command and ``manifest.json``.
"""
import argparse
import json
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .core.blowup import diagnose, lemma_ratio, r_epsilon
from .core.certificates import TestFunction, test_energy_numeric, thm3_certificate
from .core.errors import ConfigurationError, ConvergenceError, MeanFieldError
from .core.exporter import Exporter
from .core.green import SymmetrizedGreen, TorusGreen, constants_table, fit_expansion
from .core.solver import MinimizerState, StageStatus, continuation, minimize, state_from_field
from .core.spectral import GridField
from .core.torus import Point, project_H_G
from .utils.config import RunConfig, load_config
from .utils.helpers import (
    CONTINUE_COLUMNS,
    PROFILE_COLUMNS,
    SOLVE_COLUMNS,
    TESTFN_COLUMNS,
    RunRecord,
    digest,
)

logger = logging.getLogger(__name__)

COMMANDS = ("green", "solve", "continue", "bubble", "certify", "testfn", "constants")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64

LOG_FORMAT = "%(asctime)s|%(name)s|%(levelname)s| %(message)s"


class RunContext:
    """Output directory of one invocation and the manifest of what was written to it."""

    def __init__(self, command: str, out_dir: Optional[str], config: Optional[RunConfig], fmt: str = "csv"):
        self.out_dir = out_dir
        self.fmt = fmt
        self.record = RunRecord(command, __version__, digest(config.to_dict() if config else {}))

    def _path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _track(self, path: str) -> None:
        self.record.add_file(path, self.out_dir)

    def write_json(self, name: str, payload: Any) -> None:
        self._track(Exporter.export_json(self._path(name), payload))

    def write_table(self, name: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        if self.fmt == "json":
            self.write_json(f"{name}.json", [dict(zip(columns, row)) for row in rows])
        else:
            self._track(Exporter.export_csv(self._path(f"{name}.csv"), columns, rows))

    def write_grid(self, name: str, field: GridField, with_csv: bool = False) -> None:
        self._track(Exporter.export_grid(self._path(f"{name}.grid"), field))
        if with_csv and self.fmt == "csv":
            self._track(Exporter.export_grid_csv(self._path(f"{name}.csv"), field))

    def finish(self) -> None:
        if self.out_dir is None:
            return
        self.record.finish()
        Exporter.export_json(self._path("manifest.json"), self.record.to_dict())
        logger.info("wrote %d files to %s", len(self.record.files), self.out_dir)


def _cmd_constants(ctx: RunContext, cfg: Optional[RunConfig], args: argparse.Namespace) -> None:
    table = constants_table()
    print(json.dumps(table, sort_keys=True, indent=2))
    if ctx.out_dir is not None:
        ctx.write_json("constants.json", table)


def _cmd_green(ctx: RunContext, cfg: RunConfig, args: argparse.Namespace) -> None:
    n = cfg.solver.grid
    # half a cell off the grid keeps every pole away from the nodes
    center = Point.of(*cfg.green_center) if cfg.green_center else Point.of(0.5 / n, 0.5 / n)
    green = SymmetrizedGreen(center, cfg.group, cfg.lattice)
    expansion = fit_expansion(center, cfg.group, lattice=cfg.lattice)
    ctx.write_json("green.json", {
        "A": TorusGreen(cfg.lattice).robin,
        "A_tilde": green.tilde_robin,
        "delta": green.delta,
        "center": list(center.coords),
        "ell": cfg.group.ell,
        "expansion": expansion.to_dict(),
        "constants": constants_table(),
    })
    ctx.write_grid("green", green.sample(n, n), with_csv=True)


def _persist_state(ctx: RunContext, state: MinimizerState) -> None:
    rows = [(r.iteration, r.J, r.grad_norm, r.residual, r.step, r.c_eps, r.lambda_eps) for r in state.history]
    ctx.write_table("iterations", SOLVE_COLUMNS, rows)
    ctx.write_json("summary.json", state.summary())
    ctx.write_grid("field", state.u)


def _cmd_solve(ctx: RunContext, cfg: RunConfig, args: argparse.Namespace) -> None:
    spec = cfg.problem_spec()
    try:
        state = minimize(spec)
    except ConvergenceError as exc:
        if exc.state is not None:
            _persist_state(ctx, exc.state)
        raise
    _persist_state(ctx, state)


def _cmd_continue(ctx: RunContext, cfg: RunConfig, args: argparse.Namespace) -> None:
    schedule = cfg.schedule
    spec = cfg.problem_spec(epsilon=schedule.eps[0])
    states = continuation(spec, schedule.eps, schedule.threshold, schedule.min_cells, schedule.growth_limit)
    rows: List[Sequence[Any]] = []
    for k, state in enumerate(states):
        stage_spec = spec.with_epsilon(state.epsilon)
        rows.append((state.epsilon, state.rho, state.J, state.el_residual, state.c_eps, state.lambda_eps,
                     state.x_eps.coords[0], state.x_eps.coords[1], r_epsilon(state, stage_spec),
                     lemma_ratio(state, stage_spec), state.status.value))
        if state.status is not StageStatus.FAILED:
            ctx.write_grid(f"stage_{k:02d}", state.u)
    ctx.write_table("continuation", CONTINUE_COLUMNS, rows)
    ctx.write_json("summary.json", {"stages": [s.summary() for s in states]})
    if all(s.status is StageStatus.FAILED for s in states):
        raise ConvergenceError("every continuation stage failed to converge")


def _load_field(path: str, cfg: RunConfig) -> GridField:
    try:
        loaded = Exporter.load_grid(path)
    except OSError as exc:
        raise ConfigurationError(f"--field: cannot read {path}: {exc}") from exc
    if loaded.n1 != loaded.n2:
        raise ConfigurationError(f"--field: expected a square grid, got {loaded.n1}x{loaded.n2}")
    same = (np.allclose(loaded.lattice.basis_a, cfg.lattice.basis_a)
            and np.allclose(loaded.lattice.basis_b, cfg.lattice.basis_b))
    if not same:
        raise ConfigurationError("--field: lattice of the field differs from the configured lattice")
    return GridField(loaded.values, cfg.lattice)


def _cmd_bubble(ctx: RunContext, cfg: RunConfig, args: argparse.Namespace) -> None:
    block = cfg.bubble
    if args.field:
        field = _load_field(args.field, cfg)
        spec = cfg.problem_spec(grid=field.n1, epsilon=block.eps)
    else:
        spec = cfg.problem_spec(grid=block.grid, epsilon=block.eps)
        logger.info("no --field given, using the glued bubble at eps=%g on %d^2 nodes", block.eps, block.grid)
        field = TestFunction(block.eps, spec.h, cfg.group).sample()
    state = state_from_field(project_H_G(field, cfg.group), spec)
    diag = diagnose(state, spec, R_profile=block.R_profile, R_mass=block.R, clamp=block.clamp)
    ctx.write_table("profile", PROFILE_COLUMNS, diag.profile.rows())
    ctx.write_json("bubble.json", diag.to_dict())


def _cmd_certify(ctx: RunContext, cfg: RunConfig, args: argparse.Namespace) -> None:
    report = thm3_certificate(cfg.h_field(), cfg.group)
    ctx.write_json("certificate.json", report.to_dict())
    logger.info("lower bound %.6g, sufficient condition %s", report.lower_bound_value,
                "holds" if report.cond_holds else "fails")


def _cmd_testfn(ctx: RunContext, cfg: RunConfig, args: argparse.Namespace) -> None:
    block = cfg.testfn
    rows = test_energy_numeric(block.eps, cfg.h_field(), cfg.group, grid=(block.grid, block.grid),
                               support_fraction=block.support_fraction)
    ctx.write_table("testfn", TESTFN_COLUMNS,
                    [(r.eps, r.R, r.R_clamped, r.J_numeric, r.C_star, r.gap_numeric, r.gap_asymptotic,
                      r.finite_R, r.gap_corrected) for r in rows])


HANDLERS: Dict[str, Callable[[RunContext, Optional[RunConfig], argparse.Namespace], None]] = {
    "constants": _cmd_constants,
    "green": _cmd_green,
    "solve": _cmd_solve,
    "continue": _cmd_continue,
    "bubble": _cmd_bubble,
    "certify": _cmd_certify,
    "testfn": _cmd_testfn,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meanfieldpy",
                                     description="Symmetric mean field equations on flat tori.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="YAML run configuration.")
    parser.add_argument("--out", help="Run directory, defaults to output.dir of the configuration.")
    parser.add_argument("--grid", type=int, help="Override every grid size.")
    parser.add_argument("--eps", type=float, help="Override epsilon of solve, bubble and testfn.")
    parser.add_argument("--seed", type=int, help="Override the solver seed.")
    parser.add_argument("--format", choices=("csv", "json"), default="csv", help="Format of tabular output.")
    parser.add_argument("--field", help="Binary grid file analysed by the bubble command.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    verbosity.add_argument("--quiet", action="store_true", help="Log warnings and errors only.")
    return parser


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True), file=sys.stderr)
    return code


def _run(args: argparse.Namespace) -> int:
    if args.config is None:
        if args.command != "constants":
            raise ConfigurationError(f"{args.command}: --config is required")
        cfg = None
    else:
        cfg = load_config(args.config).with_overrides(args.grid, args.eps, args.seed)
    out_dir = args.out or (cfg.output_dir if cfg is not None else None)
    ctx = RunContext(args.command, out_dir, cfg, args.format)
    try:
        if cfg is not None:
            ctx.write_json("config.json", cfg.to_dict())
        HANDLERS[args.command](ctx, cfg, args)
    finally:
        ctx.finish()
    return EXIT_OK


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command and return its exit status.

    0 on success, 2 for invalid configuration or violated preconditions,
    3 when the numerics fail to converge, 64 for an unknown command. Errors
    are reported on stderr as a JSON object.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv or (argv[0] not in COMMANDS and argv[0] not in ("-h", "--help")):
        sys.stderr.write(parser.format_usage())
        given = argv[0] if argv else ""
        return _error("UsageError", f"unknown command {given!r}, expected one of {', '.join(COMMANDS)}",
                      EXIT_USAGE)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger("meanfieldpy").setLevel(level)

    try:
        return _run(args)
    except ConvergenceError as exc:
        logger.error("%s", exc)
        return _error(type(exc).__name__, str(exc), EXIT_NUMERIC)
    except MeanFieldError as exc:
        logger.error("%s", exc)
        return _error(type(exc).__name__, str(exc), EXIT_CONFIG)


def main() -> None:
    sys.exit(dispatch())
