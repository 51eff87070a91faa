import logging
import math
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import yaml

from ..core.errors import ConfigurationError
from ..core.solver import ProblemSpec
from ..core.spectral import GridField
from ..core.torus import TorusLattice, TranslationGroup

logger = logging.getLogger(__name__)

SECTIONS = ("lattice", "group", "h", "solver", "schedule", "bubble", "testfn", "green", "output")


@dataclass(frozen=True)
class FourierMode:
    """a cos(2 pi (k1 xi1 + k2 xi2)) + b sin(2 pi (k1 xi1 + k2 xi2)) in lattice coordinates."""
    k: Tuple[int, int]
    cos: float = 0.0
    sin: float = 0.0


@dataclass(frozen=True)
class HDescription:
    constant: float = 1.0
    modes: Tuple[FourierMode, ...] = ()

    def sample(self, n1: int, n2: int, lattice: TorusLattice) -> GridField:
        xi1, xi2 = np.meshgrid(np.arange(n1) / n1, np.arange(n2) / n2, indexing="ij")
        values = np.full((n1, n2), self.constant)
        for mode in self.modes:
            phase = 2.0 * math.pi * (mode.k[0] * xi1 + mode.k[1] * xi2)
            values = values + mode.cos * np.cos(phase) + mode.sin * np.sin(phase)
        return GridField(values, lattice)

    def describe(self) -> Dict[str, Any]:
        return {"constant": self.constant,
                "modes": [{"k": list(m.k), "cos": m.cos, "sin": m.sin} for m in self.modes]}


@dataclass(frozen=True)
class SolverBlock:
    grid: int = 256
    epsilon: Optional[float] = None
    rho: Optional[float] = None
    tol: float = 1e-6
    max_iter: int = 2000
    seed: int = 0
    perturbation: float = 0.0
    force: bool = False


@dataclass(frozen=True)
class ScheduleBlock:
    eps: Tuple[float, ...] = (0.4, 0.35, 0.3)
    threshold: float = 12.0
    growth_limit: Optional[float] = None
    min_cells: float = 4.0


@dataclass(frozen=True)
class BubbleBlock:
    eps: float = 0.02
    grid: int = 1024
    R: float = 20.0
    R_profile: float = 4.0
    clamp: bool = True


@dataclass(frozen=True)
class TestfnBlock:
    __test__ = False

    grid: int = 1024
    eps: Tuple[float, ...] = (0.08, 0.04, 0.02)
    support_fraction: float = 0.95


@dataclass(frozen=True)
class RunConfig:
    """
    Validated run configuration.

    Examples:
        >>> cfg = parse_config({"group": {"order": 2}, "h": {"constant": 1.0}})
        >>> cfg.solver.grid, cfg.group.ell
        (256, 2)
    """
    lattice: TorusLattice
    group: TranslationGroup
    h: HDescription
    solver: SolverBlock = SolverBlock()
    schedule: ScheduleBlock = ScheduleBlock()
    bubble: BubbleBlock = BubbleBlock()
    testfn: TestfnBlock = TestfnBlock()
    green_center: Optional[Tuple[float, float]] = None
    output_dir: str = "runs"

    def h_field(self, grid: Optional[int] = None) -> GridField:
        n = grid or self.solver.grid
        return self.h.sample(n, n, self.lattice)

    def problem_spec(self, grid: Optional[int] = None, epsilon: Optional[float] = None) -> ProblemSpec:
        s = self.solver
        eps = epsilon if epsilon is not None else s.epsilon
        rho = None if epsilon is not None else s.rho
        if eps is None and rho is None:
            raise ConfigurationError("solver: one of 'epsilon' or 'rho' is required")
        return ProblemSpec(group=self.group, h=self.h_field(grid), rho=rho, epsilon=eps, tol=s.tol,
                           max_iter=s.max_iter, seed=s.seed, perturbation=s.perturbation, force=s.force)

    def with_overrides(self, grid: Optional[int] = None, eps: Optional[float] = None,
                       seed: Optional[int] = None) -> "RunConfig":
        cfg = self
        if grid is not None:
            _check_grid(grid, cfg.group, "--grid")
            cfg = replace(cfg, solver=replace(cfg.solver, grid=grid), bubble=replace(cfg.bubble, grid=grid),
                          testfn=replace(cfg.testfn, grid=grid))
        if eps is not None:
            cfg = replace(cfg, solver=replace(cfg.solver, epsilon=eps, rho=None),
                          bubble=replace(cfg.bubble, eps=eps), testfn=replace(cfg.testfn, eps=(eps,)))
        if seed is not None:
            cfg = replace(cfg, solver=replace(cfg.solver, seed=seed))
        return cfg

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lattice": {"a": list(self.lattice.basis_a), "b": list(self.lattice.basis_b)},
            "group": {"shifts": self.group.as_strings()},
            "h": self.h.describe(),
            "solver": asdict(self.solver),
            "schedule": asdict(self.schedule),
            "bubble": asdict(self.bubble),
            "testfn": asdict(self.testfn),
            "green": {"center": list(self.green_center) if self.green_center else None},
            "output": {"dir": self.output_dir},
        }


def _section(raw: Mapping[str, Any], key: str) -> Dict[str, Any]:
    value = raw.get(key) or {}
    if not isinstance(value, Mapping):
        raise ConfigurationError(f"{key}: expected a mapping, got {type(value).__name__}")
    return dict(value)


def _flag(value: Any) -> bool:
    if not isinstance(value, bool):
        raise TypeError(f"expected true or false, got {type(value).__name__}")
    return value


def _block(cls, raw: Dict[str, Any], path: str, **converters):
    known = set(cls.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {sorted(unknown)}")
    values = {}
    for key, value in raw.items():
        try:
            values[key] = converters[key](value) if key in converters else value
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"{path}.{key}: invalid value {value!r} ({exc})") from exc
    return cls(**values)


def _vector(value: Any, path: str) -> Tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigurationError(f"{path}: expected a 2-vector, got {value!r}")
    return (float(value[0]), float(value[1]))


def _parse_group(raw: Dict[str, Any]) -> TranslationGroup:
    if "order" in raw and "shifts" in raw:
        raise ConfigurationError("group: give either 'order' or 'shifts', not both")
    if "order" in raw:
        return TranslationGroup.cyclic(int(raw["order"]), axis=str(raw.get("axis", "a")))
    if "shifts" in raw:
        gens = []
        for i, s in enumerate(raw["shifts"] or []):
            if not isinstance(s, (list, tuple)) or len(s) != 2:
                raise ConfigurationError(f"group.shifts[{i}]: expected a pair, got {s!r}")
            try:
                gens.append((Fraction(str(s[0])), Fraction(str(s[1]))))
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigurationError(f"group.shifts[{i}]: {exc}") from exc
        return TranslationGroup.generated(gens)
    raise ConfigurationError("group: missing key 'order' or 'shifts'")


def _parse_h(raw: Dict[str, Any], group: TranslationGroup) -> HDescription:
    if "constant" in raw and "fourier" in raw:
        raise ConfigurationError("h: give either 'constant' or 'fourier', not both")
    if "constant" in raw:
        return HDescription(float(raw["constant"]))
    if "fourier" not in raw:
        raise ConfigurationError("h: missing key 'constant' or 'fourier'")
    fourier = raw["fourier"] or {}
    modes: List[FourierMode] = []
    for i, m in enumerate(fourier.get("modes") or []):
        path = f"h.fourier.modes[{i}]"
        try:
            k = m["k"]
            mode = FourierMode((int(k[0]), int(k[1])), float(m.get("cos", 0.0)), float(m.get("sin", 0.0)))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigurationError(f"{path}: malformed mode {m!r}") from exc
        for s1, s2 in group.shifts:
            if (mode.k[0] * s1 + mode.k[1] * s2).denominator != 1:
                raise ConfigurationError(
                    f"{path}: mode k={list(mode.k)} is not invariant under the shift ({s1}, {s2})"
                )
        modes.append(mode)
    return HDescription(float(fourier.get("constant", 1.0)), tuple(modes))


def _check_grid(grid: int, group: TranslationGroup, path: str) -> None:
    if grid < 2 or grid % 2:
        raise ConfigurationError(f"{path}: grid must be an even positive integer, got {grid}")
    try:
        group.check_grid(grid, grid)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def parse_config(raw: Mapping[str, Any]) -> RunConfig:
    """
    Validate a configuration mapping.

    Raises:
        ConfigurationError: With the key path of the first invalid entry.
    """
    if not isinstance(raw, Mapping):
        raise ConfigurationError("configuration must be a mapping")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown sections {sorted(unknown)}")
    for required in ("group", "h"):
        if required not in raw:
            raise ConfigurationError(f"missing key '{required}'")

    lat = _section(raw, "lattice")
    lattice = TorusLattice(_vector(lat.get("a", (1.0, 0.0)), "lattice.a"),
                           _vector(lat.get("b", (0.0, 1.0)), "lattice.b"))
    group = _parse_group(_section(raw, "group"))
    h = _parse_h(_section(raw, "h"), group)

    solver = _block(SolverBlock, _section(raw, "solver"), "solver", grid=int, tol=float, max_iter=int,
                    seed=int, perturbation=float, epsilon=float, rho=float, force=_flag)
    schedule = _block(ScheduleBlock, _section(raw, "schedule"), "schedule",
                      eps=lambda v: tuple(float(e) for e in v), threshold=float, min_cells=float)
    bubble = _block(BubbleBlock, _section(raw, "bubble"), "bubble", eps=float, grid=int, R=float,
                    R_profile=float, clamp=_flag)
    testfn = _block(TestfnBlock, _section(raw, "testfn"), "testfn", grid=int,
                    eps=lambda v: tuple(float(e) for e in v), support_fraction=float)

    _check_grid(solver.grid, group, "solver.grid")
    _check_grid(bubble.grid, group, "bubble.grid")
    _check_grid(testfn.grid, group, "testfn.grid")

    sample = h.sample(solver.grid, solver.grid, lattice)
    if sample.min() <= 0.0:
        raise ConfigurationError(f"h: weight has a non-positive sample (min {sample.min():.6g})")

    green = _section(raw, "green")
    center = _vector(green["center"], "green.center") if green.get("center") is not None else None
    output = _section(raw, "output")
    cfg = RunConfig(lattice, group, h, solver, schedule, bubble, testfn, center, str(output.get("dir", "runs")))
    logger.debug("loaded configuration %s", cfg.to_dict())
    return cfg


def load_config(path: str) -> RunConfig:
    """
    Read and validate a YAML run configuration.

    Raises:
        ConfigurationError: If the file is missing, is not valid YAML, or fails validation.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML in {path}: {exc}") from exc
    return parse_config(raw or {})
