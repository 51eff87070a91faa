# core/certificates.py
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import ConfigurationError, PreconditionError, ResolutionError
from .green import GreenExpansion, SymmetrizedGreen, fit_expansion
from .spectral import GridField, fd_dirichlet_energy, grid_nodes, integrate, integrate_weighted, resample
from .torus import Point, TranslationGroup, orbit_separation, symmetrize

logger = logging.getLogger(__name__)


def maximizing_point(h: GridField) -> Tuple[Point, Tuple[int, int]]:
    """Node maximizing h, the first in row-major order."""
    index = h.argmax()
    return h.node_point(index), index


def _a_tilde(h: GridField, group: TranslationGroup, point: Point) -> float:
    return SymmetrizedGreen(point, group, h.lattice).tilde_robin


def max_weighted_robin(h: GridField, group: TranslationGroup, a_tilde: Optional[float] = None) -> float:
    """max over x of 2 log(pi ell h(x)) + A~_x; A~ does not depend on x for translation groups."""
    p, index = maximizing_point(h)
    a = _a_tilde(h, group, p) if a_tilde is None else a_tilde
    return 2.0 * math.log(math.pi * group.ell * float(h.values[index])) + a


def lower_bound(h: GridField, group: TranslationGroup, a_tilde: Optional[float] = None) -> float:
    """
    Lower bound for inf J at rho = 8 pi ell when the equation has no solution,
    -4 pi ell max(2 log(pi ell h) + A~) - 8 pi ell.

    Examples:
        >>> from meanfieldpy.core.torus import TranslationGroup
        >>> round(lower_bound(GridField.constant(1.0, 8, 8), TranslationGroup.cyclic(2)), 2)
        6.52
    """
    ell = group.ell
    return -4.0 * math.pi * ell * max_weighted_robin(h, group, a_tilde) - 8.0 * math.pi * ell


@dataclass(frozen=True)
class CertificateReport:
    lower_bound_value: float
    cond_lhs: float
    cond_rhs: float
    cond_holds: bool
    hy2_value: Optional[float] = None
    hy2_holds: Optional[bool] = None
    inputs: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def _h_inputs(h: GridField, group: TranslationGroup, a_tilde: float) -> Dict[str, object]:
    return {
        "ell": group.ell,
        "volume": h.lattice.volume,
        "K": 0.0,
        "h_min": h.min(),
        "h_max": h.max(),
        "h_mean": h.mean(),
        "grid": [h.n1, h.n2],
        "lattice": [list(h.lattice.basis_a), list(h.lattice.basis_b)],
        "shifts": group.as_strings(),
        "A_tilde": a_tilde,
    }


def thm2_certificate(h: GridField, group: TranslationGroup, a_tilde: Optional[float] = None) -> CertificateReport:
    """
    Check log int h > 1 + max(2 log(pi ell h) + A~) / 2.

    Args:
        a_tilde (float, optional): Override of A~, for testing the comparison.
    """
    p, _ = maximizing_point(h)
    a = _a_tilde(h, group, p) if a_tilde is None else a_tilde
    lhs = math.log(integrate(h))
    rhs = 1.0 + 0.5 * max_weighted_robin(h, group, a)
    bound = lower_bound(h, group, a)
    logger.info("integral test: lhs=%.6g rhs=%.6g holds=%s", lhs, rhs, lhs > rhs)
    return CertificateReport(bound, lhs, rhs, lhs > rhs, inputs=_h_inputs(h, group, a))


def thm2_margin_curve(c: float, phi: GridField, eps_values: Sequence[float],
                      group: TranslationGroup) -> List[Dict[str, float]]:
    """lhs - rhs of the integral test for h = c + eps phi."""
    rows = []
    for eps in eps_values:
        report = thm2_certificate(c + eps * phi, group)
        rows.append({"eps": float(eps), "lhs": report.cond_lhs, "rhs": report.cond_rhs,
                     "margin": report.cond_lhs - report.cond_rhs})
    return rows


@dataclass(frozen=True)
class LocalQuadratic:
    """h(p + y) = h_p + k1 y1 + k2 y2 + k3 y1^2 + 2 k4 y1 y2 + k5 y2^2 + O(|y|^3)."""
    h_p: float
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    residual: float

    @property
    def laplacian(self) -> float:
        """Delta_g h(p) = -2 (k3 + k5)."""
        return -2.0 * (self.k3 + self.k5)


def _value_at(h: GridField, p: Point) -> float:
    i = p.coords[0] * h.n1
    j = p.coords[1] * h.n2
    if abs(i - round(i)) < 1e-9 and abs(j - round(j)) < 1e-9:
        return float(h.values[round(i) % h.n1, round(j) % h.n2])
    return float(map_coordinates(h.values, [[i], [j]], order=3, mode="grid-wrap")[0])


def local_quadratic_fit(h: GridField, p: Point, cells: int = 3) -> LocalQuadratic:
    """Least-squares quadratic through the nodes within ``cells`` index steps of p."""
    i0 = round(p.coords[0] * h.n1)
    j0 = round(p.coords[1] * h.n2)
    steps = np.arange(-cells, cells + 1)
    di, dj = np.meshgrid(steps, steps, indexing="ij")
    di, dj = di.ravel(), dj.ravel()
    nodes = np.stack([(i0 + di) / h.n1, (j0 + dj) / h.n2], axis=-1)
    y = h.lattice.minimal_displacement(nodes - p.as_array())
    values = h.values[(i0 + di) % h.n1, (j0 + dj) % h.n2]
    design = np.column_stack([np.ones(len(y)), y[:, 0], y[:, 1],
                              y[:, 0] ** 2, y[:, 0] * y[:, 1], y[:, 1] ** 2])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coef - values) ** 2)))
    return LocalQuadratic(_value_at(h, p), float(coef[1]), float(coef[2]),
                          float(coef[3]), float(coef[4]) / 2.0, float(coef[5]), residual)


def hy2_value(ell: int, volume: float, expansion: GreenExpansion, local: LocalQuadratic,
              curvature: float = 0.0) -> float:
    """8 pi ell / V - 2K + b1^2 + b2^2 - Delta h / h + 2 (k1 b1 + k2 b2) / h at p."""
    b1, b2 = expansion.b1, expansion.b2
    return (8.0 * math.pi * ell / volume - 2.0 * curvature + b1 * b1 + b2 * b2
            - local.laplacian / local.h_p + 2.0 * (local.k1 * b1 + local.k2 * b2) / local.h_p)


def thm3_certificate(h: GridField, group: TranslationGroup, p: Optional[Point] = None,
                     tol: float = 1e-8, expansion: Optional[GreenExpansion] = None) -> CertificateReport:
    """
    Evaluate the local curvature test at the maximizer p of 2 log(pi ell h) + A~.

    Args:
        p (Point, optional): Maximizer; defaults to the first maximizing node.
        tol (float): Relative tolerance of the maximizer check.
        expansion (GreenExpansion, optional): Precomputed Green data at p.

    Raises:
        PreconditionError: If p is not a maximizer within ``tol``.
    """
    if p is None:
        p, _ = maximizing_point(h)
    local = local_quadratic_fit(h, p)
    h_max = h.max()
    if local.h_p < h_max - tol * abs(h_max):
        raise PreconditionError(f"h({p.coords}) = {local.h_p:.10g} is below max h = {h_max:.10g}")
    if expansion is None:
        expansion = fit_expansion(p, group, lattice=h.lattice)
    value = hy2_value(group.ell, h.lattice.volume, expansion, local)
    base = thm2_certificate(h, group, expansion.A_tilde)
    inputs = dict(base.inputs)
    inputs.update({
        "p": list(p.coords),
        "b1": expansion.b1, "b2": expansion.b2,
        "c1": expansion.c1, "c2": expansion.c2, "c3": expansion.c3,
        "fit_residual": expansion.fit_residual,
        "k": [local.k1, local.k2, local.k3, local.k4, local.k5],
        "frame": "lattice-aligned Cartesian",
    })
    logger.info("curvature test at %s: hy2=%.6g", p.coords, value)
    return CertificateReport(base.lower_bound_value, base.cond_lhs, base.cond_rhs, base.cond_holds,
                             value, value > 0.0, inputs)


def thm3_margin_curve(c: float, phi: GridField, eps_values: Sequence[float],
                      group: TranslationGroup) -> List[Dict[str, float]]:
    """Curvature test value for h = c + eps phi."""
    rows = []
    for eps in eps_values:
        report = thm3_certificate(c + eps * phi, group)
        rows.append({"eps": float(eps), "hy2_value": report.hy2_value})
    return rows


def c_star(h: GridField, group: TranslationGroup, a_tilde: Optional[float] = None) -> float:
    """C* = -8 pi ell - 4 pi ell A~_p - 8 pi ell log(pi ell h(p))."""
    ell = group.ell
    p, index = maximizing_point(h)
    a = _a_tilde(h, group, p) if a_tilde is None else a_tilde
    return (-8.0 * math.pi * ell - 4.0 * math.pi * ell * a
            - 8.0 * math.pi * ell * math.log(math.pi * ell * float(h.values[index])))


def test_energy_asymptotic(eps: float, h: GridField, group: TranslationGroup,
                           report: Optional[CertificateReport] = None) -> float:
    """C* - 32 pi ell hy2 eps^2 log(1/eps)."""
    if report is None:
        report = thm3_certificate(h, group)
    gap = -32.0 * math.pi * group.ell * report.hy2_value * eps * eps * math.log(1.0 / eps)
    return c_star(h, group, report.inputs.get("A_tilde")) + gap


def select_R(eps: float) -> float:
    """R with R^4 eps^2 = 1 / log(-log eps), defined for eps < 1/e."""
    if not 0.0 < eps < math.exp(-1.0):
        raise ConfigurationError(f"the radius rule needs 0 < eps < 1/e, got {eps}")
    return (1.0 / (eps * eps * math.log(-math.log(eps)))) ** 0.25


def finite_R_correction(R: float, ell: int) -> float:
    """Energy excess of a bubble cut at radius R in the flat constant-h case."""
    R2 = R * R
    return 8.0 * math.pi * ell * (math.log((R2 + 8.0) / (R2 + 16.0)) + 8.0 / (R2 + 8.0))


def bubble_cap_energy(R: float) -> float:
    """Integral of |grad phi|^2 over the disc of radius R, 16 pi log(1 + R^2/8) - 16 pi R^2 / (R^2 + 8)."""
    R2 = R * R
    return 16.0 * math.pi * math.log1p(R2 / 8.0) - 16.0 * math.pi * R2 / (R2 + 8.0)


def cutoff(s) -> np.ndarray:
    """1 on [0, 1], 0 beyond 2, quintic with vanishing slope and curvature at both ends."""
    t = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


class TestFunction:
    """
    Glued bubble and Green function phi_eps concentrated on the orbit of p.

    Inside B_{R eps}: c - 2 log(1 + r^2 / (8 eps^2)) + A~ + alpha(y).
    On the annulus up to 2 R eps: G~ - eta(r / (R eps)) beta(y) with
    beta = G~ + 4 log r - A~ - alpha. Outside: G~.

    Args:
        eps (float): Bubble scale.
        h (GridField): Positive invariant weight; p is its first maximizing node.
        group (TranslationGroup): Symmetry group.
        support_fraction (float): 2 R eps is kept below this share of
            min(half the orbit separation, injectivity radius).
        min_cells (float): Required number of grid cells across R eps.
        grid (Tuple[int, int], optional): Sampling grid, defaults to h's grid.

    Raises:
        ConfigurationError: If the radius rule is undefined for eps.
        ResolutionError: If R eps spans fewer than ``min_cells`` cells.
    """
    __test__ = False

    def __init__(self, eps: float, h: GridField, group: TranslationGroup, support_fraction: float = 0.95,
                 min_cells: float = 8.0, grid: Optional[Tuple[int, int]] = None,
                 expansion: Optional[GreenExpansion] = None):
        self.eps = float(eps)
        self.group = group
        self.lattice = h.lattice
        self.grid = tuple(grid) if grid is not None else h.shape
        self.p, _ = maximizing_point(h)
        self.green = SymmetrizedGreen(self.p, group, self.lattice)
        self.expansion = expansion or fit_expansion(self.p, group, lattice=self.lattice)
        self.a_tilde = self.green.tilde_robin

        self.R_rule = select_R(self.eps)
        limit = support_fraction * min(0.5 * orbit_separation(self.p, group, self.lattice),
                                       self.lattice.injectivity_radius) / (2.0 * self.eps)
        self.R_clamped = self.R_rule > limit
        self.R = min(self.R_rule, limit)
        if self.R_clamped:
            logger.warning("eps=%g: R=%.4f from the radius rule clamped to %.4f", self.eps, self.R_rule, self.R)
        self.radius = self.R * self.eps
        cells = self.radius / self.lattice.cell_size(*self.grid)
        if cells < min_cells:
            raise ResolutionError(f"R eps = {self.radius:.4g} spans {cells:.2f} cells, need {min_cells}")
        self.c = 2.0 * math.log1p(self.R * self.R / 8.0) - 4.0 * math.log(self.radius)

    def alpha(self, y: np.ndarray) -> np.ndarray:
        e = self.expansion
        return (e.b1 * y[..., 0] + e.b2 * y[..., 1] + e.c1 * y[..., 0] ** 2
                + 2.0 * e.c2 * y[..., 0] * y[..., 1] + e.c3 * y[..., 1] ** 2)

    def cap(self, y: np.ndarray) -> np.ndarray:
        r2 = y[..., 0] ** 2 + y[..., 1] ** 2
        return self.c - 2.0 * np.log1p(r2 / (8.0 * self.eps ** 2)) + self.a_tilde + self.alpha(y)

    def glued(self, points: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Annulus formula at lattice points with displacement y from the nearest pole."""
        r = np.hypot(y[..., 0], y[..., 1])
        g = self.green(points)
        beta = g + 4.0 * np.log(r) - self.a_tilde - self.alpha(y)
        return g - cutoff(r / self.radius) * beta

    def _nearest_pole(self, points: np.ndarray) -> np.ndarray:
        best = None
        best_r = None
        for pole in self.green.centers:
            y = self.lattice.minimal_displacement(points - pole.as_array())
            r = np.hypot(y[..., 0], y[..., 1])
            if best is None:
                best, best_r = y, r
            else:
                closer = r < best_r
                best = np.where(closer[..., None], y, best)
                best_r = np.where(closer, r, best_r)
        return best

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        y = self._nearest_pole(pts)
        r = np.hypot(y[..., 0], y[..., 1])
        out = np.empty(pts.shape[:-1])
        inside = r < self.radius
        out[inside] = self.cap(y[inside])
        ring = ~inside & (r < 2.0 * self.radius)
        out[ring] = self.glued(pts[ring], y[ring])
        far = ~inside & ~ring
        out[far] = self.green(pts[far])
        return out

    def sample(self) -> GridField:
        """Samples on the grid, symmetrized so that the field is exactly invariant."""
        n1, n2 = self.grid
        xi1, xi2 = grid_nodes(n1, n2)
        field_ = GridField(self(np.stack([xi1, xi2], axis=-1)), self.lattice)
        return symmetrize(field_, self.group)

    def interface_jump(self, n_angles: int = 64) -> float:
        """Largest difference between the cap and the annulus formula on r = R eps."""
        theta = np.arange(n_angles) * (2.0 * math.pi / n_angles)
        y = self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        pts = self.p.as_array() + self.lattice.to_lattice(y)
        return float(np.max(np.abs(self.cap(y) - self.glued(pts, y))))

    def describe(self) -> Dict[str, object]:
        return {"eps": self.eps, "R": self.R, "R_rule": self.R_rule, "R_clamped": self.R_clamped,
                "c": self.c, "p": list(self.p.coords), "A_tilde": self.a_tilde}


def build_test_function(eps: float, h: GridField, group: TranslationGroup,
                        grid: Optional[Tuple[int, int]] = None, **kwargs) -> GridField:
    """Sampled test function phi_eps; see ``TestFunction`` for the construction."""
    return TestFunction(eps, h, group, grid=grid, **kwargs).sample()


@dataclass(frozen=True)
class TestFunctionFamily:
    """Test functions for a schedule of eps sharing p and the Green data."""
    __test__ = False

    p: Point
    eps_list: Tuple[float, ...]
    functions: Tuple[TestFunction, ...]

    @classmethod
    def build(cls, eps_list: Sequence[float], h: GridField, group: TranslationGroup,
              grid: Optional[Tuple[int, int]] = None, **kwargs) -> "TestFunctionFamily":
        p, _ = maximizing_point(h)
        expansion = fit_expansion(p, group, lattice=h.lattice)
        funcs = tuple(TestFunction(e, h, group, grid=grid, expansion=expansion, **kwargs) for e in eps_list)
        return cls(p, tuple(float(e) for e in eps_list), funcs)

    def fields(self) -> List[GridField]:
        return [f.sample() for f in self.functions]


@dataclass(frozen=True)
class TestEnergyRow:
    __test__ = False

    eps: float
    R: float
    R_clamped: bool
    J_numeric: float
    C_star: float
    gap_numeric: float
    gap_asymptotic: float
    finite_R: float
    gap_corrected: float

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def functional_critical(phi: GridField, h: GridField, ell: int) -> float:
    """J_{8 pi ell}(phi - mean phi) with the finite difference energy."""
    rho = 8.0 * math.pi * ell
    mean = integrate(phi) / phi.lattice.volume
    return 0.5 * fd_dirichlet_energy(phi) - rho * math.log(integrate_weighted(h, phi)) + rho * mean


def test_energy_numeric(eps_list: Sequence[float], h: GridField, group: TranslationGroup,
                        grid: Optional[Tuple[int, int]] = None, **kwargs) -> List[TestEnergyRow]:
    """
    Critical energy of the test functions next to C* and the asymptotic prediction.

    ``h`` is resampled to ``grid`` when the grids differ. ``gap_corrected`` is
    J - C* minus ``finite_R_correction`` of the radius actually used.
    """
    family = TestFunctionFamily.build(eps_list, h, group, grid=grid, **kwargs)
    n1, n2 = grid if grid is not None else h.shape
    h_grid = resample(h, n1, n2)
    report = thm3_certificate(h, group, expansion=family.functions[0].expansion)
    cs = c_star(h, group, report.inputs["A_tilde"])
    rows = []
    for fn in family.functions:
        J = functional_critical(fn.sample(), h_grid, group.ell)
        asym = test_energy_asymptotic(fn.eps, h, group, report)
        offset = finite_R_correction(fn.R, group.ell)
        row = TestEnergyRow(fn.eps, fn.R, fn.R_clamped, J, cs, J - cs, asym - cs, offset, J - cs - offset)
        logger.info("eps=%g R=%.4f J=%.6f C*=%.6f gap=%.6f corrected=%.6f asymptotic gap=%.6f", fn.eps, fn.R,
                    J, cs, J - cs, row.gap_corrected, asym - cs)
        rows.append(row)
    return rows


test_energy_numeric.__test__ = False
test_energy_asymptotic.__test__ = False
