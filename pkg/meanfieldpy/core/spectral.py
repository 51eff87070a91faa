# core/spectral.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, List, Optional, Tuple, Union

import numpy as np

from .errors import ConfigurationError, PreconditionError
from .torus import Point, TorusLattice

logger = logging.getLogger(__name__)

Number = Union[int, float]


@dataclass(frozen=True, eq=False)
class GridField:
    """
    Real samples of a periodic function at the nodes ``(i/n1, j/n2)`` of the
    fundamental domain, in lattice coordinates.

    The array is copied and made read-only on construction.

    Args:
        values (np.ndarray): Samples of shape (n1, n2); both sizes even.
        lattice (TorusLattice): Torus the field lives on.

    Raises:
        ConfigurationError: If the shape is not an even 2-D grid or a value is not finite.

    Examples:
        >>> GridField.constant(3.0, 4, 4).mean()
        3.0
    """
    values: np.ndarray
    lattice: TorusLattice = field(default_factory=TorusLattice)

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim != 2:
            raise ConfigurationError(f"grid fields are two dimensional, got shape {arr.shape}")
        n1, n2 = arr.shape
        if n1 < 2 or n2 < 2 or n1 % 2 or n2 % 2:
            raise ConfigurationError(f"grid dimensions must be even and positive, got {n1}x{n2}")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("grid field contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, c: Number, n1: int, n2: int, lattice: TorusLattice = None) -> "GridField":
        return cls(np.full((n1, n2), float(c)), lattice or TorusLattice())

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], n1: int, n2: int,
                      lattice: TorusLattice = None, cartesian: bool = False) -> "GridField":
        """
        Sample ``fn`` on the grid.

        Args:
            fn: Vectorized function of two coordinate arrays.
            cartesian (bool): Pass Cartesian coordinates instead of lattice coordinates.
        """
        lattice = lattice or TorusLattice()
        xi1, xi2 = grid_nodes(n1, n2)
        if cartesian:
            xy = lattice.to_cartesian(np.stack([xi1, xi2], axis=-1))
            vals = fn(xy[..., 0], xy[..., 1])
        else:
            vals = fn(xi1, xi2)
        return cls(np.broadcast_to(np.asarray(vals, dtype=float), (n1, n2)), lattice)

    @property
    def n1(self) -> int:
        return self.values.shape[0]

    @property
    def n2(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def cell_weight(self) -> float:
        return self.lattice.volume / (self.n1 * self.n2)

    def with_values(self, values: np.ndarray) -> "GridField":
        return GridField(values, self.lattice)

    def node_point(self, index: Tuple[int, int]) -> Point:
        i, j = index
        return Point.of(i / self.n1, j / self.n2)

    def argmax(self) -> Tuple[int, int]:
        """Index of the largest value, the smallest row-major index on ties."""
        flat = int(np.argmax(self.values))
        return divmod(flat, self.n2)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def max(self) -> float:
        return float(np.max(self.values))

    def min(self) -> float:
        return float(np.min(self.values))

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, GridField):
            if other.shape != self.shape:
                raise ConfigurationError(f"grid mismatch {self.shape} vs {other.shape}")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._coerce(other))

    def __rsub__(self, other):
        return self.with_values(self._coerce(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / self._coerce(other))

    def __neg__(self):
        return self.with_values(-self.values)


def grid_nodes(n1: int, n2: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lattice coordinates of the grid nodes, ``indexing='ij'``."""
    return np.meshgrid(np.arange(n1) / n1, np.arange(n2) / n2, indexing="ij")


@dataclass(frozen=True, eq=False)
class SpectralPlan:
    """
    Symbols of the Fourier operators for one grid and lattice.

    The symbol of Delta_g = -div grad is ``|k|^2 >= 0`` with ``k = 2 pi B^-T m``.
    Mixed terms are dropped on Nyquist rows and columns so that the symbol stays
    even in ``m`` and real fields map to real fields.
    """
    n1: int
    n2: int
    lattice: TorusLattice
    symbol: np.ndarray
    weights: np.ndarray

    @property
    def norm(self) -> float:
        return self.lattice.volume / float(self.n1 * self.n2) ** 2

    def forward(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(values)

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(coeffs, s=(self.n1, self.n2))


@lru_cache(maxsize=32)
def spectral_plan(n1: int, n2: int, lattice: TorusLattice) -> SpectralPlan:
    m = np.fft.fftfreq(n1, d=1.0 / n1)[:, None]
    n = np.fft.rfftfreq(n2, d=1.0 / n2)[None, :]
    g = lattice.metric_inverse
    cross = 2.0 * g[0, 1] * m * n
    cross[n1 // 2, :] = 0.0
    cross[:, n2 // 2] = 0.0
    symbol = 4.0 * math.pi ** 2 * (g[0, 0] * m ** 2 + cross + g[1, 1] * n ** 2)
    symbol[0, 0] = 0.0
    weights = np.full(symbol.shape, 2.0)
    weights[:, 0] = 1.0
    weights[:, n2 // 2] = 1.0
    symbol.flags.writeable = False
    weights.flags.writeable = False
    logger.debug("built spectral plan %dx%d for lattice %s, %s", n1, n2, lattice.basis_a, lattice.basis_b)
    return SpectralPlan(n1, n2, lattice, symbol, weights)


def plan_for(u: GridField) -> SpectralPlan:
    return spectral_plan(u.n1, u.n2, u.lattice)


def laplacian(u: GridField) -> GridField:
    """
    Delta_g u with the geometer sign, so that cos modes have positive eigenvalues.

    Examples:
        >>> u = GridField.from_function(lambda x, y: np.cos(2 * np.pi * x), 8, 8)
        >>> bool(np.allclose(laplacian(u).values, 4 * np.pi ** 2 * u.values))
        True
    """
    plan = plan_for(u)
    return u.with_values(plan.inverse(plan.symbol * plan.forward(u.values)))


def inverse_laplacian(f: GridField, tol: float = 1e-10) -> GridField:
    """
    Mean-zero solution of Delta_g u = f.

    Raises:
        PreconditionError: If ``f`` does not have zero mean.
    """
    mean = f.mean()
    scale = max(1.0, float(np.max(np.abs(f.values))))
    if abs(mean) > tol * scale:
        raise PreconditionError(f"cannot invert the Laplacian of a field with mean {mean:.6e}")
    plan = plan_for(f)
    coeffs = plan.forward(f.values)
    inv = np.zeros_like(plan.symbol)
    np.divide(1.0, plan.symbol, out=inv, where=plan.symbol > 0)
    return f.with_values(plan.inverse(coeffs * inv))


def gradient_inner(u: GridField, v: GridField) -> float:
    """H^1 seminorm inner product, the integral of <grad u, grad v>."""
    plan = plan_for(u)
    if v.shape != u.shape:
        raise ConfigurationError(f"grid mismatch {u.shape} vs {v.shape}")
    uh = plan.forward(u.values)
    vh = plan.forward(v.values)
    return float(plan.norm * np.sum(plan.weights * plan.symbol * np.real(uh * np.conj(vh))))


def dirichlet_energy(u: GridField) -> float:
    """
    Integral of |grad u|^2, computed by Parseval.

    Examples:
        >>> u = GridField.from_function(lambda x, y: np.cos(2 * np.pi * x), 16, 16)
        >>> round(dirichlet_energy(u) / np.pi ** 2, 10)
        2.0
    """
    plan = plan_for(u)
    uh = plan.forward(u.values)
    return float(plan.norm * np.sum(plan.weights * plan.symbol * np.abs(uh) ** 2))


def fd_dirichlet_energy(u: GridField) -> float:
    """
    Dirichlet energy from forward differences, for fields whose gradient has kinks.

    The differences are taken in lattice coordinates and combined with the
    inverse Gram matrix, so the evaluator works on skew lattices too.
    """
    d1 = (np.roll(u.values, -1, axis=0) - u.values) * u.n1
    d2 = (np.roll(u.values, -1, axis=1) - u.values) * u.n2
    g = u.lattice.metric_inverse
    density = g[0, 0] * d1 ** 2 + 2.0 * g[0, 1] * d1 * d2 + g[1, 1] * d2 ** 2
    return float(np.sum(density) * u.cell_weight)


def integrate(u: GridField) -> float:
    return float(np.sum(u.values) * u.cell_weight)


def integrate_weighted(h: GridField, u: GridField) -> float:
    """Integral of h * exp(u)."""
    if h.shape != u.shape:
        raise ConfigurationError(f"grid mismatch {h.shape} vs {u.shape}")
    return float(np.sum(h.values * np.exp(u.values)) * u.cell_weight)


def resample(u: GridField, n1: int, n2: int) -> GridField:
    """
    Trigonometric interpolation of ``u`` onto an n1 x n2 grid.

    Meant for band-limited data such as the weight h; Nyquist modes of the
    source grid are dropped.
    """
    if (n1, n2) == u.shape:
        return u.with_values(u.values)
    src = np.fft.fft2(u.values)
    dst = np.zeros((n1, n2), dtype=complex)
    k1 = min(u.n1, n1) // 2
    k2 = min(u.n2, n2) // 2
    rows = list(range(0, k1)) + list(range(-k1 + 1, 0))
    cols = list(range(0, k2)) + list(range(-k2 + 1, 0))
    dst[np.ix_(rows, cols)] = src[np.ix_(rows, cols)]
    values = np.real(np.fft.ifft2(dst)) * (n1 * n2) / (u.n1 * u.n2)
    return GridField(values, u.lattice)


def chen_diagnostic(u: GridField, ell: int) -> float:
    """
    Integral of exp(4 pi ell u^2 / ||grad u||^2).

    Raises:
        PreconditionError: If ``u`` has zero Dirichlet energy.
    """
    energy = dirichlet_energy(u)
    if not energy > 0.0:
        raise PreconditionError("chen diagnostic needs a field with positive Dirichlet energy")
    exponent = 4.0 * math.pi * ell * u.values ** 2 / energy
    return float(np.sum(np.exp(exponent)) * u.cell_weight)


def chen_scan(fields: Iterable[GridField], ell: int) -> List[float]:
    """Chen diagnostic for each field, in input order."""
    values = [chen_diagnostic(u, ell) for u in fields]
    logger.info("chen scan over %d fields: %s", len(values), ", ".join(f"{v:.6g}" for v in values))
    return values


def random_band_limited(n1: int, n2: int, lattice: TorusLattice = None, modes: int = 4,
                        seed: Optional[int] = 0, amplitude: float = 1.0) -> GridField:
    """Mean-zero trigonometric polynomial with random coefficients for |m|, |n| <= modes."""
    rng = np.random.default_rng(seed)
    coeffs = np.zeros((n1, n2), dtype=complex)
    for m in range(-modes, modes + 1):
        for n in range(-modes, modes + 1):
            if (m, n) == (0, 0):
                continue
            coeffs[m % n1, n % n2] = rng.normal() + 1j * rng.normal()
    values = np.real(np.fft.ifft2(coeffs)) * n1 * n2
    values *= amplitude / max(float(np.max(np.abs(values))), 1e-300)
    return GridField(values, lattice or TorusLattice())
