# core/torus.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import TYPE_CHECKING, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError

if TYPE_CHECKING:
    from .spectral import GridField

logger = logging.getLogger(__name__)

Shift = Tuple[Fraction, Fraction]


def _gauss_reduce(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    u, v = np.array(a, dtype=float), np.array(b, dtype=float)
    if u @ u > v @ v:
        u, v = v, u
    while True:
        m = round(float(u @ v) / float(u @ u))
        v = v - m * u
        if v @ v >= u @ u:
            return u, v
        u, v = v, u


@dataclass(frozen=True)
class TorusLattice:
    """
    A flat torus R^2 / (Z a + Z b).

    Points are stored in lattice coordinates xi in [0, 1)^2; the Cartesian
    position is ``xi1 * a + xi2 * b``.

    Args:
        basis_a (Tuple[float, float]): First lattice generator.
        basis_b (Tuple[float, float]): Second lattice generator.

    Raises:
        ConfigurationError: If the generators are linearly dependent.

    Examples:
        >>> TorusLattice().volume
        1.0
    """
    basis_a: Tuple[float, float] = (1.0, 0.0)
    basis_b: Tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "basis_a", tuple(float(c) for c in self.basis_a))
        object.__setattr__(self, "basis_b", tuple(float(c) for c in self.basis_b))
        if len(self.basis_a) != 2 or len(self.basis_b) != 2:
            raise ConfigurationError("lattice generators must be 2-vectors")
        if not math.isfinite(self.volume) or self.volume <= 1e-14:
            raise ConfigurationError(
                f"lattice generators {self.basis_a}, {self.basis_b} are degenerate"
            )

    @property
    def matrix(self) -> np.ndarray:
        """Matrix B whose columns are a and b, so that x = B @ xi."""
        return np.array([[self.basis_a[0], self.basis_b[0]],
                         [self.basis_a[1], self.basis_b[1]]])

    @property
    def volume(self) -> float:
        a1, a2 = self.basis_a
        b1, b2 = self.basis_b
        return abs(a1 * b2 - a2 * b1)

    @property
    def metric_inverse(self) -> np.ndarray:
        """Inverse Gram matrix (B^T B)^-1, used for gradients in lattice coordinates."""
        B = self.matrix
        return np.linalg.inv(B.T @ B)

    def to_cartesian(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.matrix.T

    def to_lattice(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ np.linalg.inv(self.matrix).T

    @cached_property
    def reduced_basis(self) -> Tuple[np.ndarray, np.ndarray]:
        """Lagrange-Gauss reduced generators (u, v) with |u| <= |v| and u.v >= 0."""
        u, v = _gauss_reduce(np.array(self.basis_a), np.array(self.basis_b))
        if u @ v < 0:
            v = -v
        return u, v

    @property
    def shortest_vector(self) -> float:
        return float(np.linalg.norm(self.reduced_basis[0]))

    @property
    def injectivity_radius(self) -> float:
        return 0.5 * self.shortest_vector

    @property
    def diameter(self) -> float:
        """Largest geodesic distance from a point, the circumradius of the Voronoi cell."""
        u, v = self.reduced_basis
        area = abs(u[0] * v[1] - u[1] * v[0])
        return float(np.linalg.norm(u) * np.linalg.norm(v) * np.linalg.norm(u - v) / (2.0 * area))

    def cell_size(self, n1: int, n2: int) -> float:
        """Smallest spacing between neighbouring nodes of an n1 x n2 grid."""
        return min(math.hypot(*self.basis_a) / n1, math.hypot(*self.basis_b) / n2)

    def minimal_displacement(self, delta) -> np.ndarray:
        """
        Shortest Cartesian representative of lattice-coordinate differences.

        Args:
            delta: Array of shape (..., 2) with differences in lattice coordinates.

        Returns:
            np.ndarray: Cartesian vectors of shape (..., 2).
        """
        d = np.asarray(delta, dtype=float)
        d = d - np.round(d)
        best = self.to_cartesian(d)
        best_norm = np.einsum("...i,...i->...", best, best)
        for i, j in product((-1.0, 0.0, 1.0), repeat=2):
            if i == 0.0 and j == 0.0:
                continue
            cand = self.to_cartesian(d + np.array([i, j]))
            norm = np.einsum("...i,...i->...", cand, cand)
            closer = norm < best_norm
            best = np.where(closer[..., None], cand, best)
            best_norm = np.where(closer, norm, best_norm)
        return best


def _reduce_unit(c: float) -> float:
    r = float(c) % 1.0
    return 0.0 if r >= 1.0 else r


@dataclass(frozen=True)
class Point:
    """A point of the torus in lattice coordinates reduced to [0, 1)^2."""
    coords: Tuple[float, float]

    def __post_init__(self):
        if len(self.coords) != 2:
            raise ConfigurationError("a torus point has two coordinates")
        object.__setattr__(self, "coords", (_reduce_unit(self.coords[0]), _reduce_unit(self.coords[1])))

    @classmethod
    def of(cls, x1: float, x2: float) -> "Point":
        return cls((x1, x2))

    def shifted(self, shift: Shift) -> "Point":
        return Point((self.coords[0] + float(shift[0]), self.coords[1] + float(shift[1])))

    def as_array(self) -> np.ndarray:
        return np.array(self.coords, dtype=float)


def _as_shift(value) -> Shift:
    s1, s2 = value
    return (Fraction(s1) % 1, Fraction(s2) % 1)


@dataclass(frozen=True)
class TranslationGroup:
    """
    A finite group of torus translations acting freely.

    The first element is always the identity. Shifts are exact fractions in
    lattice coordinates, so grid compatibility can be decided exactly.

    Examples:
        >>> TranslationGroup.cyclic(2).ell
        2
        >>> TranslationGroup.from_strings([["0", "0"], ["1/2", "0"]]).order
        2
    """
    shifts: Tuple[Shift, ...] = ((Fraction(0), Fraction(0)),)

    def __post_init__(self):
        shifts = tuple(_as_shift(s) for s in self.shifts)
        if not shifts or shifts[0] != (0, 0):
            raise ConfigurationError("the first group element must be the identity shift (0, 0)")
        if len(set(shifts)) != len(shifts):
            raise ConfigurationError(f"duplicate shifts in translation group {shifts}")
        members = set(shifts)
        for s, t in product(shifts, repeat=2):
            total = ((s[0] + t[0]) % 1, (s[1] + t[1]) % 1)
            if total not in members:
                raise ConfigurationError(
                    f"shifts are not closed under addition: {s} + {t} = {total} is missing"
                )
        object.__setattr__(self, "shifts", shifts)

    @classmethod
    def identity(cls) -> "TranslationGroup":
        return cls()

    @classmethod
    def cyclic(cls, order: int, axis: str = "a", generator: Sequence = None) -> "TranslationGroup":
        """
        Cyclic group generated by a single shift.

        Args:
            order (int): Number of elements.
            axis (str): ``"a"`` or ``"b"``, the generator translated by 1/order.
            generator (Sequence, optional): Explicit generating shift, overrides ``axis``.

        Raises:
            ConfigurationError: If ``order`` is not positive or the generator
                does not have the requested order.
        """
        if order < 1:
            raise ConfigurationError(f"group order must be positive, got {order}")
        if generator is not None:
            gen = _as_shift(generator)
        elif axis == "a":
            gen = (Fraction(1, order), Fraction(0))
        elif axis == "b":
            gen = (Fraction(0), Fraction(1, order))
        else:
            raise ConfigurationError(f"unknown axis {axis!r}, expected 'a' or 'b'")
        shifts = tuple(((k * gen[0]) % 1, (k * gen[1]) % 1) for k in range(order))
        return cls(shifts)

    @classmethod
    def generated(cls, generators: Iterable[Sequence]) -> "TranslationGroup":
        """Smallest translation group containing the given shifts."""
        gens = [_as_shift(g) for g in generators]
        elements: List[Shift] = [(Fraction(0), Fraction(0))]
        frontier = list(elements)
        while frontier:
            new = []
            for s in frontier:
                for g in gens:
                    t = ((s[0] + g[0]) % 1, (s[1] + g[1]) % 1)
                    if t not in elements:
                        elements.append(t)
                        new.append(t)
            frontier = new
        return cls(tuple(elements))

    @classmethod
    def from_strings(cls, shifts: Iterable[Sequence[str]]) -> "TranslationGroup":
        return cls(tuple((Fraction(str(s1)), Fraction(str(s2))) for s1, s2 in shifts))

    @property
    def order(self) -> int:
        return len(self.shifts)

    @property
    def ell(self) -> int:
        return self.order

    def as_strings(self) -> List[List[str]]:
        return [[str(s1), str(s2)] for s1, s2 in self.shifts]

    def check_grid(self, n1: int, n2: int) -> None:
        """
        Raises:
            ConfigurationError: If some shift does not map grid nodes to grid nodes.
        """
        for s1, s2 in self.shifts:
            if (s1 * n1).denominator != 1 or (s2 * n2).denominator != 1:
                raise ConfigurationError(
                    f"grid {n1}x{n2} is incompatible with shift ({s1}, {s2})"
                )

    def grid_offsets(self, n1: int, n2: int) -> List[Tuple[int, int]]:
        self.check_grid(n1, n2)
        return [(int(s1 * n1), int(s2 * n2)) for s1, s2 in self.shifts]


def orbit(x: Point, group: TranslationGroup) -> List[Point]:
    """Orbit of ``x`` in group order, starting with ``x`` itself."""
    return [x.shifted(s) for s in group.shifts]


def geodesic_distance(x: Point, y: Point, lattice: TorusLattice) -> float:
    d = lattice.minimal_displacement(y.as_array() - x.as_array())
    return float(np.hypot(d[0], d[1]))


def orbit_separation(x: Point, group: TranslationGroup, lattice: TorusLattice) -> float:
    """Smallest distance between two distinct orbit points, infinite for the trivial group."""
    points = orbit(x, group)
    sep = math.inf
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            sep = min(sep, geodesic_distance(points[i], points[j], lattice))
    return sep


def delta(x: Point, group: TranslationGroup, lattice: TorusLattice) -> float:
    """
    Quarter of the smaller of the injectivity radius and the orbit separation.

    Examples:
        >>> delta(Point.of(0.0, 0.0), TranslationGroup.cyclic(2), TorusLattice())
        0.125
    """
    return 0.25 * min(lattice.injectivity_radius, orbit_separation(x, group, lattice))


def symmetrize(u: "GridField", group: TranslationGroup) -> "GridField":
    """
    Average of ``u`` over the group.

    The orbit values at each node are sorted before summation, so every node
    of an orbit receives bitwise the same value and the result is exactly
    invariant. Nodes whose orbit values already agree keep their value, which
    makes the operation exactly idempotent.

    Raises:
        ConfigurationError: If the grid is incompatible with the group.
    """
    offsets = group.grid_offsets(u.n1, u.n2)
    if len(offsets) == 1:
        return u.with_values(u.values)
    stack = np.stack([np.roll(u.values, shift=(-o1, -o2), axis=(0, 1)) for o1, o2 in offsets])
    stack = np.sort(stack, axis=0)
    averaged = stack.sum(axis=0) / len(offsets)
    values = np.where(stack[-1] == stack[0], stack[0], averaged)
    return u.with_values(values)


def project_H_G(u: "GridField", group: TranslationGroup) -> "GridField":
    """Projection onto invariant fields with zero mean."""
    s = symmetrize(u, group)
    return s.with_values(s.values - s.mean())


def invariance_defect(u: "GridField", group: TranslationGroup) -> float:
    """Largest change of ``u`` under a group translation."""
    defect = 0.0
    for o1, o2 in group.grid_offsets(u.n1, u.n2):
        rolled = np.roll(u.values, shift=(-o1, -o2), axis=(0, 1))
        defect = max(defect, float(np.max(np.abs(rolled - u.values))))
    return defect
