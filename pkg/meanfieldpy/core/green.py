# core/green.py
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from .errors import ConfigurationError, ResolutionError, SingularityError
from .spectral import GridField, grid_nodes
from .torus import Point, TorusLattice, TranslationGroup, delta, orbit, orbit_separation

logger = logging.getLogger(__name__)

N_MAX = 24
FIT_TOLERANCE = 1e-3
ROBIN_FIT_TOLERANCE = 1e-3


class LambdaSeries:
    """
    Green function of the torus C / (Z + tau Z), mean zero and normalized by
    Delta_g G = 8 pi delta_0 - 8 pi / Im(tau).

    The product expansion is summed in closed form for the leading factor and
    with ``n_max`` terms for each of the two tails. Arguments are reduced to
    the half cell ``t in [0, 1/2]`` first, where both tails converge
    geometrically.

    Args:
        tau (complex): Modular parameter with positive imaginary part.
        n_max (int): Number of tail terms.
    """
    def __init__(self, tau: complex = 1j, n_max: int = N_MAX):
        if tau.imag <= 0:
            raise ConfigurationError(f"modular parameter must lie in the upper half plane, got {tau}")
        if n_max < 1:
            raise ConfigurationError(f"n_max must be positive, got {n_max}")
        self.tau = complex(tau)
        self.n_max = int(n_max)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        tr, ti = self.tau.real, self.tau.imag
        t = z.imag / ti
        s = z.real - t * tr
        s = s - np.round(s)
        t = t - np.round(t)
        flip = t < 0
        s = np.where(flip, -s, s)
        t = np.where(flip, -t, t)
        if np.any((s == 0.0) & (t == 0.0)):
            raise SingularityError("Green function evaluated at a lattice point")
        x = s + t * tr
        y = t * ti

        ey = np.exp(-2.0 * math.pi * y)
        lead = np.expm1(-2.0 * math.pi * y) ** 2 + 4.0 * ey * np.sin(math.pi * x) ** 2
        value = (4.0 * math.pi / ti) * y ** 2 - 4.0 * math.pi * y + (2.0 * math.pi / 3.0) * ti
        value = value - 2.0 * np.log(lead)
        for n in range(1, self.n_max + 1):
            rn = math.exp(-2.0 * math.pi * n * ti)
            phase = 2.0 * math.pi * n * tr
            a = rn * ey
            b = rn / ey
            value = value - 2.0 * np.log1p(a * a - 2.0 * a * np.cos(phase + 2.0 * math.pi * x))
            value = value - 2.0 * np.log1p(b * b - 2.0 * b * np.cos(phase - 2.0 * math.pi * x))
        return value

    @cached_property
    def robin(self) -> float:
        """Limit of G(z) + 4 log|z| as z tends to 0."""
        tr, ti = self.tau.real, self.tau.imag
        total = -4.0 * math.log(2.0 * math.pi) + (2.0 * math.pi / 3.0) * ti
        for n in range(1, self.n_max + 1):
            rn = math.exp(-2.0 * math.pi * n * ti)
            total -= 4.0 * math.log1p(rn * rn - 2.0 * rn * math.cos(2.0 * math.pi * n * tr))
        return total


def lambda_eval(x, n_max: int = N_MAX) -> np.ndarray:
    """
    Green function of the unit square torus at lattice-coordinate displacement ``x``.

    Args:
        x: Array of shape (..., 2).
        n_max (int): Number of tail terms of each series.

    Raises:
        SingularityError: If some ``x`` is an exact lattice point.

    Examples:
        >>> round(float(lambda_eval((0.5, 0.0))), 6)
        -0.693147
    """
    x = np.asarray(x, dtype=float)
    return LambdaSeries(1j, n_max)(x[..., 0] + 1j * x[..., 1])


def robin_constant_AP(n_max: int = N_MAX) -> float:
    """Robin constant of the unit square torus, about -5.242132."""
    return LambdaSeries(1j, n_max).robin


def lambda_half_period(n_max: int = N_MAX) -> float:
    """Closed form of the unit square Green function at (1/2, 0)."""
    total = 2.0 * math.pi / 3.0 - 4.0 * math.log(2.0)
    for n in range(1, n_max + 1):
        total -= 8.0 * math.log1p(math.exp(-2.0 * math.pi * n))
    return total


def tilde_robin_AP(n_max: int = N_MAX) -> float:
    """Robin constant of the half-shift symmetrized Green function on the unit square."""
    return robin_constant_AP(n_max) + lambda_half_period(n_max)


class TorusGreen:
    """
    Green function G(x, y) = G(y - x) of an arbitrary flat torus.

    The lattice is Gauss reduced and rotated onto C / omega (Z + tau Z). The
    normalization is scale free, so ``G = LambdaSeries(tau)`` in the rotated
    coordinate and only the Robin constant picks up ``4 log|omega|``.
    """
    def __init__(self, lattice: TorusLattice = None, n_max: int = N_MAX):
        self.lattice = lattice or TorusLattice()
        u, v = self.lattice.reduced_basis
        omega = complex(u[0], u[1])
        tau = complex(v[0], v[1]) / omega
        self._conjugate = tau.imag < 0
        if self._conjugate:
            tau = tau.conjugate()
        self.omega = omega
        self.series = LambdaSeries(tau, n_max)

    def __call__(self, displacement) -> np.ndarray:
        """Evaluate at lattice-coordinate displacements of shape (..., 2)."""
        cart = self.lattice.to_cartesian(displacement)
        z = (cart[..., 0] + 1j * cart[..., 1]) / self.omega
        if self._conjugate:
            z = np.conj(z)
        return self.series(z)

    @property
    def robin(self) -> float:
        return self.series.robin + 4.0 * math.log(abs(self.omega))


def green_pair(p: Point, q: Point, lattice: TorusLattice = None, n_max: int = N_MAX) -> float:
    """
    G(P, Q) on the torus.

    Raises:
        SingularityError: If ``p == q``.
    """
    kernel = TorusGreen(lattice, n_max)
    return float(kernel(q.as_array() - p.as_array()))


def smooth_cutoff(s) -> np.ndarray:
    """C-infinity cutoff equal to 1 on [0, 1/2] and 0 on [1, inf)."""
    t = np.clip(2.0 * np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)

    def psi(v):
        return np.where(v > 0.0, np.exp(-1.0 / np.maximum(v, 1e-300)), 0.0)

    a = psi(1.0 - t)
    return a / (a + psi(t))


class SymmetrizedGreen:
    """
    Sum of the Green functions with poles on the orbit of ``x``.

    Examples:
        >>> g = SymmetrizedGreen(Point.of(0.0, 0.0), TranslationGroup.cyclic(2))
        >>> round(g.tilde_robin, 4)
        -5.9353
    """
    def __init__(self, x: Point, group: TranslationGroup, lattice: TorusLattice = None,
                 n_max: int = N_MAX):
        self.center = x
        self.group = group
        self.lattice = lattice or TorusLattice()
        self.kernel = TorusGreen(self.lattice, n_max)
        self.centers = orbit(x, group)
        self._poles = np.array([p.coords for p in self.centers])

    @property
    def ell(self) -> int:
        return self.group.order

    def __call__(self, points) -> np.ndarray:
        """
        Evaluate at lattice-coordinate points of shape (..., 2).

        Raises:
            SingularityError: If a point coincides with an orbit point.
        """
        pts = np.asarray(points, dtype=float)
        total = np.zeros(pts.shape[:-1])
        for pole in self._poles:
            total = total + self.kernel(pts - pole)
        return total

    def at(self, y: Point) -> float:
        return float(self(y.as_array()))

    def sample(self, n1: int, n2: int) -> GridField:
        xi1, xi2 = grid_nodes(n1, n2)
        return GridField(self(np.stack([xi1, xi2], axis=-1)), self.lattice)

    @cached_property
    def delta(self) -> float:
        return delta(self.center, self.group, self.lattice)

    @cached_property
    def tilde_robin(self) -> float:
        """A plus the Green function between ``x`` and each other orbit point."""
        others = self._poles[1:] - self._poles[0]
        value = self.kernel.robin
        if len(others):
            value += float(np.sum(self.kernel(others)))
        return value

    def pole_distances(self, points) -> np.ndarray:
        """Distances to every orbit point, shape (ell, ...)."""
        pts = np.asarray(points, dtype=float)
        return np.stack([np.linalg.norm(self.lattice.minimal_displacement(pts - pole), axis=-1)
                         for pole in self._poles])

    def regular_part(self, points, r0: float) -> np.ndarray:
        """
        G~ + 4 sum_i chi(r_i / r0) log r_i, a smooth function equal to A~ at every pole.

        Args:
            points: Lattice coordinates of shape (..., 2).
            r0 (float): Cutoff radius, at most half the orbit separation.
        """
        pts = np.asarray(points, dtype=float)
        dist = self.pole_distances(pts)
        at_pole = np.any(dist == 0.0, axis=0)
        out = np.full(pts.shape[:-1], self.tilde_robin)
        free = ~at_pole
        if np.any(free):
            d = dist[:, free]
            out[free] = self(pts[free]) + 4.0 * np.sum(smooth_cutoff(d / r0) * np.log(d), axis=0)
        return out

    def default_cutoff(self, n1: int, n2: int) -> float:
        return max(4.0 * self.lattice.cell_size(n1, n2), self.delta)

    def integral(self, n1: int, n2: int, r0: Optional[float] = None) -> float:
        """
        Integral of G~ over the torus, exact in the logarithmic singularities.

        The regular part is summed with the rectangle rule; the removed
        ``-4 chi log r`` pieces are integrated radially.

        Raises:
            ResolutionError: If the cutoff disc would reach another pole.
        """
        r0 = self.default_cutoff(n1, n2) if r0 is None else r0
        if r0 > 0.5 * min(self.lattice.injectivity_radius,
                          orbit_separation(self.center, self.group, self.lattice)):
            raise ResolutionError(f"cutoff radius {r0:.4g} reaches another singular point; refine the grid")
        xi1, xi2 = grid_nodes(n1, n2)
        regular = self.regular_part(np.stack([xi1, xi2], axis=-1), r0)
        regular_sum = float(np.sum(regular)) * self.lattice.volume / (n1 * n2)
        radial, _ = quad(lambda r: float(smooth_cutoff(r / r0)) * (-4.0 * math.log(r)) * r,
                         0.0, r0, limit=200)
        return regular_sum + self.ell * 2.0 * math.pi * radial

    def mean(self, n1: int, n2: int, r0: Optional[float] = None) -> float:
        return self.integral(n1, n2, r0) / self.lattice.volume


def symmetrized_green(x: Point, group: TranslationGroup, lattice: TorusLattice = None,
                      n_max: int = N_MAX) -> SymmetrizedGreen:
    return SymmetrizedGreen(x, group, lattice, n_max)


def tilde_robin(x: Point, group: TranslationGroup, lattice: TorusLattice = None,
                n_max: int = N_MAX) -> float:
    return SymmetrizedGreen(x, group, lattice, n_max).tilde_robin


def robin_spread(group: TranslationGroup, lattice: TorusLattice = None,
                 points: Sequence[Point] = None) -> float:
    """Largest difference of A~ over sample points; zero up to round-off for translation groups."""
    points = points or [Point.of(0.0, 0.0), Point.of(0.1, 0.2), Point.of(0.37, 0.81)]
    values = [tilde_robin(p, group, lattice) for p in points]
    return max(values) - min(values)


@dataclass(frozen=True)
class GreenExpansion:
    """
    Local data of G~ at a pole:
    G~(p + y) = -4 log|y| + A~ + b1 y1 + b2 y2 + c1 y1^2 + 2 c2 y1 y2 + c3 y2^2 + O(|y|^3).
    """
    center: Tuple[float, float]
    A_tilde: float
    A_fit: float
    b1: float
    b2: float
    c1: float
    c2: float
    c3: float
    fit_residual: float
    annulus: Tuple[float, float]
    usable: bool

    def lemma_target(self, ell: int, volume: float, curvature: float = 0.0) -> float:
        """Value that c1 + c3 must take, 4 pi ell / V - 2K/3."""
        return 4.0 * math.pi * ell / volume - 2.0 * curvature / 3.0

    def trace(self) -> float:
        return self.c1 + self.c3

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data["center"] = list(self.center)
        data["annulus"] = list(self.annulus)
        return data


def fit_expansion(x: Point, group: TranslationGroup, annulus: Optional[Tuple[float, float]] = None,
                  lattice: TorusLattice = None, n_radii: int = 16, n_angles: int = 64,
                  fit_tol: float = FIT_TOLERANCE, robin_tol: float = ROBIN_FIT_TOLERANCE,
                  n_max: int = N_MAX) -> GreenExpansion:
    """
    Least-squares fit of the quadratic expansion of G~ + 4 log|y| on an annulus.

    A~ is the analytic value. The constant coefficient of the fit is kept as
    ``A_fit``; the fit is usable only when its residual is below ``fit_tol``
    and A_fit agrees with A~ within ``robin_tol``.

    Args:
        x (Point): Pole of the symmetrized Green function.
        group (TranslationGroup): Symmetry group.
        annulus (Tuple[float, float], optional): Radii (r_in, r_out) with
            0 < r_in < r_out < delta; defaults to (0.16 delta, 0.64 delta).
        robin_tol (float): Allowed distance between A_fit and A~.

    Returns:
        GreenExpansion: Fitted coefficients, RMS residual and a usability flag.

    Raises:
        ConfigurationError: If the annulus is empty or reaches delta.
    """
    green = SymmetrizedGreen(x, group, lattice, n_max)
    d = green.delta
    r_in, r_out = annulus if annulus is not None else (0.16 * d, 0.64 * d)
    if not (0.0 < r_in < r_out < d):
        raise ConfigurationError(
            f"annulus ({r_in}, {r_out}) must satisfy 0 < r_in < r_out < delta = {d:.6g}"
        )
    radii = np.linspace(r_in, r_out, n_radii)
    angles = np.arange(n_angles) * (2.0 * math.pi / n_angles)
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    y = np.stack([rr * np.cos(aa), rr * np.sin(aa)], axis=-1).reshape(-1, 2)
    pts = x.as_array() + green.lattice.to_lattice(y)
    r = np.hypot(y[:, 0], y[:, 1])
    data = green(pts) + 4.0 * np.log(r)
    design = np.column_stack([np.ones_like(r), y[:, 0], y[:, 1],
                              y[:, 0] ** 2, y[:, 0] * y[:, 1], y[:, 1] ** 2])
    coef, *_ = np.linalg.lstsq(design, data, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coef - data) ** 2)))
    a_fit = float(coef[0])
    a_tilde = green.tilde_robin
    usable = residual < fit_tol and abs(a_fit - a_tilde) <= robin_tol
    if residual >= fit_tol:
        logger.warning("expansion fit at %s has residual %.3e above %.1e", x.coords, residual, fit_tol)
    if abs(a_fit - a_tilde) > robin_tol:
        logger.warning("fitted constant %.8g at %s is off A~ = %.8g by more than %.1e",
                       a_fit, x.coords, a_tilde, robin_tol)
    return GreenExpansion(
        center=x.coords,
        A_tilde=a_tilde,
        A_fit=a_fit,
        b1=float(coef[1]),
        b2=float(coef[2]),
        c1=float(coef[3]),
        c2=float(coef[4]) / 2.0,
        c3=float(coef[5]),
        fit_residual=residual,
        annulus=(float(r_in), float(r_out)),
        usable=usable,
    )


@dataclass(frozen=True)
class BoundChain:
    """An exact constant next to the elementary upper bound that replaces it."""
    name: str
    exact: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.exact <= self.bound

    def to_dict(self) -> Dict[str, object]:
        return {"name": self.name, "exact": self.exact, "bound": self.bound, "holds": self.holds}


def bound_chain_robin(n_max: int = N_MAX) -> BoundChain:
    """A_P + 2 + 2 log pi against 2 - 4 log 2 - 2 log pi + 2 pi/3 + 8 e^{-2pi} / (1 - e^{-2pi})^2."""
    q = math.exp(-2.0 * math.pi)
    bound = 2.0 - 4.0 * math.log(2.0) - 2.0 * math.log(math.pi) + 2.0 * math.pi / 3.0 + 8.0 * q / (1.0 - q) ** 2
    return BoundChain("robin", robin_constant_AP(n_max) + 2.0 + 2.0 * math.log(math.pi), bound)


def bound_chain_half_period(n_max: int = N_MAX) -> BoundChain:
    """lambda(1/2, 0) + 2 log 2 against 2 pi/3 - 2 log 2 - 8 e^{-2pi} / (1 - e^{-4pi})."""
    q = math.exp(-2.0 * math.pi)
    bound = 2.0 * math.pi / 3.0 - 2.0 * math.log(2.0) - 8.0 * q / (1.0 - q * q)
    return BoundChain("half_period", lambda_half_period(n_max) + 2.0 * math.log(2.0), bound)


def maxim_threshold() -> float:
    """Largest A~ for which constant h passes the integral test on the half-shift torus."""
    return -2.0 - 2.0 * math.log(math.pi) - 2.0 * math.log(2.0)


def maxim_margin(group: TranslationGroup = None, lattice: TorusLattice = None) -> float:
    group = group or TranslationGroup.cyclic(2)
    return maxim_threshold() - tilde_robin(Point.of(0.0, 0.0), group, lattice)


def constants_table(n_max: int = N_MAX) -> Dict[str, float]:
    """Series constants of the half-shift example on the unit square."""
    chain_1 = bound_chain_robin(n_max)
    chain_2 = bound_chain_half_period(n_max)
    return {
        "A_P": robin_constant_AP(n_max),
        "lambda_half": lambda_half_period(n_max),
        "A_tilde_P": tilde_robin_AP(n_max),
        "bound_approx1": chain_1.bound,
        "bound_approx2": chain_2.bound,
        "robin_plus": chain_1.exact,
        "half_period_plus": chain_2.exact,
        "maxim_threshold": maxim_threshold(),
        "maxim_margin": maxim_threshold() - tilde_robin_AP(n_max),
    }
