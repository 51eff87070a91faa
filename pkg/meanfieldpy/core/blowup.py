# core/blowup.py
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.ndimage import map_coordinates

from .errors import ConfigurationError, ResolutionError
from .solver import MinimizerState, ProblemSpec, scale_radius
from .torus import orbit_separation

logger = logging.getLogger(__name__)

BUBBLE_MASS = 8.0 * math.pi


def bubble_profile(y) -> np.ndarray:
    """
    Entire solution -2 log(1 + |y|^2 / 8) of -Laplace(phi) = e^phi in the plane.

    Args:
        y: Array of shape (..., 2).

    Examples:
        >>> float(bubble_profile((0.0, 0.0)))
        0.0
    """
    y = np.asarray(y, dtype=float)
    return -2.0 * np.log1p((y[..., 0] ** 2 + y[..., 1] ** 2) / 8.0)


def bubble_mass(R: float) -> float:
    """Integral of e^phi over the disc of radius R, 8 pi R^2 / (R^2 + 8)."""
    return BUBBLE_MASS * R * R / (R * R + 8.0)


def bubble_mass_quadrature(R: float) -> float:
    value, _ = quad(lambda r: 2.0 * math.pi * r * math.exp(float(bubble_profile((r, 0.0)))),
                    0.0, R, epsabs=1e-13, epsrel=1e-12)
    return value


def bubble_pde_residual(y, step: float = 1e-4) -> np.ndarray:
    """
    -Laplace(phi) - e^phi by the five point stencil.

    Each difference phi(y + e) - phi(y) is formed directly as
    -2 log1p((2 y.e + |e|^2) / (8 + |y|^2)), so no cancellation occurs.
    """
    y = np.asarray(y, dtype=float)
    base = 8.0 + y[..., 0] ** 2 + y[..., 1] ** 2
    lap = np.zeros(base.shape)
    for axis in (0, 1):
        for sign in (1.0, -1.0):
            lap -= 2.0 * np.log1p((2.0 * sign * step * y[..., axis] + step * step) / base)
    lap /= step ** 2
    return -lap - np.exp(bubble_profile(y))


def r_epsilon(state: MinimizerState, spec: ProblemSpec) -> float:
    """
    Scale r_eps with r_eps^2 e^{c_eps} rho h(x_eps) = lambda_eps.

    Examples:
        With u = 0, h = 1, V = 1, ell = 2 and eps = 0.3 the value is
        1 / sqrt(16 pi * 0.7), about 0.1686.
    """
    if not state.lambda_eps > 0.0:
        raise ConfigurationError("lambda_eps must be positive")
    return scale_radius(state.lambda_eps, state.c_eps, float(spec.h.values[state.x_index]), state.rho)


def lemma_ratio(state: MinimizerState, spec: ProblemSpec) -> float:
    """r_eps^2 e^{c_eps / 2}, bounded along a blow-up sequence."""
    r = r_epsilon(state, spec)
    return r * r * math.exp(0.5 * state.c_eps)


def _index_offsets(spec: ProblemSpec, displacement: np.ndarray) -> np.ndarray:
    """Cartesian displacements to fractional grid index offsets, shape (2, ...)."""
    xi = spec.lattice.to_lattice(displacement)
    return np.stack([xi[..., 0] * spec.h.n1, xi[..., 1] * spec.h.n2])


def _sample(values: np.ndarray, center: Tuple[int, int], offsets: np.ndarray, order: int) -> np.ndarray:
    coords = np.stack([center[0] + offsets[0], center[1] + offsets[1]])
    return map_coordinates(values, coords, order=order, mode="grid-wrap")


def _half_separation(state: MinimizerState, spec: ProblemSpec) -> float:
    return 0.5 * min(orbit_separation(state.x_eps, spec.group, spec.lattice),
                     2.0 * spec.lattice.injectivity_radius)


def _check_ball(state: MinimizerState, spec: ProblemSpec, radius: float, min_cells: float) -> None:
    half = _half_separation(state, spec)
    if radius >= half:
        raise ConfigurationError(
            f"ball radius {radius:.4g} reaches half the orbit separation {half:.4g}"
        )
    cells = radius / spec.lattice.cell_size(spec.h.n1, spec.h.n2)
    if cells < min_cells:
        raise ResolutionError(f"ball radius {radius:.4g} spans {cells:.2f} grid cells, need {min_cells}")


@dataclass(frozen=True)
class RadialProfile:
    """
    Angular means of the rescaled field against the bubble, one row per radius.

    ``profile_error`` is the sup distance to the bubble over every sampled
    point of the ball, ``radial_error`` the sup distance of the table rows.
    """
    radii: Tuple[float, ...]
    phi_eps: Tuple[float, ...]
    phi: Tuple[float, ...]
    profile_error: float
    radial_error: float

    def rows(self) -> List[Tuple[float, float, float, float]]:
        return [(r, a, b, a - b) for r, a, b in zip(self.radii, self.phi_eps, self.phi)]


def rescaled_profile(state: MinimizerState, spec: ProblemSpec, R: float = 4.0, n_radii: int = 33,
                     n_angles: int = 32, min_cells: float = 4.0) -> RadialProfile:
    """
    Sample phi_eps(y) = u(x_eps + r_eps y) - c_eps for |y| <= R by bilinear interpolation.

    Raises:
        ConfigurationError: If the ball of radius R r_eps reaches another orbit point.
        ResolutionError: If R r_eps spans fewer than ``min_cells`` cells.
    """
    r = r_epsilon(state, spec)
    _check_ball(state, spec, R * r, min_cells)
    radii = np.linspace(0.0, R, n_radii)
    angles = np.arange(n_angles) * (2.0 * math.pi / n_angles)
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    y = np.stack([rr * np.cos(aa), rr * np.sin(aa)], axis=-1)
    samples = _sample(state.u.values, state.x_index, _index_offsets(spec, r * y), order=1) - state.c_eps
    exact = bubble_profile(y)
    means = samples.mean(axis=1)
    radial = exact.mean(axis=1)
    return RadialProfile(
        radii=tuple(float(v) for v in radii),
        phi_eps=tuple(float(v) for v in means),
        phi=tuple(float(v) for v in radial),
        profile_error=float(np.max(np.abs(samples - exact))),
        radial_error=float(np.max(np.abs(means - radial))),
    )


def admissible_radius(state: MinimizerState, spec: ProblemSpec, R: float, fraction: float = 0.95) -> float:
    """Largest rescaled radius not above R whose balls keep ``fraction`` of half the separation."""
    limit = fraction * _half_separation(state, spec) / r_epsilon(state, spec)
    if R > limit:
        logger.warning("mass radius R=%.4g clamped to %.4g to keep orbit balls disjoint", R, limit)
        return limit
    return R


def mass_fractions(state: MinimizerState, spec: ProblemSpec, R: float = 20.0, clamp: bool = False,
                   n_radii: int = 64, n_angles: int = 128) -> List[float]:
    """
    Share of the total mass lambda_eps inside the ball of radius R r_eps around each orbit point.

    The ball integral is a polar Gauss-Legendre rule on the bilinear
    interpolant of h e^u, centered on the grid node of each orbit point.

    Args:
        clamp (bool): Shrink R to ``admissible_radius`` instead of raising.

    Raises:
        ConfigurationError: If the balls overlap and ``clamp`` is not set.
    """
    r_eps = r_epsilon(state, spec)
    if clamp:
        R = admissible_radius(state, spec, R)
    radius = R * r_eps
    half = _half_separation(state, spec)
    if radius >= half:
        raise ConfigurationError(f"balls of radius {radius:.4g} overlap (half separation {half:.4g})")

    density = spec.h.values * np.exp(state.u.values)
    nodes, weights = np.polynomial.legendre.leggauss(n_radii)
    radii = 0.5 * radius * (nodes + 1.0)
    w_r = 0.5 * radius * weights * radii
    angles = np.arange(n_angles) * (2.0 * math.pi / n_angles)
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    offsets = _index_offsets(spec, np.stack([rr * np.cos(aa), rr * np.sin(aa)], axis=-1))
    area_scale = 2.0 * math.pi / n_angles

    fractions = []
    for shift in spec.group.grid_offsets(spec.h.n1, spec.h.n2):
        center = ((state.x_index[0] + shift[0]) % spec.h.n1, (state.x_index[1] + shift[1]) % spec.h.n2)
        vals = _sample(density, center, offsets, order=1)
        mass = float(np.sum(vals.sum(axis=1) * w_r) * area_scale)
        fractions.append(mass / state.lambda_eps)
    logger.debug("mass fractions at R=%.4g: %s", R, fractions)
    return fractions


def orbit_mass_total(fractions: Sequence[float], ell: int) -> float:
    """Sum of the orbit fractions in units of 1/ell; a value above 1 is the k0/ell > 1 contradiction."""
    return sum(fractions) * ell / len(fractions) if fractions else 0.0


def rescaled_residual(state: MinimizerState, spec: ProblemSpec, R: float = 4.0, step: float = 0.25,
                      n_points: int = 17) -> float:
    """
    Sup norm of Delta phi_eps - (h / h(x_eps)) e^{phi_eps} + rho r_eps^2 / V on |y| <= R.

    Uses cubic interpolation and a five point stencil of width ``step`` in y.
    """
    r = r_epsilon(state, spec)
    _check_ball(state, spec, (R + step) * r, 1.0)
    axis = np.linspace(-R, R, n_points)
    y1, y2 = np.meshgrid(axis, axis, indexing="ij")
    inside = y1 ** 2 + y2 ** 2 <= R * R
    y = np.stack([y1[inside], y2[inside]], axis=-1)

    def phi(points):
        return _sample(state.u.values, state.x_index, _index_offsets(spec, r * points), order=3) - state.c_eps

    e1 = np.array([step, 0.0])
    e2 = np.array([0.0, step])
    flat_lap = (phi(y + e1) + phi(y - e1) + phi(y + e2) + phi(y - e2) - 4.0 * phi(y)) / step ** 2
    h0 = float(spec.h.values[state.x_index])
    h_ratio = _sample(spec.h.values, state.x_index, _index_offsets(spec, r * y), order=3) / h0
    residual = -flat_lap - h_ratio * np.exp(phi(y)) + spec.rho * r * r / spec.volume
    return float(np.max(np.abs(residual)))


@dataclass(frozen=True)
class BubbleDiagnostics:
    r_eps: float
    profile: RadialProfile
    profile_error: float
    radial_error: float
    mass_fractions: Tuple[float, ...]
    R_used: float
    lemma42_ratio: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "r_eps": self.r_eps,
            "profile_error": self.profile_error,
            "radial_error": self.radial_error,
            "mass_fractions": list(self.mass_fractions),
            "R_used": self.R_used,
            "lemma42_ratio": self.lemma42_ratio,
            "fraction_sum": float(sum(self.mass_fractions)),
        }


def diagnose(state: MinimizerState, spec: ProblemSpec, R_profile: float = 4.0, R_mass: float = 20.0,
             clamp: bool = True, min_cells: float = 4.0) -> BubbleDiagnostics:
    """Profile, mass fractions and scale ratio of one state."""
    R_used = admissible_radius(state, spec, R_mass) if clamp else R_mass
    fractions = mass_fractions(state, spec, R_used)
    profile = rescaled_profile(state, spec, R_profile, min_cells=min_cells)
    return BubbleDiagnostics(
        r_eps=r_epsilon(state, spec),
        profile=profile,
        profile_error=profile.profile_error,
        radial_error=profile.radial_error,
        mass_fractions=tuple(fractions),
        R_used=R_used,
        lemma42_ratio=lemma_ratio(state, spec),
    )
