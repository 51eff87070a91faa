import math
from fractions import Fraction

import numpy as np
import pytest

from meanfieldpy.core.errors import ConfigurationError
from meanfieldpy.core.spectral import GridField, random_band_limited
from meanfieldpy.core.torus import (
    Point,
    TorusLattice,
    TranslationGroup,
    delta,
    geodesic_distance,
    invariance_defect,
    orbit,
    orbit_separation,
    project_H_G,
    symmetrize,
)


def test_unit_square_geometry(unit_lattice):
    assert unit_lattice.volume == 1.0
    assert unit_lattice.injectivity_radius == pytest.approx(0.5)
    assert unit_lattice.diameter == pytest.approx(math.sqrt(2.0) / 2.0)


def test_hexagonal_geometry(hex_lattice):
    assert hex_lattice.volume == pytest.approx(math.sqrt(3.0) / 2.0)
    assert hex_lattice.injectivity_radius == pytest.approx(0.5)
    assert hex_lattice.diameter == pytest.approx(1.0 / math.sqrt(3.0))


def test_reduced_basis_finds_short_vector():
    lattice = TorusLattice((1.0, 0.0), (3.0, 1.0))
    u, v = lattice.reduced_basis
    assert lattice.shortest_vector == pytest.approx(1.0)
    assert float(u @ v) >= 0.0
    assert lattice.volume == pytest.approx(1.0)


def test_degenerate_lattice_rejected():
    with pytest.raises(ConfigurationError):
        TorusLattice((1.0, 2.0), (2.0, 4.0))


def test_point_reduced_mod_one():
    p = Point.of(1.25, -0.25)
    assert p.coords == (0.25, 0.75)


def test_cyclic_group_shifts():
    group = TranslationGroup.cyclic(4)
    assert group.ell == 4
    assert group.as_strings() == [["0", "0"], ["1/4", "0"], ["1/2", "0"], ["3/4", "0"]]
    b_group = TranslationGroup.cyclic(2, axis="b")
    assert b_group.shifts[1] == (Fraction(0), Fraction(1, 2))


def test_generated_group_closure():
    group = TranslationGroup.generated([("1/2", 0), (0, "1/2")])
    assert group.order == 4
    assert (Fraction(1, 2), Fraction(1, 2)) in group.shifts


@pytest.mark.parametrize("shifts", [
    ((Fraction(1, 2), 0), (0, 0)),
    ((0, 0), (Fraction(1, 2), 0), (Fraction(1, 2), 0)),
    ((0, 0), (Fraction(1, 3), 0)),
])
def test_invalid_groups_rejected(shifts):
    with pytest.raises(ConfigurationError):
        TranslationGroup(shifts)


def test_grid_compatibility():
    group = TranslationGroup.cyclic(4)
    group.check_grid(256, 256)
    with pytest.raises(ConfigurationError, match="incompatible"):
        group.check_grid(250, 250)
    assert group.grid_offsets(8, 8) == [(0, 0), (2, 0), (4, 0), (6, 0)]


def test_orbit_and_separation(unit_lattice, half_shift):
    x = Point.of(0.1, 0.2)
    points = orbit(x, half_shift)
    assert [p.coords for p in points] == [(0.1, 0.2), pytest.approx((0.6, 0.2))]
    assert orbit_separation(x, half_shift, unit_lattice) == pytest.approx(0.5)
    assert orbit_separation(x, TranslationGroup.identity(), unit_lattice) == math.inf
    assert delta(x, half_shift, unit_lattice) == pytest.approx(0.125)


def test_geodesic_distance_wraps(unit_lattice):
    assert geodesic_distance(Point.of(0.1, 0.0), Point.of(0.9, 0.0), unit_lattice) == pytest.approx(0.2)
    assert geodesic_distance(Point.of(0.05, 0.05), Point.of(0.95, 0.95), unit_lattice) == pytest.approx(
        math.hypot(0.1, 0.1))


def test_symmetrize_is_exactly_invariant_and_idempotent(half_shift):
    u = random_band_limited(16, 16, modes=5, seed=3)
    s = symmetrize(u, half_shift)
    assert invariance_defect(s, half_shift) == 0.0
    again = symmetrize(s, half_shift)
    assert np.array_equal(again.values, s.values)


def test_symmetrize_averages_orbit_values():
    group = TranslationGroup.cyclic(2)
    values = np.zeros((4, 4))
    values[0, 0] = 2.0
    s = symmetrize(GridField(values), group)
    assert s.values[0, 0] == 1.0
    assert s.values[2, 0] == 1.0


def test_project_H_G_has_zero_mean(half_shift, skew_lattice):
    u = random_band_limited(16, 16, skew_lattice, seed=1) + 0.7
    p = project_H_G(u, half_shift)
    assert abs(p.mean()) < 1e-15
    assert invariance_defect(p, half_shift) == 0.0


def test_quarter_shift_orbit_wraps():
    points = orbit(Point.of(0.9, 0.0), TranslationGroup.cyclic(4))
    assert [p.coords[0] for p in points] == pytest.approx([0.9, 0.15, 0.4, 0.65])
    assert all(p.coords[1] == 0.0 for p in points)


def test_geodesic_triangle_inequality(skew_lattice):
    rng = np.random.default_rng(5)
    for _ in range(200):
        x, y, z = (Point.of(*rng.random(2)) for _ in range(3))
        direct = geodesic_distance(x, z, skew_lattice)
        detour = geodesic_distance(x, y, skew_lattice) + geodesic_distance(y, z, skew_lattice)
        assert direct <= detour + 1e-12


def test_symmetrize_cancels_odd_mode(half_shift):
    u = GridField.from_function(lambda x, y: np.cos(2.0 * np.pi * x), 32, 32)
    assert np.max(np.abs(symmetrize(u, half_shift).values)) < 1e-14


@pytest.mark.parametrize("order", [2, 4])
def test_symmetrize_preserves_mean(order, skew_lattice):
    group = TranslationGroup.cyclic(order)
    u = random_band_limited(32, 32, skew_lattice, modes=5, seed=8) + 0.3
    assert symmetrize(u, group).mean() == pytest.approx(u.mean(), abs=1e-14)


def test_symmetrize_fixes_invariant_field(half_shift):
    u = GridField.from_function(lambda x, y: np.cos(4.0 * np.pi * x) + np.sin(2.0 * np.pi * y), 16, 16)
    assert np.max(np.abs(symmetrize(u, half_shift).values - u.values)) < 1e-14
