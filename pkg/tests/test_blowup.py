import math

import numpy as np
import pytest

from meanfieldpy.core.blowup import (
    BUBBLE_MASS,
    bubble_mass,
    bubble_mass_quadrature,
    bubble_pde_residual,
    diagnose,
    lemma_ratio,
    mass_fractions,
    orbit_mass_total,
    r_epsilon,
    rescaled_profile,
    rescaled_residual,
)
from meanfieldpy.core.certificates import TestFunction
from meanfieldpy.core.errors import ConfigurationError, ResolutionError
from meanfieldpy.core.solver import ProblemSpec, state_from_field
from meanfieldpy.core.spectral import GridField, grid_nodes
from meanfieldpy.core.torus import TranslationGroup, project_H_G
from meanfieldpy.utils.helpers import OUTPUT_KEYS


def flat_state(group, n, epsilon=0.3):
    spec = ProblemSpec(group, GridField.constant(1.0, n, n), epsilon=epsilon)
    return state_from_field(GridField.constant(0.0, n, n), spec, converged=True), spec


@pytest.mark.parametrize("R", [2.0, 5.0, 10.0])
def test_bubble_mass_closed_form(R):
    assert bubble_mass(R) == pytest.approx(bubble_mass_quadrature(R), rel=1e-6)
    assert bubble_mass(R) < BUBBLE_MASS


def test_bubble_solves_liouville_equation():
    points = np.array([[0.0, 0.0], [1.0, 0.5], [3.0, -2.0], [-6.0, 4.0]])
    assert np.max(np.abs(bubble_pde_residual(points))) < 1e-8


def test_scale_radius_of_zero_field(half_shift):
    state, spec = flat_state(half_shift, 16)
    expected = 1.0 / math.sqrt(16.0 * math.pi * 0.7)
    assert r_epsilon(state, spec) == pytest.approx(expected, rel=1e-12)
    assert lemma_ratio(state, spec) == pytest.approx(expected ** 2, rel=1e-12)


def test_mass_fractions_of_zero_field(half_shift):
    state, spec = flat_state(half_shift, 32)
    fractions = mass_fractions(state, spec, R=1.0)
    assert fractions == pytest.approx([1.0 / 11.2, 1.0 / 11.2], rel=1e-9)


def test_mass_fractions_overlap(half_shift):
    state, spec = flat_state(half_shift, 32)
    with pytest.raises(ConfigurationError):
        mass_fractions(state, spec, R=20.0)
    clamped = mass_fractions(state, spec, R=20.0, clamp=True)
    assert clamped == pytest.approx([math.pi * 0.2375 ** 2] * 2, rel=1e-9)


def test_orbit_mass_total():
    assert orbit_mass_total([0.5, 0.5], 2) == pytest.approx(1.0)
    assert orbit_mass_total([0.3, 0.3, 0.3], 3) == pytest.approx(0.9)
    assert orbit_mass_total([], 2) == 0.0


def test_profile_error_of_zero_field(half_shift):
    state, spec = flat_state(half_shift, 32)
    profile = rescaled_profile(state, spec, R=1.0)
    assert profile.profile_error == pytest.approx(2.0 * math.log(1.125), rel=1e-12)
    assert profile.radial_error == pytest.approx(profile.profile_error, rel=1e-12)
    assert profile.radii[0] == 0.0 and profile.radii[-1] == 1.0
    assert len(profile.rows()) == len(profile.radii)


def test_profile_needs_resolution(half_shift):
    state, spec = flat_state(half_shift, 16)
    with pytest.raises(ResolutionError):
        rescaled_profile(state, spec, R=1.0, min_cells=8.0)
    with pytest.raises(ConfigurationError):
        rescaled_profile(state, spec, R=2.0)


def test_radial_error_ignores_angular_modes(exact_bubble):
    n, s = 512, 0.02
    spec = ProblemSpec(TranslationGroup.identity(), GridField.constant(1.0, n, n), epsilon=0.001)
    xi1, xi2 = grid_nodes(n, n)
    y = spec.lattice.minimal_displacement(np.stack([xi1 - 0.5, xi2 - 0.5], axis=-1)) / s
    r2 = y[..., 0] ** 2 + y[..., 1] ** 2
    wobble = 0.01 * (y[..., 0] ** 2 - y[..., 1] ** 2) / (1.0 + r2 / 64.0)
    state = state_from_field(exact_bubble(n, s) + wobble, spec)
    assert state.c_eps == 0.0
    profile = rescaled_profile(state, spec)
    assert profile.radial_error < 0.05
    assert profile.profile_error > 0.1


@pytest.fixture
def injected_bubble(exact_bubble):
    group = TranslationGroup.identity()
    spec = ProblemSpec(group, GridField.constant(1.0, 512, 512), epsilon=0.001)
    u = exact_bubble(512, 0.02)
    return state_from_field(u, spec), spec


def test_injected_bubble_is_recognised(injected_bubble):
    state, spec = injected_bubble
    assert state.c_eps == 0.0
    assert r_epsilon(state, spec) == pytest.approx(0.02, rel=0.02)
    profile = rescaled_profile(state, spec)
    assert profile.profile_error < 0.05
    assert all(b < a for a, b in zip(profile.phi_eps, profile.phi_eps[1:]))
    assert rescaled_residual(state, spec) < 0.05


def test_diagnose_injected_bubble(injected_bubble):
    state, spec = injected_bubble
    diag = diagnose(state, spec)
    data = diag.to_dict()
    assert set(data) == set(OUTPUT_KEYS["bubble"])
    assert diag.R_used == 20.0
    [fraction] = diag.mass_fractions
    assert 0.95 < fraction < 1.01


@pytest.mark.slow
def test_glued_bubble_family(half_shift):
    h = GridField.constant(1.0, 1024, 1024)
    spec = ProblemSpec(half_shift, h, epsilon=0.02)
    field = project_H_G(TestFunction(0.02, h, half_shift).sample(), half_shift)
    diag = diagnose(state_from_field(field, spec), spec, clamp=True)
    assert diag.radial_error < 0.1
    assert diag.profile_error < 0.15
    assert diag.mass_fractions == pytest.approx([0.5, 0.5], rel=0.1)
