# core/solver.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, ConvergenceError, CriticalityError, PreconditionError
from .spectral import (
    GridField,
    dirichlet_energy,
    gradient_inner,
    integrate,
    integrate_weighted,
    inverse_laplacian,
    laplacian,
    random_band_limited,
)
from .torus import Point, TorusLattice, TranslationGroup, invariance_defect, project_H_G

logger = logging.getLogger(__name__)

INVARIANCE_TOL = 1e-10


class StageStatus(Enum):
    BOUNDED = "bounded"  # c_eps stays below the threshold
    BLOWN_UP = "blown_up"  # c_eps above threshold, bubble resolved
    UNDER_RESOLVED = "under_resolved"  # c_eps above threshold but r_eps spans too few cells
    FAILED = "failed"  # minimizer did not converge
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class ProblemSpec:
    """
    Inputs of the mean field problem.

    ``rho`` defaults to ``8 pi ell (1 - epsilon)`` when an ``epsilon`` is given.

    Args:
        group (TranslationGroup): Symmetry group, ell is its order.
        h (GridField): Positive invariant weight; its grid is the solver grid.
        rho (float, optional): Parameter of the equation.
        epsilon (float, optional): Subcriticality, in (0, 1).
        tol (float): Tolerance on both the residual and the gradient norm.
        max_iter (int): Iteration cap.
        seed (int): Seed of the random initial perturbation.
        perturbation (float): Amplitude of the random initial perturbation.
        force (bool): Allow rho >= 8 pi ell.
        max_step (float): Largest line search step.

    Raises:
        ConfigurationError: If ``h`` is not positive or not invariant.
        CriticalityError: If ``rho >= 8 pi ell`` and ``force`` is not set.
    """
    group: TranslationGroup
    h: GridField
    rho: Optional[float] = None
    epsilon: Optional[float] = None
    tol: float = 1e-6
    max_iter: int = 2000
    seed: int = 0
    perturbation: float = 0.0
    force: bool = False
    max_step: float = 4.0
    armijo: float = 1e-4
    max_backtracks: int = 40

    def __post_init__(self):
        if self.epsilon is not None and not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.rho is None:
            if self.epsilon is None:
                raise ConfigurationError("either rho or epsilon must be given")
            object.__setattr__(self, "rho", 8.0 * math.pi * self.ell * (1.0 - self.epsilon))
        if not self.rho > 0.0:
            raise ConfigurationError(f"rho must be positive, got {self.rho}")
        if not np.all(self.h.values > 0.0):
            raise ConfigurationError("the weight h must be positive everywhere")
        self.group.check_grid(self.h.n1, self.h.n2)
        defect = invariance_defect(self.h, self.group)
        if defect > 1e-12 * max(1.0, float(np.max(np.abs(self.h.values)))):
            raise ConfigurationError(f"the weight h is not invariant under the group (defect {defect:.3e})")
        if self.rho >= self.critical_rho and not self.force:
            raise CriticalityError(
                f"rho = {self.rho:.6g} is not below 8*pi*ell = {self.critical_rho:.6g}; set force to proceed"
            )

    @property
    def ell(self) -> int:
        return self.group.order

    @property
    def lattice(self) -> TorusLattice:
        return self.h.lattice

    @property
    def volume(self) -> float:
        return self.lattice.volume

    @property
    def critical_rho(self) -> float:
        return 8.0 * math.pi * self.ell

    def with_epsilon(self, epsilon: float) -> "ProblemSpec":
        return replace(self, epsilon=epsilon, rho=None)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    J: float
    grad_norm: float
    residual: float
    step: float
    c_eps: float
    lambda_eps: float

    def to_dict(self) -> Dict[str, float]:
        return {"iteration": self.iteration, "J": self.J, "grad_norm": self.grad_norm,
                "residual": self.residual, "step": self.step, "c_eps": self.c_eps,
                "lambda_eps": self.lambda_eps}


@dataclass(frozen=True)
class MinimizerState:
    """Result of a minimization; ``x_eps`` is the first row-major maximizer of ``u``."""
    u: GridField
    J: float
    grad_norm: float
    el_residual: float
    lambda_eps: float
    c_eps: float
    x_eps: Point
    x_index: Tuple[int, int]
    iterations: int
    converged: bool
    rho: float
    epsilon: Optional[float] = None
    history: Tuple[IterationRecord, ...] = ()
    status: StageStatus = StageStatus.UNCLASSIFIED

    def summary(self) -> Dict[str, object]:
        return {
            "epsilon": self.epsilon,
            "rho": self.rho,
            "J": self.J,
            "grad_norm": self.grad_norm,
            "el_residual": self.el_residual,
            "lambda_eps": self.lambda_eps,
            "c_eps": self.c_eps,
            "x_eps": list(self.x_eps.coords),
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status.value,
        }


def _require_invariant(u: GridField, group: TranslationGroup) -> None:
    scale = max(1.0, float(np.max(np.abs(u.values))))
    defect = max(invariance_defect(u, group), abs(u.mean()))
    if defect > INVARIANCE_TOL * scale:
        raise PreconditionError(f"field is not in H_G (projection residual {defect:.3e})")


def functional_J(u: GridField, spec: ProblemSpec) -> float:
    """
    J(u) = 1/2 int |grad u|^2 - rho log int h e^u.

    Raises:
        PreconditionError: If ``u`` is not invariant with zero mean.
    """
    _require_invariant(u, spec.group)
    return 0.5 * dirichlet_energy(u) - spec.rho * math.log(integrate_weighted(spec.h, u))


def _energy_terms(u: GridField, spec: ProblemSpec) -> Tuple[float, float]:
    lam = integrate_weighted(spec.h, u)
    return 0.5 * dirichlet_energy(u) - spec.rho * math.log(lam), lam


def _residual_field(u: GridField, spec: ProblemSpec, lam: float) -> GridField:
    density = spec.h.values * np.exp(u.values) / lam
    return laplacian(u) - spec.rho * (density - 1.0 / spec.volume)


def _residual_norm(u: GridField, spec: ProblemSpec, lam: float) -> float:
    res = _residual_field(u, spec, lam)
    return math.sqrt(integrate(res * res))


def el_residual(u: GridField, spec: ProblemSpec) -> float:
    """
    L2 norm of Delta u - rho (h e^u / lambda - 1/V).

    Raises:
        PreconditionError: If ``u`` is not invariant with zero mean.
    """
    _require_invariant(u, spec.group)
    return _residual_norm(u, spec, integrate_weighted(spec.h, u))


def functional_gradient(u: GridField, spec: ProblemSpec) -> GridField:
    """H^1 gradient g of J in H_G, defined by int <grad g, grad v> = DJ(u)[v]."""
    lam = integrate_weighted(spec.h, u)
    return inverse_laplacian(project_H_G(_residual_field(u, spec, lam), spec.group))


def directional_derivative(u: GridField, v: GridField, spec: ProblemSpec) -> float:
    return gradient_inner(functional_gradient(u, spec), v)


def state_from_field(u: GridField, spec: ProblemSpec, iterations: int = 0, converged: bool = False,
                     history: Sequence[IterationRecord] = ()) -> MinimizerState:
    """Collect the diagnostics of an invariant mean-zero field."""
    J, lam = _energy_terms(u, spec)
    g = inverse_laplacian(project_H_G(_residual_field(u, spec, lam), spec.group))
    index = u.argmax()
    return MinimizerState(
        u=u,
        J=J,
        grad_norm=math.sqrt(max(dirichlet_energy(g), 0.0)),
        el_residual=_residual_norm(u, spec, lam),
        lambda_eps=lam,
        c_eps=u.max(),
        x_eps=u.node_point(index),
        x_index=index,
        iterations=iterations,
        converged=converged,
        rho=spec.rho,
        epsilon=spec.epsilon,
        history=tuple(history),
    )


def initial_field(spec: ProblemSpec) -> GridField:
    """Zero field, or a random smooth invariant field when a perturbation is requested."""
    zero = GridField.constant(0.0, spec.h.n1, spec.h.n2, spec.lattice)
    if spec.perturbation <= 0.0:
        return zero
    noise = random_band_limited(spec.h.n1, spec.h.n2, spec.lattice, seed=spec.seed,
                                amplitude=spec.perturbation)
    return project_H_G(noise, spec.group)


def minimize(spec: ProblemSpec, u0: Optional[GridField] = None,
             restart_from_best: bool = False) -> MinimizerState:
    """
    Minimize J over H_G by steepest descent in the H^1 metric with Armijo backtracking.

    Every iterate is projected back onto H_G. The run stops when both the
    Euler-Lagrange residual and the gradient norm drop below ``spec.tol``.

    Args:
        spec (ProblemSpec): Problem data.
        u0 (GridField, optional): Starting field, projected onto H_G first.
        restart_from_best (bool): Also run from the default start and keep the
            lower energy.

    Returns:
        MinimizerState: Converged state; J is nonincreasing along ``history``.

    Raises:
        ConvergenceError: When the line search fails or ``max_iter`` is reached;
            the last state is attached.
    """
    start = project_H_G(u0, spec.group) if u0 is not None else initial_field(spec)
    state = _descend(spec, start)
    if restart_from_best and u0 is not None:
        try:
            other = _descend(spec, initial_field(spec))
        except ConvergenceError as exc:
            logger.warning("restart from the default start failed: %s", exc)
        else:
            if other.J < state.J:
                logger.info("restart reached lower energy %.10g < %.10g", other.J, state.J)
                state = other
    return state


def _descend(spec: ProblemSpec, u: GridField) -> MinimizerState:
    J, lam = _energy_terms(u, spec)
    step = 1.0
    history: List[IterationRecord] = []

    for it in range(spec.max_iter + 1):
        res = _residual_field(u, spec, lam)
        residual = math.sqrt(integrate(res * res))
        g = inverse_laplacian(project_H_G(res, spec.group))
        grad_sq = max(dirichlet_energy(g), 0.0)
        grad_norm = math.sqrt(grad_sq)
        history.append(IterationRecord(it, J, grad_norm, residual, step, u.max(), lam))
        logger.debug("iter %d J=%.12g |g|=%.3e res=%.3e step=%.3g", it, J, grad_norm, residual, step)

        if residual < spec.tol and grad_norm < spec.tol:
            logger.info("converged after %d iterations, J=%.10g residual=%.3e", it, J, residual)
            return state_from_field(u, spec, it, True, history)
        if it == spec.max_iter:
            break

        trial = min(2.0 * step, spec.max_step)
        accepted = False
        for _ in range(spec.max_backtracks):
            candidate = project_H_G(u - trial * g, spec.group)
            with np.errstate(over="ignore"):
                J_new, lam_new = _energy_terms(candidate, spec)
            if math.isfinite(J_new) and J_new <= J - spec.armijo * trial * grad_sq:
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            if residual < spec.tol:
                logger.info("line search stalled at residual %.3e below tolerance, accepting", residual)
                return state_from_field(u, spec, it, True, history)
            last = state_from_field(u, spec, it, False, history)
            logger.warning("line search failed at iteration %d (residual %.3e)", it, residual)
            raise ConvergenceError(f"line search failed at iteration {it}, residual {residual:.3e}", last)
        u, J, lam, step = candidate, J_new, lam_new, trial

    last = state_from_field(u, spec, spec.max_iter, False, history)
    logger.warning("no convergence in %d iterations (residual %.3e)", spec.max_iter, last.el_residual)
    raise ConvergenceError(f"no convergence in {spec.max_iter} iterations", last)


def scale_radius(lambda_eps: float, c_eps: float, h_at_max: float, rho: float) -> float:
    """r_eps with r_eps^2 e^{c_eps} rho h(x_eps) / lambda_eps = 1."""
    return math.sqrt(lambda_eps / (rho * h_at_max)) * math.exp(-0.5 * c_eps)


def classify_stage(state: MinimizerState, spec: ProblemSpec, threshold: float = 12.0,
                   min_cells: float = 4.0, previous: Optional[MinimizerState] = None,
                   growth_limit: Optional[float] = None) -> StageStatus:
    """
    Blow-up status of one continuation stage.

    A stage is blown up when ``c_eps`` exceeds ``threshold`` or, with a
    ``growth_limit``, jumps by more than that since the previous stage. A
    blow-up whose scale radius covers fewer than ``min_cells`` grid cells is
    reported as under-resolved.
    """
    if not state.converged:
        return StageStatus.FAILED
    jumped = (previous is not None and growth_limit is not None
              and state.c_eps - previous.c_eps > growth_limit)
    if state.c_eps <= threshold and not jumped:
        return StageStatus.BOUNDED
    r = scale_radius(state.lambda_eps, state.c_eps, float(spec.h.values[state.x_index]), state.rho)
    if r < min_cells * spec.lattice.cell_size(spec.h.n1, spec.h.n2):
        return StageStatus.UNDER_RESOLVED
    return StageStatus.BLOWN_UP


def continuation(spec: ProblemSpec, eps_schedule: Sequence[float], threshold: float = 12.0,
                 min_cells: float = 4.0, growth_limit: Optional[float] = None,
                 u0: Optional[GridField] = None) -> List[MinimizerState]:
    """
    Minimize along a decreasing schedule of epsilon, warm starting each stage.

    A stage that fails to converge is recorded with status FAILED and its last
    state; the next stage starts again from the last converged field.

    Raises:
        ConfigurationError: If the schedule is not strictly decreasing in (0, 1).
    """
    eps = list(eps_schedule)
    if not eps:
        raise ConfigurationError("epsilon schedule is empty")
    if any(not 0.0 < e < 1.0 for e in eps):
        raise ConfigurationError(f"epsilon values must lie in (0, 1), got {eps}")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigurationError(f"epsilon schedule must be strictly decreasing, got {eps}")

    states: List[MinimizerState] = []
    warm = u0
    previous: Optional[MinimizerState] = None
    for e in eps:
        stage_spec = spec.with_epsilon(e)
        try:
            state = minimize(stage_spec, warm)
        except ConvergenceError as exc:
            state = replace(exc.state, status=StageStatus.FAILED)
            logger.warning("stage eps=%g failed: %s", e, exc)
            states.append(state)
            continue
        status = classify_stage(state, stage_spec, threshold, min_cells, previous, growth_limit)
        state = replace(state, status=status)
        logger.info("stage eps=%g c_eps=%.6g lambda=%.6g status=%s", e, state.c_eps,
                    state.lambda_eps, status.value)
        states.append(state)
        warm = state.u
        previous = state
    return states
