"""Eigenvalue-ascent motion control and the per-agent enforcement loop.

The gradient of a simple eigenvalue lam(L) with unit eigenvector v with
respect to agent i's position is v^T (dL/dp_i) v. Only row/column i of L
depends on p_i, so the sum collapses to sum_j (v_i - v_j)^2 da_ij/dp_i and
agent i can evaluate it from neighbor data.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BiconError, InputError
from .estimator import (EstimatorState, build_shifted, initial_state, integrate,
                        reference_eigenpair)
from .graph import (CommModel, WeightedGraph, _check_positions, is_connected,
                    is_locally_biconnected, perturb)
from .spectral import (DEFAULT_EPSILON, BiconnectivityVerdict, EigenvalueProvider,
                       ExactEigenvalueProvider, check_biconnectivity_condition)

log = logging.getLogger(__name__)

AXES = {"x": 0, "y": 1}


def weight_position_gradient(positions, model: CommModel, i: int) -> np.ndarray:
    """da_ij/dp_i for every j, shape (n, 2); zero outside the radius."""
    p = _check_positions(positions)
    diff = p[i] - p  # p_i - p_j
    dist = np.linalg.norm(diff, axis=1)
    # nodes at |d - R| < 1e-9 keep the smooth branch
    inside = (dist <= model.radius + 1e-9)
    a = np.where(inside & (np.arange(len(p)) != i), np.exp(-dist**2 / (2.0 * model.sigma)), 0.0)
    return -(a / model.sigma)[:, None] * diff


def laplacian_position_derivative(positions, model: CommModel, i: int, axis="x", epsilon: float = 1.0) -> np.ndarray:
    """Component of d L^i(eps) / d p_i along ``axis``; nonzero only in row/column i."""
    ax = AXES[axis] if isinstance(axis, str) else int(axis)
    da = weight_position_gradient(positions, model, i)[:, ax] * epsilon
    n = da.shape[0]
    dA = np.zeros((n, n))
    dA[i, :] = da
    dA[:, i] = da
    return np.diag(dA.sum(axis=1)) - dA


@dataclass(frozen=True)
class GradientInput:
    focal: int
    positions: np.ndarray
    model: CommModel
    eigvec: np.ndarray
    epsilon: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.eigvec, dtype=float)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise InputError(f"eigenvector must have unit norm, got {np.linalg.norm(v):.12g}")
        object.__setattr__(self, "eigvec", v)
        object.__setattr__(self, "positions", _check_positions(self.positions))


def eigenvalue_gradient(inp: GradientInput) -> np.ndarray:
    """d lambda / d p_i = eps * sum_j (v_i - v_j)^2 da_ij/dp_i."""
    v = inp.eigvec
    da = weight_position_gradient(inp.positions, inp.model, inp.focal)
    coef = (v[inp.focal] - v) ** 2
    return inp.epsilon * (coef[:, None] * da).sum(axis=0)


def eigenvalue_gradient_quadratic(inp: GradientInput) -> np.ndarray:
    """Same gradient, assembled as v^T (dL/dp_i) v per axis."""
    v = inp.eigvec
    return np.array([
        v @ laplacian_position_derivative(inp.positions, inp.model, inp.focal, ax, inp.epsilon) @ v
        for ax in ("x", "y")
    ])


def consensus_control(i: int, positions, graph: WeightedGraph) -> np.ndarray:
    """u_i = sum_j a_ij (p_j - p_i)."""
    p = np.asarray(positions, dtype=float)
    return graph.weights[i] @ (p - p[i])


def clip_speed(u, max_speed: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    nrm = float(np.linalg.norm(u))
    if max_speed is not None and nrm > max_speed:
        return u * (max_speed / nrm)
    return u


class EnforcementPhase(enum.Enum):
    CHECK_LOCAL = "CheckLocal"
    PERTURB = "Perturb"
    ESTIMATE_EIGENVALUES = "EstimateEigenvalues"
    CHECK_CONDITION = "CheckCondition"
    ESTIMATE_EIGENVECTOR = "EstimateEigenvector"
    GRADIENT_MOVE = "GradientMove"
    DONE = "Done"


P = EnforcementPhase
# (phase, outcome) -> next phase; outcome is None for unconditional edges
TRANSITIONS = {
    (P.CHECK_LOCAL, True): P.DONE,
    (P.CHECK_LOCAL, False): P.PERTURB,
    (P.PERTURB, None): P.ESTIMATE_EIGENVALUES,
    (P.ESTIMATE_EIGENVALUES, None): P.CHECK_CONDITION,
    (P.CHECK_CONDITION, True): P.DONE,
    (P.CHECK_CONDITION, False): P.ESTIMATE_EIGENVECTOR,
    (P.ESTIMATE_EIGENVECTOR, None): P.GRADIENT_MOVE,
    (P.GRADIENT_MOVE, None): P.CHECK_LOCAL,
}
ALLOWED_EDGES = frozenset((src, dst) for (src, _), dst in TRANSITIONS.items())


@dataclass
class EnforcementSettings:
    epsilon: float = DEFAULT_EPSILON
    estimator_gain: float = 500.0
    control_gain: float = 1.0
    max_speed: float = 1.0
    max_iterations: int = 10_000
    # simulated k*t budget per eigenvector estimation
    estimator_budget_kt: float = 2e4
    estimator_threshold: float = 1e-3
    estimator: str = "consensus"  # or "exact"


@dataclass
class LocalView:
    """Snapshot an agent reasons about during one control tick."""

    positions: np.ndarray
    graph: WeightedGraph
    model: CommModel
    provider: EigenvalueProvider = field(default_factory=ExactEigenvalueProvider)


@dataclass
class AgentState:
    agent: int
    settings: EnforcementSettings = field(default_factory=EnforcementSettings)
    phase: EnforcementPhase = EnforcementPhase.CHECK_LOCAL
    iterations: int = 0
    exhausted: bool = False
    fault: str | None = None
    perturbed: np.ndarray | None = None
    lambda3: float | None = None
    verdict: BiconnectivityVerdict | None = None
    eigvec: np.ndarray | None = None
    estimate: EstimatorState | None = None  # warm start for the next estimation
    last_estimation: dict | None = None
    seed: int = 0

    def restart(self):
        if self.phase is EnforcementPhase.DONE and not self.exhausted:
            self.phase = EnforcementPhase.CHECK_LOCAL


def _estimate_v3(state: AgentState, view: LocalView) -> np.ndarray:
    s = state.settings
    i = state.agent
    if s.estimator == "exact":
        return reference_eigenpair(state.perturbed, state.lambda3)[1]
    sl = build_shifted(state.perturbed, state.lambda3)
    _, ref = reference_eigenpair(state.perturbed, state.lambda3)
    init = state.estimate
    if init is None or init.z.shape != (view.graph.n, view.graph.n):
        init = initial_state(view.graph.n, ref, s.estimator_gain, seed=state.seed + i)
    else:
        init = EstimatorState(z=init.z / np.linalg.norm(init.z), gain=s.estimator_gain)
    # consensus runs over the real links; only the projectors use the perturbed matrix
    report = integrate(init, sl, view.graph, duration=s.estimator_budget_kt / s.estimator_gain,
                       threshold=s.estimator_threshold)
    state.estimate = EstimatorState(z=report.z, gain=s.estimator_gain)
    state.last_estimation = {
        "agent": i, "converged": report.converged, "max_angle": report.max_angle,
        "estimator_time": report.t, "lambda_error": report.lambda_error,
    }
    v = report.z[i]
    return v / np.linalg.norm(v)


def enforcement_step(state: AgentState, view: LocalView) -> tuple[EnforcementPhase, np.ndarray]:
    """Execute the agent's current phase and advance it along the flowchart.

    Returns the phase that ran and the velocity it produced; only
    GradientMove produces a nonzero velocity. Sub-failures keep the agent
    still and send it back to CheckLocal.
    """
    i = state.agent
    s = state.settings
    phase = state.phase
    zero = np.zeros(2)
    try:
        if phase is P.DONE:
            return phase, zero
        if phase is P.CHECK_LOCAL:
            if state.iterations >= s.max_iterations:
                state.exhausted = True
                state.phase = P.DONE
                return phase, zero
            state.phase = TRANSITIONS[(phase, is_locally_biconnected(view.graph, i))]
            return phase, zero
        if phase is P.PERTURB:
            state.perturbed = perturb(view.graph, i, s.epsilon).matrix
            state.phase = TRANSITIONS[(phase, None)]
            return phase, zero
        if phase is P.ESTIMATE_EIGENVALUES:
            state.lambda3 = float(view.provider.kth_smallest(state.perturbed, 3))
            state.phase = TRANSITIONS[(phase, None)]
            return phase, zero
        if phase is P.CHECK_CONDITION:
            if not is_connected(view.graph):
                raise BiconError("graph is disconnected; condition undefined")
            verdict = check_biconnectivity_condition(view.graph, i, s.epsilon, _Fixed(state.lambda3))
            state.verdict = verdict
            state.phase = TRANSITIONS[(phase, verdict.passed)]
            return phase, zero
        if phase is P.ESTIMATE_EIGENVECTOR:
            state.eigvec = _estimate_v3(state, view)
            state.phase = TRANSITIONS[(phase, None)]
            return phase, zero
        if phase is P.GRADIENT_MOVE:
            grad = eigenvalue_gradient(GradientInput(i, view.positions, view.model, state.eigvec, s.epsilon))
            state.iterations += 1
            state.phase = TRANSITIONS[(phase, None)]
            return phase, clip_speed(s.control_gain * grad, s.max_speed)
    except (BiconError, np.linalg.LinAlgError) as exc:
        log.debug("agent %d held in place during %s: %s", i, phase.value, exc)
        state.fault = f"{phase.value}: {exc}"
        state.phase = P.CHECK_LOCAL
        return phase, zero
    raise AssertionError(f"unhandled phase {phase}")


class _Fixed:
    """Provider replaying an eigenvalue already estimated in the previous phase."""

    def __init__(self, value):
        self.value = value

    def kth_smallest(self, matrix, k):
        return self.value


def run_cycle(state: AgentState, view: LocalView) -> tuple[list[EnforcementPhase], np.ndarray]:
    """Step the machine until it either moves the agent or stops."""
    trace = []
    velocity = np.zeros(2)
    state.restart()
    while True:
        phase, velocity = enforcement_step(state, view)
        trace.append(phase)
        if phase in (P.GRADIENT_MOVE, P.DONE):
            break
        if state.phase is P.DONE:
            trace.append(P.DONE)
            break
        if state.fault is not None and state.phase is P.CHECK_LOCAL:
            break
    return trace, velocity


def phase_edges(trace) -> list[tuple[EnforcementPhase, EnforcementPhase]]:
    return list(zip(trace, trace[1:]))


def speed(u) -> float:
    return float(math.hypot(*u))
