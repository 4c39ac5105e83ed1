"""Consensus-based estimation of a Laplacian eigenvector.

Every agent i keeps a length-n estimate z_i and runs

    dz_i/dt = k * (sum_j a_ij (z_j - z_i) - P_i z_i),

where P_i projects onto the i-th column of the shifted matrix L - lam*I.
Stacked, dz/dt = -M z with M = k (L kron I + blockdiag(P_1..P_n)); the kernel
of M is span(1 kron v) for the eigenvector v paired with lam.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateColumnError, InputError, InstabilityError,
                     NonConvergenceError, PreconditionError)
from .graph import WeightedGraph, is_connected, laplacian
from .spectral import eigendecompose

COLUMN_TOL = 1e-14
LAMBDA_TOL = 1e-6
ALIGN_TOL = 1e-3
TIE_GAP = 1e-9
# default simulated duration is DEFAULT_KT / k time units
DEFAULT_KT = 2e5


@dataclass(frozen=True, eq=False)
class ShiftedLaplacian:
    base: np.ndarray
    shift: float
    matrix: np.ndarray

    @property
    def n(self):
        return self.base.shape[0]


@dataclass(frozen=True, eq=False)
class ProjectorBlocks:
    blocks: np.ndarray  # shape (n, n, n); blocks[i] is P_i

    def block_diagonal(self) -> np.ndarray:
        n = self.blocks.shape[0]
        out = np.zeros((n * n, n * n))
        for i in range(n):
            out[i * n:(i + 1) * n, i * n:(i + 1) * n] = self.blocks[i]
        return out


@dataclass
class EstimatorState:
    z: np.ndarray  # shape (n, n); row i is agent i's estimate
    gain: float
    t: float = 0.0

    def __post_init__(self):
        self.z = np.array(self.z, dtype=float)
        if self.z.ndim != 2 or self.z.shape[0] != self.z.shape[1]:
            raise InputError(f"estimator state must be n x n, got {self.z.shape}")
        if not np.all(np.isfinite(self.z)):
            raise InputError("estimator state has non-finite entries")
        if not (math.isfinite(self.gain) and self.gain > 0):
            raise InputError(f"gain must be positive, got {self.gain}")


@dataclass
class EstimatorReport:
    z: np.ndarray
    angles: np.ndarray  # per-agent angle to the reference eigenvector (rad)
    reference: np.ndarray
    t: float
    steps: int
    converged: bool
    time_to_threshold: float | None
    threshold: float
    lambda_error: float
    stalled: bool = False
    lyapunov: list[float] = field(default_factory=list)
    trajectory: list[tuple[float, np.ndarray]] = field(default_factory=list)

    @property
    def max_angle(self) -> float:
        return float(np.max(self.angles))

    def consensus_vector(self) -> np.ndarray:
        return normalize_sign(_agent_mean(self.z))


def build_shifted(base, shift: float) -> ShiftedLaplacian:
    base = np.asarray(base, dtype=float)
    if base.ndim != 2 or base.shape[0] != base.shape[1] or not np.allclose(base, base.T, rtol=0, atol=1e-10):
        raise InputError("base matrix must be square and symmetric")
    return ShiftedLaplacian(base=base, shift=float(shift), matrix=base - shift * np.eye(base.shape[0]))


def build_projectors(sl: ShiftedLaplacian) -> ProjectorBlocks:
    m = sl.matrix
    n = m.shape[0]
    blocks = np.empty((n, n, n))
    for i in range(n):
        col = m[:, i]
        nrm2 = float(col @ col)
        if nrm2 <= COLUMN_TOL**2:
            raise DegenerateColumnError(f"column {i} of the shifted Laplacian is zero; projector undefined")
        blocks[i] = np.outer(col, col) / nrm2
    return ProjectorBlocks(blocks)


def agent_derivative(z_i, neighbor_z, P_i, k: float) -> np.ndarray:
    """Right-hand side for one agent, from its own state and its neighbors' only."""
    z_i = np.asarray(z_i, dtype=float)
    acc = np.zeros_like(z_i)
    for a_ij, z_j in neighbor_z:
        acc += a_ij * (np.asarray(z_j, dtype=float) - z_i)
    return k * (acc - P_i @ z_i)


def stacked_derivative(z, graph: WeightedGraph, projectors: ProjectorBlocks, k: float) -> np.ndarray:
    """All agents' derivatives, each evaluated through :func:`agent_derivative`."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    for i in range(graph.n):
        nbrs = [(graph.weights[i, j], z[j]) for j in graph.neighbors(i)]
        out[i] = agent_derivative(z[i], nbrs, projectors.blocks[i], k)
    return out


def estimator_matrix(graph: WeightedGraph, projectors: ProjectorBlocks, k: float) -> np.ndarray:
    n = graph.n
    return k * (np.kron(laplacian(graph), np.eye(n)) + projectors.block_diagonal())


def stable_step(graph: WeightedGraph, k: float, margin: float = 0.1) -> float:
    """Step h with h * lambda_max(M) <= margin, via a Gershgorin bound on M."""
    bound = k * (2.0 * float(graph.weights.sum(axis=1).max()) + 1.0)
    return margin / bound


def _step_matrix(M: np.ndarray, h: float, method: str) -> np.ndarray:
    A = -h * M
    eye = np.eye(M.shape[0])
    if method == "euler":
        return eye + A
    if method == "rk4":
        A2 = A @ A
        return eye + A + A2 / 2.0 + (A2 @ A) / 6.0 + (A2 @ A2) / 24.0
    raise InputError(f"unknown integrator {method!r}")


def _agent_mean(z):
    # align agents' signs with agent 0 before averaging
    ref = z[0]
    signs = np.where(z @ ref < 0, -1.0, 1.0)
    return (signs[:, None] * z).mean(axis=0)


def normalize_sign(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return v.copy()
    v = v / nrm
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v


def alignment_angles(z, reference) -> np.ndarray:
    """Sign-agnostic angle between each row of ``z`` and ``reference``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    ref = np.asarray(reference, dtype=float)
    ref = ref / np.linalg.norm(ref)
    norms = np.linalg.norm(z, axis=1)
    cos = np.divide(np.abs(z @ ref), norms, out=np.zeros_like(norms), where=norms > 0)
    return np.arccos(np.clip(cos, 0.0, 1.0))


def pairwise_max_angle(z) -> float:
    z = np.asarray(z, dtype=float)
    zn = z / np.linalg.norm(z, axis=1, keepdims=True)
    cos = np.clip(np.abs(zn @ zn.T), 0.0, 1.0)
    return float(np.arccos(cos.min()))


def reference_eigenpair(base, shift: float) -> tuple[float, np.ndarray]:
    """Eigenpair of ``base`` whose eigenvalue is closest to ``shift``."""
    dec = eigendecompose(base)
    idx = int(np.argmin(np.abs(dec.values - shift)))
    return float(dec.values[idx]), dec.vectors[:, idx].copy()


def initial_state(n: int, reference, gain: float, seed: int | None = None, rng=None) -> EstimatorState:
    """Seeded uniform [-1, 1] entries, redrawn while the kernel component is negligible."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    kern = np.kron(np.ones(n), reference) / (math.sqrt(n) * np.linalg.norm(reference))
    while True:
        z = rng.uniform(-1.0, 1.0, size=(n, n))
        if abs(float(z.ravel() @ kern)) >= 1e-6:
            return EstimatorState(z=z, gain=gain)


def integrate(initial: EstimatorState, sl: ShiftedLaplacian, graph: WeightedGraph, duration: float | None = None,
              h: float | None = None, *, method: str = "rk4", threshold: float = ALIGN_TOL,
              check_every: int = 100, stop_at_threshold: bool = True, margin: float = 0.1,
              record_lyapunov: bool = False, record_trajectory: bool = False) -> EstimatorReport:
    """Advance dz/dt = -M z on a frozen graph.

    The flow is linear and autonomous, so each RK4 (or Euler) step is the
    fixed polynomial step matrix applied to z; ``check_every`` steps are
    composed between convergence checks.
    """
    if graph.n != sl.n or initial.z.shape != (graph.n, graph.n):
        raise InputError("graph, shifted matrix and estimator state sizes disagree")
    if not is_connected(graph):
        raise PreconditionError("estimator needs a connected communication graph")
    k = initial.gain
    n = graph.n
    lam_true, ref = reference_eigenpair(sl.base, sl.shift)
    lam_err = abs(lam_true - sl.shift)
    projectors = build_projectors(sl)
    M = estimator_matrix(graph, projectors, k)
    if h is None:
        h = stable_step(graph, k, margin)
    if duration is None:
        duration = DEFAULT_KT / k
    total_steps = int(math.ceil(duration / h - 1e-9))
    check_every = max(1, int(check_every))
    S = _step_matrix(M, h, method)
    S_chunk = np.linalg.matrix_power(S, check_every)

    z = initial.z.ravel().copy()
    t0 = initial.t
    steps = 0
    hit_time = None
    lyap = [float(z @ M @ z)] if record_lyapunov else []
    traj = [(t0, z.reshape(n, n).copy())] if record_trajectory else []
    prev_angles = alignment_angles(z.reshape(n, n), ref)
    if prev_angles.max() <= threshold:
        hit_time = t0
    stalled = False
    while steps < total_steps and not (stop_at_threshold and hit_time is not None):
        nstep = min(check_every, total_steps - steps)
        norm_before = np.linalg.norm(z)
        z = (S_chunk if nstep == check_every else np.linalg.matrix_power(S, nstep)) @ z
        steps += nstep
        norm_after = np.linalg.norm(z)
        if not np.all(np.isfinite(z)) or norm_after > 10.0 * norm_before:
            raise InstabilityError(
                f"estimator diverged (|z| {norm_before:.3g} -> {norm_after:.3g}); h*k = {h * k:.6g} is too large",
                hk=h * k)
        if record_lyapunov:
            lyap.append(float(z @ M @ z))
        if record_trajectory:
            traj.append((t0 + steps * h, z.reshape(n, n).copy()))
        angles = alignment_angles(z.reshape(n, n), ref)
        if hit_time is None and angles.max() <= threshold:
            hit_time = t0 + steps * h
        if np.max(np.abs(angles - prev_angles)) < 1e-9 and nstep == check_every:
            stalled = True
            break
        prev_angles = angles

    angles = alignment_angles(z.reshape(n, n), ref)
    return EstimatorReport(
        z=z.reshape(n, n), angles=angles, reference=ref, t=t0 + steps * h, steps=steps,
        converged=bool(angles.max() <= threshold), time_to_threshold=hit_time, threshold=threshold,
        lambda_error=lam_err, stalled=stalled, lyapunov=lyap, trajectory=traj,
    )


def has_eigenvalue_ties(matrix, gap: float = TIE_GAP) -> bool:
    vals = eigendecompose(matrix).values
    return bool(np.any(np.diff(vals) <= gap))


def break_ties(graph: WeightedGraph, seed: int | None = None, scale: float = 1e-6) -> WeightedGraph:
    """Add seeded uniform [0, scale] jitter to existing edge weights."""
    rng = np.random.default_rng(seed)
    w = np.array(graph.weights)
    iu, ju = np.nonzero(np.triu(w > 0, k=1))
    jitter = rng.uniform(0.0, scale, size=iu.size)
    w[iu, ju] += jitter
    w[ju, iu] += jitter
    return WeightedGraph(w)


def estimate_eigenvector(graph: WeightedGraph, shift: float, k: float = 50.0, seed: int = 0, *,
                         matrix=None, duration: float | None = None, threshold: float = ALIGN_TOL,
                         initial: EstimatorState | None = None) -> np.ndarray:
    """Unit eigenvector of ``matrix`` (default: the graph Laplacian) for eigenvalue ``shift``.

    Returns the agents' sign-aligned average with the first nonzero entry
    positive. Raises NonConvergenceError if the alignment threshold is not
    met within ``duration``.
    """
    if not is_connected(graph):
        raise PreconditionError("estimator needs a connected communication graph")
    base = laplacian(graph) if matrix is None else np.asarray(matrix, dtype=float)
    if has_eigenvalue_ties(base):
        if matrix is not None:
            raise PreconditionError("target matrix has repeated eigenvalues; eigenvector is not unique")
        graph = break_ties(graph, seed)
        base = laplacian(graph)
        shift = reference_eigenpair(base, shift)[0]
    sl = build_shifted(base, shift)
    _, ref = reference_eigenpair(base, shift)
    state = initial if initial is not None else initial_state(graph.n, ref, k, seed=seed)
    report = integrate(state, sl, graph, duration, threshold=threshold)
    if not report.converged:
        raise NonConvergenceError(
            f"estimator did not align within {threshold:g} rad by t={report.t:.6g} "
            f"(max angle {report.max_angle:.3g}, eigenvalue error {report.lambda_error:.3g})",
            report=report)
    return report.consensus_vector()


def write_trajectory_csv(report: EstimatorReport, path) -> None:
    """One row per (t, agent, component, value)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "agent", "component", "value"])
        for t, z in report.trajectory:
            for i, row in enumerate(z):
                for c, val in enumerate(row):
                    w.writerow([repr(float(t)), i, c, repr(float(val))])
