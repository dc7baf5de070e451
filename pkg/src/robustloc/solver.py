"""Distributed two-stage robust localization.

Stage I runs per-node gradient descent on the relaxed (convex) Huber cost.
Stage II starts from the Stage I estimates and descends the original Huber
cost with a small knee. Both stages execute as synchronous rounds of a
simulated message-passing network: in each round every sensor updates its
own estimate from its neighbors' broadcast positions and its incident range
measurements only.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .core import Network
from .loss import LossKind, cost_of_residual, dcost_du, edge_gradients, full_positions
from .measurement import MeasurementSet

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


class Schedule(str, enum.Enum):
    JACOBI = "jacobi"
    GAUSS_SEIDEL = "gauss_seidel"


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class StageConfig:
    loss_kind: LossKind = LossKind.RELAXED_HUBER
    step_mu: float = 0.04
    alpha: float = 2.0
    max_iters: int = 50
    conv_threshold_nu: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        if not self.step_mu > 0:
            raise ValueError(f"step_mu must be > 0, got {self.step_mu}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ValueError(f"max_iters must be a non-negative integer, got {self.max_iters}")
        if not self.conv_threshold_nu >= 0:
            raise ValueError(f"conv_threshold_nu must be >= 0, got {self.conv_threshold_nu}")
        if self.loss_kind.needs_knee and not self.alpha > 0:
            raise ValueError(f"alpha must be > 0 for {self.loss_kind.value}, got {self.alpha}")

    def knee(self, sigma_n: float) -> float:
        return self.alpha * sigma_n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_kind"] = self.loss_kind.value
        return d


STAGE1_DEFAULT = StageConfig(LossKind.RELAXED_HUBER, 0.04, 2.0, 50, 0.0)
STAGE2_DEFAULT = StageConfig(LossKind.HUBER, 0.01, 0.1, 50, 0.0)


@dataclass
class EstimateState:
    positions: np.ndarray
    round: int = 0

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=float).reshape(-1, 2)

    def copy(self) -> "EstimateState":
        return EstimateState(self.positions.copy(), self.round)


@dataclass
class SolveTrace:
    costs: list[float] = field(default_factory=list)
    displacements: list[float] = field(default_factory=list)
    rounds: int = 0
    reason: Termination = Termination.MAX_ITERS
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"costs": list(self.costs), "displacements": list(self.displacements),
                "rounds": self.rounds, "reason": Termination(self.reason).value,
                "warnings": list(self.warnings)}

    @classmethod
    def from_dict(cls, d) -> "SolveTrace":
        return cls([float(c) for c in d["costs"]], [float(c) for c in d["displacements"]],
                   int(d["rounds"]), Termination(d["reason"]), list(d.get("warnings", [])))


class DivergenceError(RuntimeError):
    def __init__(self, msg, state: EstimateState, trace: SolveTrace):
        super().__init__(msg)
        self.state = state
        self.trace = trace


def _local_gradient(kind, K, xi, nbr_pos, ranges) -> np.ndarray:
    diff = xi[None, :] - nbr_pos
    d = np.hypot(diff[:, 0], diff[:, 1])
    coef = dcost_du(kind, d - ranges, K)
    coef = np.where(d > 0, coef / np.where(d > 0, d, 1.0), 0.0)
    return (coef[:, None] * diff).sum(axis=0)


def node_update(i: int, neighbor_views: dict, local_est, ms: MeasurementSet,
                cfg: StageConfig, sigma_n: float) -> np.ndarray:
    """One gradient step at node ``i`` using only locally available data.

    ``neighbor_views`` maps every neighbor id to the position it broadcast;
    only links incident to ``i`` are read from ``ms``.
    """
    others, ranges = ms.incident(i)
    missing = set(others.tolist()) - set(neighbor_views)
    if missing:
        raise KeyError(f"node {i}: no view of neighbor(s) {sorted(missing)}")
    xi = np.asarray(local_est, dtype=float)
    if len(others) == 0:
        return xi.copy()
    nbr = np.array([neighbor_views[int(j)] for j in others], dtype=float).reshape(-1, 2)
    g = _local_gradient(cfg.loss_kind, cfg.knee(sigma_n), xi, nbr, ranges)
    return xi - cfg.step_mu * g


class _Incidence:
    """Per-sensor incident-link tables, built once per solve."""

    def __init__(self, num_sensors, edges, ranges):
        self.others = []
        self.ranges = []
        for i in range(num_sensors):
            m0 = edges[:, 0] == i
            m1 = edges[:, 1] == i
            self.others.append(np.concatenate([edges[m0, 1], edges[m1, 0]]))
            self.ranges.append(np.concatenate([ranges[m0], ranges[m1]]))


def _jacobi_gradient(kind, K, P, edges, ranges, num_sensors):
    g_edge = edge_gradients(kind, K, P, edges, ranges)
    G = np.zeros_like(P)
    np.add.at(G, edges[:, 0], g_edge)
    np.add.at(G, edges[:, 1], -g_edge)
    return G[:num_sensors]


def iterate_rounds(net: Network, init: EstimateState, max_iters: int, nu: float,
                   round_fn, cost_fn, trace: SolveTrace | None = None):
    """Generic synchronous round loop with the convergence and divergence rules.

    ``round_fn(P)`` takes all node positions (sensors then anchors) and
    returns the next sensor estimates.
    """
    trace = trace or SolveTrace()
    X = np.array(init.positions, dtype=float)
    P = full_positions(net, X)
    n = net.num_sensors
    start = init.round
    trace.reason = Termination.MAX_ITERS
    for _ in range(max_iters):
        X_new = round_fn(P)
        disp = float(np.max(np.hypot(*(X_new - P[:n]).T))) if n else 0.0
        trace.rounds += 1
        if not np.all(np.isfinite(X_new)) or np.max(np.abs(X_new), initial=0.0) > DIVERGENCE_LIMIT:
            trace.costs.append(math.inf)
            trace.displacements.append(disp)
            trace.reason = Termination.DIVERGED
            raise DivergenceError(
                f"estimates diverged after {trace.rounds} rounds",
                EstimateState(P[:n].copy(), start + trace.rounds - 1), trace)
        P[:n] = X_new
        cost = cost_fn(P)
        if trace.costs and cost > trace.costs[-1]:
            log.debug("round %d: cost rose %.6g -> %.6g", trace.rounds, trace.costs[-1], cost)
        trace.costs.append(cost)
        trace.displacements.append(disp)
        if disp <= nu:
            trace.reason = Termination.CONVERGED
            break
    return EstimateState(P[:n].copy(), start + trace.rounds), trace


def run_stage(net: Network, ms: MeasurementSet, init: EstimateState, cfg: StageConfig,
              sigma_n: float, schedule=Schedule.JACOBI, trace: SolveTrace | None = None):
    """Run one stage of per-node descent rounds. Returns ``(state, trace)``.

    Jacobi: every sensor steps from the round-``l`` snapshot. Gauss-Seidel:
    sensors step in ascending index order and see the fresh estimates of
    lower-indexed neighbors.
    """
    schedule = Schedule(schedule)
    if np.asarray(init.positions).shape != (net.num_sensors, 2):
        raise ValueError("init must hold one estimate per sensor")
    kind = cfg.loss_kind
    K = cfg.knee(sigma_n)
    mu = cfg.step_mu
    edges, ranges = ms.edges, ms.ranges
    n = net.num_sensors

    def cost_fn(P):
        if len(edges) == 0:
            return 0.0
        d = np.hypot(*(P[edges[:, 0]] - P[edges[:, 1]]).T)
        return float(np.sum(cost_of_residual(kind, d - ranges, K)))

    if schedule is Schedule.JACOBI:
        def round_fn(P):
            return P[:n] - mu * _jacobi_gradient(kind, K, P, edges, ranges, n)
    else:
        inc = _Incidence(n, edges, ranges)

        def round_fn(P):
            Q = P.copy()
            for i in range(n):
                if len(inc.others[i]):
                    g = _local_gradient(kind, K, Q[i], Q[inc.others[i]], inc.ranges[i])
                    Q[i] = Q[i] - mu * g
            return Q[:n]

    return iterate_rounds(net, init, cfg.max_iters, cfg.conv_threshold_nu, round_fn, cost_fn, trace)


def solve_two_stage(net: Network, ms: MeasurementSet, init: EstimateState,
                    stage1: StageConfig = STAGE1_DEFAULT, stage2: StageConfig = STAGE2_DEFAULT,
                    sigma_n: float = 0.5, schedule=Schedule.JACOBI, strict: bool = True):
    """Relaxed-Huber descent followed by Huber refinement from its output.

    ``strict=False`` allows other loss kinds in either stage (ablations).
    Returns ``(state, trace1, trace2)``.
    """
    if strict and (stage1.loss_kind is not LossKind.RELAXED_HUBER
                   or stage2.loss_kind is not LossKind.HUBER):
        raise ValueError("two-stage solve expects relaxed_huber then huber (pass strict=False to override)")
    s1, t1 = run_stage(net, ms, init, stage1, sigma_n, schedule)
    s2, t2 = run_stage(net, ms, s1, stage2, sigma_n, schedule)
    return s2, t1, t2


def choose_alpha2(nlos_ratio_estimate: float | None = None, *, threshold: float = 0.5,
                  robust_alpha: float = 0.1, efficient_alpha: float = 1.5) -> float:
    """Stage II Huber multiplier from an optional prior on the NLOS link ratio.

    Unknown or high ratios keep the knee tiny so refinement cannot undo
    Stage I; a low ratio allows the usual 1.5-2 sigma knee.
    """
    if nlos_ratio_estimate is None or (isinstance(nlos_ratio_estimate, float)
                                       and math.isnan(nlos_ratio_estimate)):
        return robust_alpha
    if not 0.0 <= nlos_ratio_estimate <= 1.0:
        raise ValueError(f"NLOS ratio must be in [0, 1], got {nlos_ratio_estimate}")
    return robust_alpha if nlos_ratio_estimate > threshold else efficient_alpha


def gaussian_init(net: Network, std: float, rng) -> EstimateState:
    """Truth plus isotropic Gaussian perturbation (requires ground truth)."""
    if net.true_sensor_positions is None:
        raise ValueError("gaussian_init needs true sensor positions; use centroid_init")
    rng = np.random.default_rng(rng)
    noise = rng.normal(0.0, std, size=(net.num_sensors, 2))
    return EstimateState(net.true_sensor_positions + noise)


def centroid_init(net: Network) -> EstimateState:
    c = net.anchor_positions.mean(axis=0) if net.num_anchors else np.zeros(2)
    return EstimateState(np.tile(c, (net.num_sensors, 1)))
