"""Comparison solvers: relaxed NLS, raw Huber, cooperative POCS, LOS oracle."""
from __future__ import annotations

import dataclasses

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core import Network
from .loss import LossKind
from .measurement import MeasurementSet
from .solver import (STAGE1_DEFAULT, EstimateState, Schedule, SolveTrace, StageConfig,
                     iterate_rounds, run_stage)


def _with_kind(cfg: StageConfig, kind: LossKind) -> StageConfig:
    return dataclasses.replace(cfg, loss_kind=kind)


def solve_relaxed_nls(net, ms, init, cfg: StageConfig = STAGE1_DEFAULT, sigma_n=0.5,
                      schedule=Schedule.JACOBI):
    return run_stage(net, ms, init, _with_kind(cfg, LossKind.RELAXED_NLS), sigma_n, schedule)


def solve_raw_huber(net, ms, init, cfg: StageConfig = STAGE1_DEFAULT, sigma_n=0.5,
                    schedule=Schedule.JACOBI):
    return run_stage(net, ms, init, _with_kind(cfg, LossKind.HUBER), sigma_n, schedule)


def project_onto_ball(x, center, radius) -> np.ndarray:
    """Closest point to ``x`` in the closed disk; a negative radius collapses to the center."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(center, dtype=float)
    radius = max(float(radius), 0.0)
    v = x - c
    d = float(np.hypot(*v))
    if d <= radius:
        return x.copy()
    return c + v * (radius / d)


def _pocs_corrections(P, edges, ranges, num_sensors, violated_only=False):
    """Sum over neighbors of (projection - x_i), and the averaging count, per sensor."""
    a, b = edges[:, 0], edges[:, 1]
    diff = P[a] - P[b]
    d = np.hypot(diff[:, 0], diff[:, 1])
    rad = np.maximum(ranges, 0.0)
    outside = d > rad
    # moving x_a onto the ball around x_b, and x_b onto the ball around x_a
    shrink = np.where(outside, (rad - d) / np.where(d > 0, d, 1.0), 0.0)
    step = shrink[:, None] * diff
    C = np.zeros_like(P)
    np.add.at(C, a, step)
    np.add.at(C, b, -step)
    ends = edges[outside] if violated_only else edges
    cnt = np.bincount(ends.reshape(-1), minlength=P.shape[0]).astype(float)
    return C[:num_sensors], cnt[:num_sensors]


def solve_pocs(net: Network, ms: MeasurementSet, init: EstimateState, max_iters: int = 50,
               step_policy=0.0, nu: float = 0.0, violated_only: bool = False):
    """Cooperative projection onto the measured range disks.

    Each round a sensor projects its estimate onto the disk of radius
    ``r_ij`` around every neighbor it lies outside of, and moves by
    ``(1 - lam) * mean(projection - x_i)`` over all its neighbors. ``step_policy``
    is the relaxation ``lam`` as a constant or a callable of the round index;
    0 gives the full averaged projection.
    """
    lam_of = step_policy if callable(step_policy) else (lambda _l, v=float(step_policy): v)
    edges, ranges = ms.edges, ms.ranges
    n = net.num_sensors
    counter = {"l": init.round}

    def round_fn(P):
        C, cnt = _pocs_corrections(P, edges, ranges, n, violated_only)
        lam = lam_of(counter["l"])
        counter["l"] += 1
        avg = C / np.maximum(cnt, 1.0)[:, None]
        return P[:n] + (1.0 - lam) * avg

    def cost_fn(P):
        # squared distance outside the disks, i.e. the relaxed NLS cost
        if len(edges) == 0:
            return 0.0
        d = np.hypot(*(P[edges[:, 0]] - P[edges[:, 1]]).T)
        return float(np.sum(np.maximum(d - ranges, 0.0) ** 2))

    return iterate_rounds(net, init, max_iters, nu, round_fn, cost_fn)


def anchorless_sensors(net: Network, edges) -> list[int]:
    """Sensors whose connected component contains no anchor."""
    n = net.num_nodes
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    anchored = set(labels[net.num_sensors:].tolist())
    return [i for i in range(net.num_sensors) if labels[i] not in anchored]


ORACLE_DEFAULT = StageConfig(LossKind.NLS, 0.01, 1.0, 50, 0.0)


def solve_oracle_los(net: Network, ms: MeasurementSet, init: EstimateState,
                     cfg: StageConfig = ORACLE_DEFAULT, sigma_n=0.5,
                     schedule=Schedule.JACOBI, pocs_iters: int = 50):
    """NLS descent on the LOS-labelled links only, started from a POCS solution.

    Lower-bound reference with perfect NLOS identification. NLOS links are
    dropped before any arithmetic, including the POCS warm start.
    """
    if ms.nlos is None:
        raise ValueError("labels required: oracle baseline needs LOS/NLOS labels")
    los = ms.subset(~ms.nlos)
    warnings = []
    stranded = anchorless_sensors(net, los.edges)
    if stranded:
        warnings.append(f"{len(stranded)} sensor(s) have no LOS path to an anchor: {stranded}")
    if len(los) == 0:
        warnings.append("no LOS links; estimates stay at init")
    start = init
    if pocs_iters > 0:
        start, _ = solve_pocs(net, los, init, pocs_iters)
        start = EstimateState(start.positions, 0)
    state, trace = run_stage(net, los, start, _with_kind(cfg, LossKind.NLS), sigma_n, schedule,
                             trace=SolveTrace(warnings=warnings))
    return state, trace
