"""Geometry and network topology.

Node indexing: ``0..N-1`` are sensors (unknown positions), ``N..N+M-1`` are
anchors (known positions). Positions are float64 arrays of shape ``(2,)``;
collections of positions are ``(n, 2)`` arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class TopologyError(ValueError):
    pass


def distance(a, b) -> float:
    """Euclidean distance between two 2D points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("positions must be finite")
    return float(math.hypot(a[0] - b[0], a[1] - b[1]))


@dataclass(frozen=True, eq=False)
class Network:
    """Sensors + anchors and the set of measured links.

    ``edges`` is a sorted ``(E, 2)`` int array with ``i < j`` per row.
    ``true_sensor_positions`` may be None when ground truth is unknown.
    """

    num_sensors: int
    num_anchors: int
    anchor_positions: np.ndarray
    edges: np.ndarray
    true_sensor_positions: np.ndarray | None = None

    def __post_init__(self):
        anchors = np.asarray(self.anchor_positions, dtype=float).reshape(-1, 2)
        if anchors.shape[0] != self.num_anchors:
            raise TopologyError(
                f"expected {self.num_anchors} anchor positions, got {anchors.shape[0]}")
        if not np.all(np.isfinite(anchors)):
            raise TopologyError("anchor positions must be finite")
        object.__setattr__(self, "anchor_positions", anchors)

        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        n = self.num_nodes
        if edges.size:
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise TopologyError("edges must satisfy i < j (no self loops)")
            if edges.min() < 0 or edges.max() >= n:
                raise TopologyError(f"edge references node outside 0..{n - 1}")
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges = edges[order]
        if edges.shape[0] > 1 and np.any(np.all(np.diff(edges, axis=0) == 0, axis=1)):
            raise TopologyError("duplicate edges")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

        if self.true_sensor_positions is not None:
            truth = np.asarray(self.true_sensor_positions, dtype=float).reshape(-1, 2)
            if truth.shape[0] != self.num_sensors:
                raise TopologyError("true_sensor_positions must have one row per sensor")
            object.__setattr__(self, "true_sensor_positions", truth)

    @property
    def num_nodes(self) -> int:
        return self.num_sensors + self.num_anchors

    def is_anchor(self, i: int) -> bool:
        self._check(i)
        return i >= self.num_sensors

    def _check(self, i):
        if not (0 <= int(i) < self.num_nodes):
            raise TopologyError(f"invalid node id {i} (network has {self.num_nodes} nodes)")

    @cached_property
    def _neighbor_map(self) -> dict[int, tuple[int, ...]]:
        nbrs: dict[int, list[int]] = {i: [] for i in range(self.num_nodes)}
        for i, j in self.edges.tolist():
            nbrs[i].append(j)
            nbrs[j].append(i)
        return {i: tuple(sorted(v)) for i, v in nbrs.items()}

    def neighbors(self, i: int) -> set[int]:
        self._check(i)
        return set(self._neighbor_map[int(i)])

    def degree(self, i: int) -> int:
        self._check(i)
        return len(self._neighbor_map[int(i)])

    def true_positions(self) -> np.ndarray:
        """All node positions (sensors then anchors); requires ground truth."""
        if self.true_sensor_positions is None:
            raise TopologyError("network has no true sensor positions")
        return np.vstack([self.true_sensor_positions, self.anchor_positions])

    def with_edges(self, edges) -> "Network":
        return Network(self.num_sensors, self.num_anchors, self.anchor_positions,
                       edges, self.true_sensor_positions)


def neighbors(net: Network, i: int) -> set[int]:
    return net.neighbors(i)


def disk_edges(positions, comm_radius: float) -> np.ndarray:
    """All pairs ``i < j`` with distance ``<= comm_radius``."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = pos.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    if math.isinf(comm_radius):
        keep = np.ones(iu.shape, dtype=bool)
    else:
        d = np.hypot(*(pos[iu] - pos[ju]).T)
        keep = d <= comm_radius
        if comm_radius <= 0:
            keep[:] = False
    return np.column_stack([iu[keep], ju[keep]])


def build_topology(positions, comm_radius: float, num_anchors: int = 0) -> Network:
    """Disk-graph network over ``positions`` (sensors first, anchors last).

    ``comm_radius=math.inf`` gives the complete graph. A radius of 0 yields
    no edges, even for coincident nodes.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions must be finite")
    if not (comm_radius >= 0):
        raise ValueError("comm_radius must be >= 0")
    n_sensors = pos.shape[0] - num_anchors
    if n_sensors < 0:
        raise ValueError("more anchors than positions")
    return Network(n_sensors, num_anchors, pos[n_sensors:], disk_edges(pos, comm_radius),
                   pos[:n_sensors].copy())


CORNER_ANCHORS = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]])
