"""Synthetic TOA range measurements with Gaussian noise and NLOS bias."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import Network


@dataclass(frozen=True)
class NoiseModel:
    sigma_n: float = 0.5
    nlos_prob: float = 0.5
    bias_gamma: float = 10.0  # mean of the exponential bias, meters

    def __post_init__(self):
        if not self.sigma_n > 0:
            raise ValueError(f"sigma_n must be > 0, got {self.sigma_n}")
        if not 0.0 <= self.nlos_prob <= 1.0:
            raise ValueError(f"nlos_prob must be in [0, 1], got {self.nlos_prob}")
        if not self.bias_gamma > 0:
            raise ValueError(f"bias_gamma must be > 0, got {self.bias_gamma}")


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """One range per network edge, aligned with ``Network.edges``.

    ``nlos`` holds the hidden ground-truth labels, or None when they are not
    known (e.g. real data). Solvers other than the oracle baseline never read it.
    """

    edges: np.ndarray
    ranges: np.ndarray
    nlos: np.ndarray | None = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        ranges = np.asarray(self.ranges, dtype=float).reshape(-1)
        if ranges.shape[0] != edges.shape[0]:
            raise ValueError("need exactly one range per edge")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "ranges", ranges)
        if self.nlos is not None:
            nlos = np.asarray(self.nlos, dtype=bool).reshape(-1)
            if nlos.shape[0] != edges.shape[0]:
                raise ValueError("need exactly one label per edge")
            object.__setattr__(self, "nlos", nlos)

    def __len__(self):
        return self.ranges.shape[0]

    @property
    def has_labels(self) -> bool:
        return self.nlos is not None

    def range_of(self, i: int, j: int) -> float:
        a, b = (i, j) if i < j else (j, i)
        hit = np.flatnonzero((self.edges[:, 0] == a) & (self.edges[:, 1] == b))
        if hit.size == 0:
            raise KeyError(f"no measurement for link ({a}, {b})")
        return float(self.ranges[hit[0]])

    def incident(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(other endpoint, range) for every link touching node ``i``."""
        m0 = self.edges[:, 0] == i
        m1 = self.edges[:, 1] == i
        others = np.concatenate([self.edges[m0, 1], self.edges[m1, 0]])
        rng = np.concatenate([self.ranges[m0], self.ranges[m1]])
        return others, rng

    def subset(self, mask) -> "MeasurementSet":
        mask = np.asarray(mask, dtype=bool)
        return MeasurementSet(self.edges[mask], self.ranges[mask],
                              None if self.nlos is None else self.nlos[mask])

    def with_ranges(self, ranges) -> "MeasurementSet":
        return MeasurementSet(self.edges, ranges, self.nlos)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.edges.tobytes())
        h.update(self.ranges.tobytes())
        if self.nlos is not None:
            h.update(self.nlos.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, MeasurementSet):
            return NotImplemented
        return self.digest() == other.digest() and (self.nlos is None) == (other.nlos is None)


def synthesize(net: Network, model: NoiseModel, seed) -> MeasurementSet:
    """Draw ``r = d + n`` (LOS) or ``r = d + b + n`` (NLOS) for each edge.

    Draw order is fixed (labels, then noise, then biases over the sorted edge
    list) so the same seed reproduces the set bit for bit.
    """
    pos = net.true_positions()
    rng = np.random.default_rng(seed)
    e = net.edges
    d = np.hypot(*(pos[e[:, 0]] - pos[e[:, 1]]).T) if len(e) else np.zeros(0)
    nlos = rng.random(len(e)) < model.nlos_prob
    noise = rng.normal(0.0, model.sigma_n, len(e))
    bias = rng.exponential(model.bias_gamma, len(e))
    ranges = d + noise + np.where(nlos, bias, 0.0)
    return MeasurementSet(e.copy(), ranges, nlos)


def noiseless(net: Network) -> MeasurementSet:
    """Exact LOS ranges; the sigma -> 0, P_N = 0 limit."""
    pos = net.true_positions()
    e = net.edges
    d = np.hypot(*(pos[e[:, 0]] - pos[e[:, 1]]).T) if len(e) else np.zeros(0)
    return MeasurementSet(e.copy(), d, np.zeros(len(e), dtype=bool))


def nlos_ratio(ms: MeasurementSet) -> float:
    if len(ms) == 0:
        raise ValueError("empty measurement set")
    if ms.nlos is None:
        raise ValueError("measurement set carries no LOS/NLOS labels")
    return float(np.count_nonzero(ms.nlos)) / len(ms)
