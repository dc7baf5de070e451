"""Per-link costs and gradients: NLS, relaxed NLS, Huber, relaxed Huber.

All four costs are functions of the residual ``u = ||x_i - x_j|| - r_ij``.
The relaxed variants are zero whenever the estimated distance is inside the
measured range (``u <= 0``), which makes the network cost convex in the
positions.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class LossKind(str, enum.Enum):
    NLS = "nls"
    RELAXED_NLS = "relaxed_nls"
    HUBER = "huber"
    RELAXED_HUBER = "relaxed_huber"

    @property
    def needs_knee(self) -> bool:
        return self in (LossKind.HUBER, LossKind.RELAXED_HUBER)

    @property
    def is_relaxed(self) -> bool:
        return self in (LossKind.RELAXED_NLS, LossKind.RELAXED_HUBER)


@dataclass(frozen=True)
class LossParams:
    K: float = 1.0

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError(f"Huber knee K must be > 0, got {self.K}")

    @classmethod
    def from_alpha(cls, alpha: float, sigma_n: float) -> "LossParams":
        return cls(alpha * sigma_n)


def _knee(kind, K):
    kind = LossKind(kind)
    if kind.needs_knee and not K > 0:
        raise ValueError(f"{kind.value} needs K > 0, got {K}")
    return kind


def residual(xi, xj, r) -> float:
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    return float(np.hypot(*(xi - xj)) - r)


def cost_of_residual(kind, u, K=1.0):
    """Vectorized link cost as a function of the residual ``u``."""
    kind = _knee(kind, K)
    u = np.asarray(u, dtype=float)
    if kind is LossKind.NLS:
        return u * u
    if kind is LossKind.RELAXED_NLS:
        return np.where(u > 0, u * u, 0.0)
    a = np.abs(u)
    huber = np.where(a < K, u * u, 2.0 * K * a - K * K)
    if kind is LossKind.HUBER:
        return huber
    return np.where(u > 0, huber, 0.0)


def dcost_du(kind, u, K=1.0):
    """Vectorized derivative of the link cost with respect to the distance.

    The Huber linear branch carries ``sign(u)`` so it descends for large
    negative residuals as well.
    """
    kind = _knee(kind, K)
    u = np.asarray(u, dtype=float)
    if kind is LossKind.NLS:
        return 2.0 * u
    if kind is LossKind.RELAXED_NLS:
        return np.where(u > 0, 2.0 * u, 0.0)
    dh = np.where(np.abs(u) < K, 2.0 * u, 2.0 * K * np.sign(u))
    if kind is LossKind.HUBER:
        return dh
    return np.where(u > 0, dh, 0.0)


def link_cost(kind, params: LossParams | float, u: float) -> float:
    K = params.K if isinstance(params, LossParams) else params
    return float(cost_of_residual(kind, u, K))


def link_grad(kind, params: LossParams | float, xi, xj, r) -> np.ndarray:
    """Gradient of one link's cost with respect to ``xi``.

    Coincident nodes get the zero vector.
    """
    K = params.K if isinstance(params, LossParams) else params
    diff = np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)
    d = float(np.hypot(*diff))
    if d == 0.0:
        return np.zeros(2)
    return float(dcost_du(kind, d - r, K)) * diff / d


def edge_gradients(kind, K, positions, edges, ranges):
    """Per-edge gradient with respect to the first endpoint, shape ``(E, 2)``.

    The gradient with respect to the second endpoint is the negation.
    """
    diff = positions[edges[:, 0]] - positions[edges[:, 1]]
    d = np.hypot(diff[:, 0], diff[:, 1])
    coef = dcost_du(kind, d - ranges, K)
    safe = np.where(d > 0, d, 1.0)
    coef = np.where(d > 0, coef / safe, 0.0)
    return coef[:, None] * diff


def full_positions(net, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape != (net.num_sensors, 2):
        raise ValueError(f"expected sensor estimates of shape ({net.num_sensors}, 2), got {X.shape}")
    return np.vstack([X, net.anchor_positions])


def network_cost(kind, params: LossParams | float, X, net, ms) -> float:
    """Sum of link costs over every measured link (anchors at known positions)."""
    K = params.K if isinstance(params, LossParams) else params
    P = full_positions(net, X)
    e = ms.edges
    if len(e) == 0:
        return 0.0
    d = np.hypot(*(P[e[:, 0]] - P[e[:, 1]]).T)
    return float(np.sum(cost_of_residual(kind, d - ms.ranges, K)))
