"""Adaptive affinity graph over instances and its Laplacian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFeatures, ShapeMismatch, ValidationError


def pairwise_sq_dists(features: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``features``."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ShapeMismatch(f"features must be 2-D, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ShapeMismatch("need at least two rows")
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    # the expansion loses symmetry and exact zeros to round-off
    d = 0.5 * (d + d.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _simplex_sort(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    active = u - css / k > 0
    rho = k[active][-1]
    theta = css[rho - 1] / rho
    # v - theta can land one ulp above 1 when a single entry is active
    return np.clip(v - theta, 0.0, 1.0)


def _simplex_newton(v: np.ndarray, max_iter: int = 100) -> np.ndarray:
    # Root of g(t) = sum((v - t)_+) - 1, which is convex, piecewise linear and
    # decreasing; Newton from the left of the root converges monotonically and
    # terminates once the active set is right.
    theta = v.min() - 1.0 / v.size
    for _ in range(max_iter):
        active = v > theta
        g = (v[active] - theta).sum() - 1.0
        step = g / active.sum()
        theta += step
        if step <= 1e-15 * max(1.0, abs(theta)):
            break
    return np.clip(v - theta, 0.0, 1.0)


def project_simplex(v, method: str = "sort") -> np.ndarray:
    """Euclidean projection onto {a : a >= 0, sum(a) = 1}.

    ``method`` is ``"sort"`` (exact threshold search) or ``"newton"``
    (Newton iteration on the threshold equation).
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValidationError("cannot project an empty vector")
    if method == "sort":
        return _simplex_sort(v)
    if method == "newton":
        return _simplex_newton(v)
    raise ValueError(f"unknown projection method {method!r}")


@dataclass(frozen=True)
class AffinityGraph:
    affinity: np.ndarray
    gamma: float
    self_loops_excluded: bool = True

    @property
    def n(self) -> int:
        return self.affinity.shape[0]


@dataclass(frozen=True)
class GraphLaplacian:
    laplacian: np.ndarray
    degree: np.ndarray

    @property
    def n(self) -> int:
        return self.laplacian.shape[0]


def learn_affinity(features: np.ndarray, gamma: float = 1.0,
                   method: str = "sort") -> AffinityGraph:
    """Row-wise simplex-constrained affinities minimizing
    ``sum_j 0.5 * |x_i - x_j|^2 * a_ij + gamma * a_ij^2``.

    Each row is the projection of ``-dist_i / (4 gamma)`` onto the simplex over
    the other n-1 instances; the diagonal is zero.
    """
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    dist = pairwise_sq_dists(features)
    n = dist.shape[0]
    if gamma < 1e-12:
        off = dist[~np.eye(n, dtype=bool)]
        if np.any(off == 0.0):
            raise DegenerateFeatures("duplicate feature rows with vanishing gamma")
    a = np.zeros((n, n))
    idx = np.arange(n)
    for i in range(n):
        others = idx != i
        a[i, others] = project_simplex(-dist[i, others] / (4.0 * gamma), method)
    a.setflags(write=False)
    return AffinityGraph(a, float(gamma))


def affinity_kkt_residuals(features: np.ndarray, graph: AffinityGraph) -> np.ndarray:
    """Per-row worst KKT violation of the affinity subproblem.

    For row i with threshold w: active entries need ``u/(4g) + a - w = 0`` and
    inactive entries need multiplier ``u/(4g) - w >= 0``; the simplex
    constraint residual is included as well.
    """
    dist = pairwise_sq_dists(features)
    a = graph.affinity
    n = a.shape[0]
    out = np.empty(n)
    for i in range(n):
        others = np.arange(n) != i
        c = dist[i, others] / (4.0 * graph.gamma)
        ai = a[i, others]
        pos = ai > 0
        w = np.mean(c[pos] + ai[pos])
        stat = np.abs(c[pos] + ai[pos] - w)
        mult = c[~pos] - w
        worst = max(stat.max(initial=0.0), -mult.min(initial=0.0),
                    abs(ai.sum() - 1.0), -ai.min())
        out[i] = worst
    return out


def laplacian(graph: AffinityGraph) -> GraphLaplacian:
    """``L = diag(S 1) - S`` with ``S = (A + A^T) / 2``."""
    s = 0.5 * (graph.affinity + graph.affinity.T)
    deg = s.sum(axis=1)
    lap = np.diag(deg) - s
    lap.setflags(write=False)
    deg.setflags(write=False)
    return GraphLaplacian(lap, deg)


def empty_laplacian(n: int) -> GraphLaplacian:
    """Laplacian of the edgeless graph on ``n`` nodes."""
    return GraphLaplacian(np.zeros((n, n)), np.zeros(n))
