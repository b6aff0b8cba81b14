"""Exact and semi-exact hard-core computations.

Partition-function magnitudes are carried as natural logarithms throughout
(values like exp(lambda * volume) overflow doubles long before the models of
interest stop being tractable). The branching recursion here is the reference
oracle for everything stochastic in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import _kernels

if TYPE_CHECKING:  # pragma: no cover
    from .discretize import HardCoreGraph

ENUMERATION_CAP = 30
MARGINALS_CAP = 25


@dataclass(frozen=True, order=True)
class LogWeight:
    """A non-negative magnitude stored as its natural log; -inf encodes 0."""

    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    @staticmethod
    def from_linear(x: float) -> "LogWeight":
        if x < 0:
            raise ValueError("LogWeight encodes non-negative quantities")
        return LogWeight(math.log(x) if x > 0 else -math.inf)

    @property
    def is_zero(self) -> bool:
        return self.value == -math.inf

    def __float__(self) -> float:
        return self.value

    def __add__(self, other: "LogWeight") -> "LogWeight":
        a, b = self.value, other.value
        if a < b:
            a, b = b, a
        if b == -math.inf:
            return LogWeight(a)
        return LogWeight(a + math.log1p(math.exp(b - a)))

    def __mul__(self, other: "LogWeight") -> "LogWeight":
        if self.is_zero or other.is_zero:
            return LogWeight(-math.inf)
        return LogWeight(self.value + other.value)

    def linear(self) -> float:
        return math.exp(self.value)


def log_sum_exp(values: Sequence[float]) -> float:
    """Stable ln(sum(exp(values))) with max shift; empty input gives -inf."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return -math.inf
    m = float(arr.max())
    if m == -math.inf:
        return -math.inf
    return m + math.log(np.exp(arr - m).sum())


def _vertex_masks(graph: "HardCoreGraph") -> np.ndarray:
    nv = graph.num_vertices
    if nv > 63:
        raise ValueError(f"bitmask representation needs <= 63 vertices, got {nv}")
    offsets, neighbors = graph.vertex_csr()
    masks = np.zeros(nv, dtype=np.uint64)
    for v in range(nv):
        m = 0
        for u in neighbors[offsets[v]:offsets[v + 1]]:
            m |= 1 << int(u)
        masks[v] = m
    return masks


def _branch_log_z(active: int, masks: np.ndarray, log_w: np.ndarray,
                  log1p_w: np.ndarray, nv: int) -> float:
    # pick the active vertex of maximum active degree
    best_v, best_deg = -1, -1
    for v in range(nv):
        if (active >> v) & 1:
            deg = int.bit_count(int(masks[v]) & active)
            if deg > best_deg:
                best_deg, best_v = deg, v
    if best_deg <= 0:
        # edgeless remainder factorizes into prod (1 + w_v)
        total = 0.0
        for v in range(nv):
            if (active >> v) & 1:
                total += log1p_w[v]
        return total
    without = _branch_log_z(active & ~(1 << best_v), masks, log_w, log1p_w, nv)
    with_v = _branch_log_z(active & ~(1 << best_v) & ~int(masks[best_v]),
                           masks, log_w, log1p_w, nv)
    a = without
    b = log_w[best_v] + with_v
    if a < b:
        a, b = b, a
    if b == -math.inf:
        return a
    return a + math.log1p(math.exp(b - a))


def exact_log_z(graph: "HardCoreGraph") -> LogWeight:
    """ln of the weighted independent-set sum.

    Branching recursion Z(G) = Z(G - v) + w(v) Z(G - N[v]) on the highest
    degree vertex, capped at 30 vertices; larger single-type 1D graphs are
    dispatched to the transfer recursion.
    """
    nv = graph.num_vertices
    if nv > ENUMERATION_CAP:
        if graph.dimension == 1 and graph.q == 1:
            order = np.argsort(graph.positions[:, 0], kind="mergesort")
            return exact_log_z_1d(graph.positions[order, 0],
                                  graph.interaction[0, 0],
                                  float(graph.weights[0]))
        raise ValueError(
            f"{nv} vertices exceeds the enumeration cap {ENUMERATION_CAP} and the "
            "graph is not a single-type 1D instance"
        )
    masks = _vertex_masks(graph)
    w = graph.vertex_weights()
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    log1p_w = np.log1p(w)
    return LogWeight(_branch_log_z((1 << nv) - 1, masks, log_w, log1p_w, nv))


def exact_log_z_1d(positions: np.ndarray, sigma: float, weight: float) -> LogWeight:
    """ln Z for a single-type 1D hard-core instance with pair threshold sigma.

    positions must be strictly increasing. Runs the O(n) transfer recursion
    Z_k = Z_{k-1} + w * Z_{j(k)} with j(k) the number of earlier positions at
    distance >= sigma, using the same squared-distance comparison as the
    graph edge rule so both routes agree bit-for-bit on ties.
    """
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    if pos.ndim != 1:
        raise ValueError("positions must be one-dimensional")
    if pos.size == 0:
        return LogWeight(0.0)
    if np.any(np.diff(pos) <= 0):
        raise ValueError("positions must be strictly increasing")
    if not sigma > 0:
        raise ValueError("threshold sigma must be > 0")
    if weight < 0:
        raise ValueError("weight must be >= 0")
    log_w = math.log(weight) if weight > 0 else -math.inf
    return LogWeight(float(_kernels.interval_log_z(pos, sigma * sigma, log_w)))


def exact_marginals(graph: "HardCoreGraph") -> np.ndarray:
    """Occupation probability of every vertex under the Gibbs distribution."""
    nv = graph.num_vertices
    if nv > MARGINALS_CAP:
        raise ValueError(f"{nv} vertices exceeds the marginals cap {MARGINALS_CAP}")
    masks = _vertex_masks(graph)
    w = graph.vertex_weights()
    z_total = 0.0
    occ_total = np.zeros(nv)

    # depth-first over independent sets only
    stack = [(0, 0, 1.0)]  # (next vertex, chosen mask, weight product)
    while stack:
        v, chosen, prod = stack.pop()
        if v == nv:
            z_total += prod
            for u in range(nv):
                if (chosen >> u) & 1:
                    occ_total[u] += prod
            continue
        stack.append((v + 1, chosen, prod))
        if int(masks[v]) & chosen == 0 and w[v] > 0:
            stack.append((v + 1, chosen | (1 << v), prod * w[v]))
    return occ_total / z_total


def multiset_log_z(graph: "HardCoreGraph") -> LogWeight:
    """ln of the independent-multiset sum, via Z over reweighted w/(1-w).

    Requires every vertex weight < 1 (the per-vertex geometric series must
    converge).
    """
    w = graph.vertex_weights()
    if np.any(w >= 1.0):
        raise ValueError("multiset sum diverges: some vertex weight is >= 1")
    reweighted = graph.with_weights(graph.weights / (1.0 - graph.weights))
    return exact_log_z(reweighted)


def tree_threshold(max_degree: int) -> float:
    """Critical fugacity (D-1)^(D-1) / (D-2)^D for maximum degree D >= 2."""
    if max_degree < 2:
        raise ValueError("max_degree must be >= 2")
    if max_degree == 2:
        return math.inf
    d = max_degree
    if d <= 120:  # direct powers stay in double range and round once
        return (d - 1) ** (d - 1) / float((d - 2) ** d)
    return math.exp((d - 1) * math.log(d - 1) - d * math.log(d - 2))


def naive_log_z(graph: "HardCoreGraph") -> LogWeight:
    """Independent oracle: direct enumeration of all 2^n vertex subsets."""
    nv = graph.num_vertices
    if nv > 25:
        raise ValueError("naive enumeration limited to 25 vertices")
    masks = _vertex_masks(graph)
    w = graph.vertex_weights()
    return LogWeight(float(_kernels.subset_enumeration_log_z(masks, w)))
