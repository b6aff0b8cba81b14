"""Approximate ln Z for hard-core graphs.

Two routes. The randomized one telescopes Z over vertex-induced prefixes,
Z(G) = prod_k Z(G_k) / Z(G_{k-1}), estimating each ratio
Z(G_{k-1}) / Z(G_k) = Pr[v_k unoccupied under the G_k Gibbs distribution]
with independent chain restarts and a median-of-means aggregate. The
deterministic one evaluates each ratio by the truncated walk-tree recursion
R_v = w(v) * prod_u 1 / (1 + R_u), doubling the truncation depth until two
successive estimates agree.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels, rng
from .discretize import HardCoreGraph
from .glauber import RegimeWarning, check_regime
from .hardcore import LogWeight

_MOM_GROUPS = 8
_PURPOSE_MCMC = 0x4D434D43
_DEFAULT_MAX_NODES = 50_000_000


class UndersampledRatioError(RuntimeError):
    """A telescoping ratio estimate came out exactly zero."""

    def __init__(self, k: int, samples: int):
        self.k = k
        self.samples = samples
        super().__init__(
            f"ratio {k}: all {samples} restarts saw the vertex occupied; "
            "this cannot happen in the mixing regime - increase the sample "
            "count or check the regime condition"
        )


def _degree_order(graph: HardCoreGraph) -> np.ndarray:
    """Vertex order: descending degree, ties broken by vertex id."""
    deg = graph.degrees()
    return np.lexsort((np.arange(graph.num_vertices), -deg))


@dataclass
class _OrderedView:
    """Graph relabeled along the telescoping order; prefix k = first k ids."""

    order: np.ndarray
    offsets: np.ndarray
    neighbors: np.ndarray
    weights: np.ndarray
    prefix_max_degree: np.ndarray  # max degree of the induced prefix graph


def _ordered_view(graph: HardCoreGraph) -> _OrderedView:
    order = _degree_order(graph)
    nv = graph.num_vertices
    inv = np.empty(nv, dtype=np.int64)
    inv[order] = np.arange(nv)
    old_offsets, old_neighbors = graph.vertex_csr()
    w = graph.vertex_weights()[order]

    counts = np.diff(old_offsets)[order]
    offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    neighbors = np.empty(offsets[-1], dtype=np.int32)
    for new_v in range(nv):
        v = order[new_v]
        seg = old_neighbors[old_offsets[v]:old_offsets[v + 1]]
        relabeled = np.sort(inv[np.asarray(seg, dtype=np.int64)])
        neighbors[offsets[new_v]:offsets[new_v + 1]] = relabeled

    # max degree of every induced prefix; degrees only grow as k advances
    deg = np.zeros(nv, dtype=np.int64)
    prefix_max = np.zeros(nv, dtype=np.int64)
    running = 0
    for k in range(nv):
        seg = neighbors[offsets[k]:offsets[k + 1]]
        early = seg[seg < k]
        deg[early] += 1
        deg[k] = early.size
        if early.size:
            running = max(running, deg[k], int(deg[early].max()))
        prefix_max[k] = running
    return _OrderedView(order, offsets, neighbors, w, prefix_max)


def _ratio_steps(k: int, max_deg: int, eps_ratio: float, c: float) -> int:
    return int(math.ceil(c * k * (k * math.log(max(max_deg, 2))
                                  + math.log(1.0 / eps_ratio))))


@dataclass
class McmcEstimate:
    log_z: LogWeight
    eps_a: float
    seed: int
    samples_per_ratio: int
    ratios: np.ndarray        # estimated Pr[v_k unoccupied] per prefix
    steps_per_ratio: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def estimate_log_z_mcmc(graph: HardCoreGraph, eps_a: float, seed: int, *,
                        c: float = 1.0,
                        samples_per_ratio: Optional[int] = None,
                        warn: bool = True) -> McmcEstimate:
    """Randomized ln Z estimate by vertex telescoping.

    Each of the n ratios is sampled with s = ceil(64 n / eps_a^2) cold-start
    chains at a per-ratio variation budget eps_a / (8n), aggregated by the
    median of 8 group means. The result is within eps_a of ln Z with
    probability at least 3/4 when the mixing regime holds.
    """
    if graph.num_vertices == 0:
        raise ValueError("graph must be non-empty")
    if not 0 < eps_a <= 1:
        raise ValueError("eps_a must be in (0, 1]")
    ok, msg = check_regime(graph)
    if not ok and warn:
        warnings.warn(msg, RegimeWarning)

    nv = graph.num_vertices
    view = _ordered_view(graph)
    s = samples_per_ratio or math.ceil(64.0 * nv / (eps_a * eps_a))
    s = int(math.ceil(s / _MOM_GROUPS) * _MOM_GROUPS)
    eps_ratio = eps_a / (8.0 * nv)
    base = rng.derive_key(seed, _PURPOSE_MCMC)

    use_bitmask = nv <= 63
    masks = None
    if use_bitmask:
        masks = np.zeros(nv, dtype=np.uint64)
        for v in range(nv):
            m = 0
            for u in view.neighbors[view.offsets[v]:view.offsets[v + 1]]:
                m |= 1 << int(u)
            masks[v] = m

    log_z = 0.0
    ratios = np.empty(nv)
    steps_used = np.empty(nv, dtype=np.int64)
    out = np.empty(s, dtype=np.uint8)
    for k in range(1, nv + 1):
        steps = _ratio_steps(k, int(view.prefix_max_degree[k - 1]), eps_ratio, c)
        steps_used[k - 1] = steps
        ratio_key = rng.derive_key(base, k)
        keys = rng.derive_key_array(ratio_key, s)
        if use_bitmask:
            _kernels.run_chains_unoccupied(masks, view.weights, k, k - 1,
                                           keys, steps, out)
        else:
            _kernels.run_chains_unoccupied_occ(view.offsets, view.neighbors,
                                               view.weights, k, k - 1,
                                               keys, steps, out)
        groups = out.reshape(_MOM_GROUPS, -1).mean(axis=1)
        p_hat = float(np.median(groups))
        if p_hat <= 0.0:
            raise UndersampledRatioError(k, s)
        ratios[k - 1] = p_hat
        log_z -= math.log(p_hat)

    return McmcEstimate(LogWeight(log_z), eps_a, seed, s, ratios, steps_used,
                        diagnostics={"order": view.order,
                                     "prefix_max_degree": view.prefix_max_degree})


def weitz_occupation_ratio(graph: HardCoreGraph, vertex: int, depth: int, *,
                           max_nodes: int = _DEFAULT_MAX_NODES) -> float:
    """Occupation ratio of ``vertex`` from the walk tree truncated at ``depth``.

    The tree is expanded implicitly (path-history recursion); vertices beyond
    the horizon enter with ratio 0. Raises if the node budget is exhausted.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    offsets, neighbors = graph.vertex_csr()
    r = _kernels.walk_tree_ratio(offsets, np.asarray(neighbors, np.int32),
                                 graph.vertex_weights(), graph.num_vertices,
                                 vertex, depth, max_nodes)
    if r < 0:
        raise RuntimeError(f"walk-tree expansion exceeded {max_nodes} nodes")
    return float(r)


@dataclass
class WeitzEstimate:
    log_z: LogWeight
    eps_a: float
    converged: bool
    depth: int
    history: list  # (depth, log_z) pairs actually evaluated


def estimate_log_z_weitz(graph: HardCoreGraph, eps_a: float, *,
                         start_depth: int = 4, depth_cap: int = 64,
                         max_nodes: int = _DEFAULT_MAX_NODES,
                         warn: bool = True) -> WeitzEstimate:
    """Deterministic ln Z by telescoping with walk-tree ratios.

    ln Z = sum_k ln(1 + R(v_k; G_k, depth)); the depth doubles from
    ``start_depth`` until two successive totals differ by less than eps_a / 2
    or the cap is passed (then the last total is returned flagged
    non-converged). Output is bit-identical across runs and thread counts.
    """
    if graph.num_vertices == 0:
        raise ValueError("graph must be non-empty")
    if not 0 < eps_a <= 1:
        raise ValueError("eps_a must be in (0, 1]")
    ok, msg = check_regime(graph)
    if not ok and warn:
        warnings.warn(msg, RegimeWarning)

    nv = graph.num_vertices
    view = _ordered_view(graph)

    def total_at(depth: int) -> Optional[float]:
        total = 0.0
        for k in range(1, nv + 1):
            r = _kernels.walk_tree_ratio(view.offsets, view.neighbors,
                                         view.weights, k, k - 1, depth,
                                         max_nodes)
            if r < 0:
                return None
            total += math.log1p(r)
        return total

    history = []
    depth = start_depth
    prev = total_at(depth)
    if prev is None:
        raise RuntimeError(f"walk-tree expansion exceeded {max_nodes} nodes "
                           f"already at depth {depth}")
    history.append((depth, prev))
    while True:
        nxt_depth = depth * 2
        if nxt_depth > depth_cap:
            return WeitzEstimate(LogWeight(prev), eps_a, False, depth, history)
        nxt = total_at(nxt_depth)
        if nxt is None:
            return WeitzEstimate(LogWeight(prev), eps_a, False, depth, history)
        history.append((nxt_depth, nxt))
        if abs(nxt - prev) < eps_a / 2.0:
            return WeitzEstimate(LogWeight(nxt), eps_a, True, nxt_depth, history)
        depth, prev = nxt_depth, nxt
