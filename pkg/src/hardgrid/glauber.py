"""Single-site dynamics on hard-core models: update rule, sampling, marginals.

One chain step picks a vertex v uniformly, removes it with probability
1/(1 + w(v)), and otherwise adds it when no neighbour is occupied (no change
if blocked). The kernel is reversible for the weighted independent-set
distribution. Chains always start from the empty set, and every chain owns a
counter-based random stream derived from (seed, chain index), so parallel
restarts are bit-reproducible at any thread count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels, rng
from .discretize import HardCoreGraph
from .hardcore import tree_threshold

_PURPOSE_SAMPLE = 0x53414D50
_PURPOSE_RATIO = 0x52415431
_BITMASK_LIMIT = 63


class RegimeWarning(UserWarning):
    """Sampling proceeds but no total-variation guarantee is claimed."""


@dataclass
class ChainState:
    """Mutable chain state: occupancy bitmap plus occupied-neighbour counts.

    ``blocked`` caches, for every vertex, how many of its neighbours are
    occupied, making each update O(deg). The stream is the chain's private
    randomness; one step consumes exactly two draws.
    """

    occupancy: np.ndarray   # uint8 per vertex
    blocked: np.ndarray     # int32 per vertex
    stream: rng.Stream

    @staticmethod
    def cold(graph: HardCoreGraph, key: int) -> "ChainState":
        nv = graph.num_vertices
        return ChainState(np.zeros(nv, dtype=np.uint8),
                          np.zeros(nv, dtype=np.int32),
                          rng.Stream(key))

    def occupied_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.occupancy).astype(np.int64)

    def check_consistency(self, graph: HardCoreGraph) -> bool:
        offsets, neighbors = graph.vertex_csr()
        for v in range(graph.num_vertices):
            seg = neighbors[offsets[v]:offsets[v + 1]]
            if self.blocked[v] != int(self.occupancy[seg].sum()):
                return False
            if self.occupancy[v] and self.blocked[v]:
                return False
        return True


def glauber_step(state: ChainState, graph: HardCoreGraph) -> ChainState:
    """Advance the chain by one update; mutates and returns ``state``.

    Uses the same draw layout and float comparisons as the compiled kernels,
    so a reference chain and a kernel chain with the same key coincide
    step-for-step.
    """
    nv = graph.num_vertices
    offsets, neighbors = graph.vertex_csr()
    w_v = graph.vertex_weights()
    u1 = state.stream.uniform()
    u2 = state.stream.uniform()
    v = min(int(u1 * nv), nv - 1)
    if u2 * (1.0 + w_v[v]) < 1.0:
        if state.occupancy[v]:
            state.occupancy[v] = 0
            state.blocked[neighbors[offsets[v]:offsets[v + 1]]] -= 1
    else:
        if not state.occupancy[v] and state.blocked[v] == 0:
            state.occupancy[v] = 1
            state.blocked[neighbors[offsets[v]:offsets[v + 1]]] += 1
    return state


def step_count(num_vertices: int, max_degree: int, eps_s: float,
               c: float = 1.0) -> float:
    """Chain length schedule c * n * (n * ln(max(D, 2)) + ln(1/eps_s))."""
    if not 0 < eps_s <= 1:
        raise ValueError("eps_s must be in (0, 1]")
    n = num_vertices
    return c * n * (n * math.log(max(max_degree, 2)) + math.log(1.0 / eps_s))


def check_regime(graph: HardCoreGraph,
                 witness: Optional[np.ndarray] = None) -> tuple[bool, str]:
    """Mixing-regime check: w_max below the degree-D tree threshold, or an
    explicit per-type decay witness f with f(v) >= sum over neighbours of
    f(u) w(u) / (1 + w(u))."""
    w_v = graph.vertex_weights()
    if witness is not None:
        f = np.asarray(witness, dtype=np.float64)
        if f.shape != (graph.q,):
            raise ValueError(f"witness must have one entry per type ({graph.q})")
        offsets, neighbors = graph.vertex_csr()
        f_v = np.tile(f, graph.num_points)
        load = f_v * w_v / (1.0 + w_v)
        for v in range(graph.num_vertices):
            seg = neighbors[offsets[v]:offsets[v + 1]]
            if f_v[v] < load[seg].sum():
                return False, f"witness violated at vertex {v}"
        return True, "decay witness verified on the graph"
    max_deg = graph.max_degree()
    if max_deg <= 2:
        return True, f"max degree {max_deg} <= 2: threshold infinite"
    thr = tree_threshold(max_deg)
    w_max = float(w_v.max()) if w_v.size else 0.0
    if w_max < thr:
        return True, f"w_max {w_max:.6g} < tree threshold {thr:.6g} at degree {max_deg}"
    return False, (f"w_max {w_max:.6g} >= tree threshold {thr:.6g} at degree "
                   f"{max_deg}; total-variation guarantee void")


def _resolve_steps(graph: HardCoreGraph, eps_s: float, c: float,
                   steps: Optional[int]) -> int:
    if steps is not None:
        return int(steps)
    return int(math.ceil(step_count(graph.num_vertices, graph.max_degree(),
                                    eps_s, c)))


def sample(graph: HardCoreGraph, eps_s: float, seed: int, *,
           c: float = 1.0, steps: Optional[int] = None,
           witness: Optional[np.ndarray] = None,
           warn: bool = True) -> np.ndarray:
    """One approximate Gibbs sample: final independent set as vertex ids.

    Runs the schedule's number of single-site updates from the empty set. The
    result approximates the Gibbs distribution within eps_s total variation
    only in the checked regime; outside it a RegimeWarning is emitted and the
    state is still returned.
    """
    ok, msg = check_regime(graph, witness)
    if not ok and warn:
        warnings.warn(msg, RegimeWarning)
    nsteps = _resolve_steps(graph, eps_s, c, steps)
    key = rng.derive_key(rng.derive_key(seed, _PURPOSE_SAMPLE), 0)
    occ = np.zeros(graph.num_vertices, dtype=np.uint8)
    offsets, neighbors = graph.vertex_csr()
    _kernels.run_chain_occupancy(offsets, np.asarray(neighbors, dtype=np.int32),
                                 graph.vertex_weights(), graph.num_vertices,
                                 np.uint64(key), nsteps, occ)
    return np.flatnonzero(occ).astype(np.int64)


def vertex_bitmasks(graph: HardCoreGraph, active: Optional[int] = None,
                    ) -> np.ndarray:
    """Neighbour bitmasks for bitmask-state kernels (<= 63 vertices)."""
    nv = graph.num_vertices if active is None else active
    if nv > _BITMASK_LIMIT:
        raise ValueError("bitmask kernels support at most 63 vertices")
    offsets, neighbors = graph.vertex_csr()
    masks = np.zeros(graph.num_vertices, dtype=np.uint64)
    for v in range(graph.num_vertices):
        m = 0
        for u in neighbors[offsets[v]:offsets[v + 1]]:
            m |= 1 << int(u)
        masks[v] = m
    return masks


def sample_many(graph: HardCoreGraph, eps_s: float, n_samples: int, seed: int,
                *, c: float = 1.0, steps: Optional[int] = None,
                witness: Optional[np.ndarray] = None,
                warn: bool = True) -> np.ndarray:
    """Independent cold-start samples as uint64 occupancy bitmasks (nv <= 63)."""
    ok, msg = check_regime(graph, witness)
    if not ok and warn:
        warnings.warn(msg, RegimeWarning)
    nsteps = _resolve_steps(graph, eps_s, c, steps)
    masks = vertex_bitmasks(graph)
    base = rng.derive_key(seed, _PURPOSE_SAMPLE)
    keys = rng.derive_key_array(base, n_samples)
    out = np.empty(n_samples, dtype=np.uint64)
    _kernels.run_chains_bitmask(masks, graph.vertex_weights(),
                                graph.num_vertices, keys, nsteps, out)
    return out


def estimate_unoccupied(graph: HardCoreGraph, vertex: int, samples: int,
                        eps_s: float, seed: int, *, c: float = 1.0,
                        steps: Optional[int] = None) -> tuple[float, float]:
    """Mean and standard error of the indicator [vertex unoccupied] over
    independent restarts."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    nsteps = _resolve_steps(graph, eps_s, c, steps)
    base = rng.derive_key(seed, _PURPOSE_RATIO)
    keys = rng.derive_key_array(base, samples)
    out = np.empty(samples, dtype=np.uint8)
    if graph.num_vertices <= _BITMASK_LIMIT:
        masks = vertex_bitmasks(graph)
        _kernels.run_chains_unoccupied(masks, graph.vertex_weights(),
                                       graph.num_vertices, vertex, keys,
                                       nsteps, out)
    else:
        offsets, neighbors = graph.vertex_csr()
        _kernels.run_chains_unoccupied_occ(offsets,
                                           np.asarray(neighbors, np.int32),
                                           graph.vertex_weights(),
                                           graph.num_vertices, vertex, keys,
                                           nsteps, out)
    mean = float(out.mean())
    se = float(out.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return mean, se
