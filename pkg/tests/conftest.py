"""Shared helpers: seeded random instances used across the test modules."""

import numpy as np
import pytest

import hardgrid as hg
from hardgrid import rng


def make_geometric_graph(dimension, n, radius, side, seed, weight=None):
    """Hard-sphere graph on n uniform points with an optional weight override."""
    model = hg.ModelSpec.hard_sphere(dimension, side, radius, 1.0)
    pts = hg.RandomPointSet(model.region, n, seed)
    graph = hg.build_graph(model, pts)
    if weight is not None:
        graph = graph.with_weights(np.array([float(weight)]))
    return graph


def make_regime_graph(dimension, n, seed, margin=0.7, max_tries=50):
    """Random geometric graph with weight strictly inside the mixing regime.

    The weight is placed at ``margin`` times the tree threshold of the
    realized maximum degree (capped at 1), re-drawing the radius when the
    graph comes out too dense.
    """
    stream = rng.Stream(rng.derive_key(seed, 0xF17))
    side = 1.0
    for _ in range(max_tries):
        radius = 0.08 + 0.12 * stream.uniform()
        g = make_geometric_graph(dimension, n, radius, side,
                                 stream.u64() & ((1 << 62) - 1))
        max_deg = g.max_degree()
        if max_deg > 6:
            continue
        thr = hg.tree_threshold(max_deg) if max_deg >= 3 else 2.0
        w = (0.3 + 0.6 * stream.uniform()) * margin * min(thr, 1.5)
        w = min(w, 1.0)
        return g.with_weights(np.array([w]))
    raise RuntimeError("could not draw a sparse geometric graph")


def make_random_tree_graph(n, seed, wmax=1.0):
    """Random tree as a hard-core graph (uniform attachment), weight <= wmax."""
    stream = rng.Stream(rng.derive_key(seed, 0x7EE))
    # embed points far apart except tree edges: easier to build adjacency directly
    offsets = [0]
    adj = [[] for _ in range(n)]
    for v in range(1, n):
        parent = stream.below(v)
        adj[v].append(parent)
        adj[parent].append(v)
    neighbors = []
    for v in range(n):
        nb = sorted(adj[v])
        neighbors.extend(nb)
        offsets.append(len(neighbors))
    g = hg.HardCoreGraph(
        positions=np.linspace(0.0, 1.0, n, endpoint=False).reshape(n, 1),
        interaction=np.array([[0.0]]),
        weights=np.array([min(wmax, 0.2 + 0.8 * stream.uniform())]),
        region_side=1.0,
        point_offsets=np.asarray(offsets, dtype=np.int64),
        point_neighbors=np.asarray(neighbors, dtype=np.int32),
        point_dist2=None,
    )
    return g


@pytest.fixture(scope="session")
def rod_model():
    """The 1D hard-rod reference model used by the heavier suites."""
    return hg.ModelSpec.hard_sphere(1, 10.0, 0.25, 1.0)
