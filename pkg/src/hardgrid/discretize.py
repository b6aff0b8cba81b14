"""Point sets, allocations, and the geometric hard-core graph.

The discretization of a model on a point set X has one vertex per (point,
type) pair; vertices (x, i) and (y, j) are adjacent exactly when they are
distinct and dist(x, y) < interaction(i, j), with strict inequality and no
tolerance (distances are compared squared). Vertex ids pack as
point_index * q + type. Adjacency is stored once per point pair together
with the squared distance; per-type edges are derived from it on the fly,
which is q^2-fold smaller than materializing them when q > 1.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product as iter_product
from typing import Optional, Union

import numpy as np

from . import _kernels, rng
from .model import ModelSpec, Region

PAIR_SCAN_CAP = 100_000_000

_MAGIC = b"HARDGRID"
_FORMAT_VERSION = 1


class GraphSizeError(RuntimeError):
    """Raised when a graph build would scan more point pairs than the cap."""

    def __init__(self, n_points: int, cap: int, est_edges: float):
        self.n_points = n_points
        self.cap = cap
        self.est_edges = est_edges
        super().__init__(
            f"graph build aborted: scanning neighbour candidates for {n_points} "
            f"points exceeds the {cap:.0e} pair cap "
            f"(~{est_edges:.2e} edges, ~{est_edges * 12 / 1e9:.1f} GB); "
            f"reduce the resolution or raise the cap explicitly"
        )


class EmptyCellError(RuntimeError):
    """A partition cell received no random points; no allocation exists."""

    def __init__(self, cell_index: int):
        self.cell_index = cell_index
        super().__init__(f"partition cell {cell_index} contains no points")


# ---------------------------------------------------------------------------
# Point sets


def smallest_feasible_resolution(side_length: float, rho_min: float) -> float:
    """Smallest rho = m / side_length with integer m >= 1 and rho >= rho_min."""
    if not side_length > 0 or not rho_min > 0:
        raise ValueError("side_length and rho_min must be > 0")
    m = max(1, math.ceil(side_length * rho_min))
    return m / side_length


def _feasible_points_per_axis(side_length: float, resolution: float) -> int:
    m = round(side_length * resolution)
    if m < 1 or abs(side_length * resolution - m) > 1e-9 * max(1.0, m):
        raise ValueError(
            f"resolution {resolution} is not feasible for side length "
            f"{side_length} (side_length * resolution must be an integer)"
        )
    return m


@dataclass(frozen=True)
class CanonicalPointSet:
    """Grid {m/rho} ^ d inside the region; coordinates are generated on demand."""

    region: Region
    resolution: float
    points_per_axis: int = field(init=False)

    def __post_init__(self):
        m = _feasible_points_per_axis(self.region.side_length, self.resolution)
        object.__setattr__(self, "points_per_axis", m)

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.region.dimension

    def point(self, index: int) -> np.ndarray:
        coords = np.unravel_index(index, (self.points_per_axis,) * self.region.dimension)
        return np.asarray(coords, dtype=np.float64) / self.resolution

    def positions(self) -> np.ndarray:
        """Materialize all grid coordinates, shape (size, d)."""
        m, d = self.points_per_axis, self.region.dimension
        axes = [np.arange(m, dtype=np.float64) / self.resolution] * d
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True)
class RandomPointSet:
    """n points drawn i.i.d. uniformly from the region, reproducible from seed."""

    region: Region
    n: int
    seed: int
    points: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        key = rng.derive_key(self.seed, 0x706F696E)
        u = rng.stream_uniform_array(key, 0, self.n * self.region.dimension)
        pts = (u.reshape(self.n, self.region.dimension)
               * self.region.side_length)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.n

    def positions(self) -> np.ndarray:
        return self.points


def canonical_allocate(y: np.ndarray, resolution: float) -> np.ndarray:
    """Snap y to the grid point below it in every coordinate."""
    y = np.asarray(y, dtype=np.float64)
    return np.floor(resolution * y) / resolution


# ---------------------------------------------------------------------------
# Allocations


@dataclass(frozen=True)
class HypercubePartitioning:
    """Partition of the cube into cells_per_axis^d equal boxes.

    Every cell has volume exactly vol / size (gamma = 1) and diameter
    sqrt(d) * cell_side <= eps.
    """

    region: Region
    cells_per_axis: int

    @staticmethod
    def for_eps(region: Region, eps: float) -> "HypercubePartitioning":
        if not eps > 0:
            raise ValueError("eps must be > 0")
        cpa = math.ceil(math.sqrt(region.dimension) * region.side_length / eps)
        return HypercubePartitioning(region, max(1, cpa))

    @property
    def size(self) -> int:
        return self.cells_per_axis ** self.region.dimension

    @property
    def cell_side(self) -> float:
        return self.region.side_length / self.cells_per_axis

    @property
    def eps(self) -> float:
        return math.sqrt(self.region.dimension) * self.cell_side

    @property
    def gamma(self) -> float:
        return 1.0

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Flat cell index of each point, row-major over axes."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        idx = np.floor(pts / self.cell_side).astype(np.int64)
        np.clip(idx, 0, self.cells_per_axis - 1, out=idx)
        flat = np.zeros(pts.shape[0], dtype=np.int64)
        for i in range(self.region.dimension):
            flat = flat * self.cells_per_axis + idx[:, i]
        return flat

    def cell_origin(self, flat: int) -> np.ndarray:
        d = self.region.dimension
        coords = np.empty(d, dtype=np.float64)
        for i in range(d - 1, -1, -1):
            coords[i] = (flat % self.cells_per_axis) * self.cell_side
            flat //= self.cells_per_axis
        return coords


@dataclass(frozen=True)
class Allocation:
    """Map from the region onto a point set with near-equal cell volumes.

    kind 'canonical-floor': point p owns the half-open grid box above it;
    delta = 0 and eps = sqrt(d)/rho exactly. kind 'partition-based': each
    partition cell is split along axis 0 into as many equal slabs as it has
    points; delta is the achieved worst-case volume distortion.
    """

    kind: str
    delta: float
    eps: float
    region: Region
    resolution: Optional[float] = None
    partitioning: Optional[HypercubePartitioning] = None
    point_cell: Optional[np.ndarray] = None
    point_rank: Optional[np.ndarray] = None
    cell_counts: Optional[np.ndarray] = None

    @staticmethod
    def canonical(region: Region, resolution: float) -> "Allocation":
        _feasible_points_per_axis(region.side_length, resolution)
        return Allocation(
            kind="canonical-floor",
            delta=0.0,
            eps=math.sqrt(region.dimension) / resolution,
            region=region,
            resolution=resolution,
        )

    def preimage_sample(self, point_index: int, uniforms: np.ndarray) -> np.ndarray:
        """Map d unit uniforms to a uniform point of the preimage cell."""
        d = self.region.dimension
        if self.kind == "canonical-floor":
            m = round(self.region.side_length * self.resolution)
            coords = np.asarray(np.unravel_index(point_index, (m,) * d),
                                dtype=np.float64) / self.resolution
            return coords + uniforms / self.resolution
        if self.kind == "partition-based":
            cell = int(self.point_cell[point_index])
            rank = int(self.point_rank[point_index])
            count = int(self.cell_counts[cell])
            origin = self.partitioning.cell_origin(cell)
            side = self.partitioning.cell_side
            out = origin + uniforms * side
            out[0] = origin[0] + (rank + uniforms[0]) * side / count
            return out
        raise ValueError(f"allocation kind {self.kind!r} has no explicit geometry")


def partition_allocation_from_random(points: RandomPointSet,
                                     partitioning: HypercubePartitioning,
                                     ) -> Allocation:
    """Allocate each partition cell fairly among the random points inside it.

    Raises EmptyCellError when some cell holds no point. The achieved delta
    is max over cells of |n / (m * count) - 1| where m is the number of
    cells, since every preimage has volume (cell volume) / count.
    """
    flat = partitioning.cell_of(points.points)
    m = partitioning.size
    counts = np.bincount(flat, minlength=m)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyCellError(int(empty[0]))
    order = np.argsort(flat, kind="stable")
    rank = np.empty(points.n, dtype=np.int64)
    start = 0
    for cell in np.unique(flat[order]):
        cnt = counts[cell]
        rank[order[start:start + cnt]] = np.arange(cnt)
        start += cnt
    ratio = points.n / (m * counts.astype(np.float64))
    delta = float(np.abs(ratio - 1.0).max())
    return Allocation(
        kind="partition-based",
        delta=delta,
        eps=partitioning.eps,
        region=points.region,
        partitioning=partitioning,
        point_cell=flat,
        point_rank=rank,
        cell_counts=counts,
    )


# ---------------------------------------------------------------------------
# Resolutions and error formulas


def _closed_form_resolution(model: ModelSpec, eps: float, constant: float) -> float:
    lam_min = model.interaction.lambda_min()
    if math.isinf(lam_min):
        raise ValueError(
            "all interaction distances are zero; the model needs no discretization"
        )
    d = model.dimension
    lam_max = model.fugacities.lambda_max()
    base = (constant * model.q * max(lam_max, lam_max ** 2) * model.volume()
            / eps) ** (1.0 / d)
    return math.sqrt(d) * base * max(1.0, 4.0 / lam_min)


def discretization_error_factor(model: ModelSpec, n: int, delta: float,
                                eps: float) -> float:
    """Multiplicative bound: |Z_hc - Z| <= factor * Z for a delta-eps allocation.

    factor = exp(8 S2 / n + (2 delta + (4 eps / lam_min)^d) S1) - 1 with
    S1 = sum_i lambda_i vol and S2 = sum_i lambda_i^2 vol^2. Valid only for
    n >= 4 lambda_max vol, delta <= 1/2 and eps <= lam_min / 2.
    """
    vol = model.volume()
    lam = model.fugacities.values
    lam_min = model.interaction.lambda_min()
    if n < 4 * model.fugacities.lambda_max() * vol:
        raise ValueError("bound invalid: need n >= 4 * lambda_max * volume")
    if not 0.0 <= delta <= 0.5:
        raise ValueError("bound invalid: need delta in [0, 1/2]")
    if not (0.0 <= eps and (math.isinf(lam_min) or eps <= lam_min / 2)):
        raise ValueError("bound invalid: need eps in [0, lam_min / 2]")
    s1 = float(lam.sum()) * vol
    s2 = float((lam ** 2).sum()) * vol * vol
    geom = 0.0 if math.isinf(lam_min) else (4.0 * eps / lam_min) ** model.dimension
    return math.expm1(8.0 * s2 / n + (2.0 * delta + geom) * s1)


def resolution_for_error(model: ModelSpec, eps_d: float,
                         adaptive: bool = False) -> float:
    """Feasible resolution whose canonical discretization is an eps_d-approximation.

    The closed form is sqrt(d) (48 q max(lam, lam^2) vol / eps_d)^(1/d)
    max(1, 4/lam_min), rounded up to feasibility. Adaptive mode instead
    returns the smallest feasible resolution whose error-factor exponent x
    satisfies both exp(x) <= exp(eps_d) and 2 - exp(x) >= exp(-eps_d), which
    the closed form always satisfies, so the adaptive answer is never larger.
    """
    if not 0 < eps_d <= 1:
        raise ValueError("eps_d must be in (0, 1]")
    side = model.region.side_length
    rho_closed = smallest_feasible_resolution(
        side, _closed_form_resolution(model, eps_d, 48.0))
    if not adaptive:
        return rho_closed

    d = model.dimension
    vol = model.volume()
    lam = model.fugacities.values
    lam_min = model.interaction.lambda_min()
    lam_max = model.fugacities.lambda_max()
    s1 = float(lam.sum()) * vol
    s2 = float((lam ** 2).sum()) * vol * vol
    x_budget = math.log(2.0 - math.exp(-eps_d))  # two-sided sandwich budget

    def ok(m_axis: int) -> bool:
        rho = m_axis / side
        n = m_axis ** d
        eps_alloc = math.sqrt(d) / rho
        if n < 4 * lam_max * vol or eps_alloc > lam_min / 2:
            return False
        x = 8.0 * s2 / n + (4.0 * eps_alloc / lam_min) ** d * s1
        return x <= x_budget

    hi = round(rho_closed * side)
    if not ok(hi):  # closed form satisfies the budget by construction
        return rho_closed
    lo = 1
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return hi / side


@dataclass(frozen=True)
class DegreeBoundReport:
    bounds: np.ndarray       # q x q: per-type neighbour count bounds
    valid: bool              # resolution large enough for the bound to apply
    min_resolution: float


def degree_bound(model: ModelSpec, resolution: float, gamma: float,
                 ) -> DegreeBoundReport:
    """Per-type degree bounds (1+gamma) rho^d Theta(i,j) for the canonical grid.

    Valid once rho >= 2 d^(3/2) / (gamma * lam_min); the flag reports whether
    the given resolution qualifies.
    """
    if not 0 < gamma <= 1:
        raise ValueError("gamma must be in (0, 1]")
    from .model import volume_exclusion_matrix

    d = model.dimension
    theta = volume_exclusion_matrix(model).entries
    lam_min = model.interaction.lambda_min()
    min_rho = 0.0 if math.isinf(lam_min) else 2.0 * d ** 1.5 / (gamma * lam_min)
    bounds = (1.0 + gamma) * resolution ** d * theta
    return DegreeBoundReport(bounds, resolution >= min_rho, min_rho)


def lattice_points_in_ball(dimension: int, s: float) -> int:
    """Exact number of integer points in the open ball of radius s (d <= 3).

    The radius comparison |m|^2 < s^2 is resolved exactly: s is a binary
    rational, so s^2 is compared as an integer fraction.
    """
    if dimension < 1 or dimension > 3:
        raise ValueError("enumeration supported for dimensions 1..3 only")
    if not 0 < s <= 1000:
        raise ValueError("enumeration supported for 0 < s <= 1000 only")
    s2 = Fraction(s) ** 2
    num, den = s2.numerator, s2.denominator

    def count_z(base: int) -> int:
        # integers z with base + z^2 < s^2
        rem = s2 - base
        if rem <= 0:
            return 0
        z = int(math.isqrt(int(rem))) + 2
        while z >= 0 and (base + z * z) * den >= num:
            z -= 1
        return 2 * z + 1 if z >= 0 else 0

    smax = int(math.ceil(s)) + 1
    if dimension == 1:
        return count_z(0)
    if dimension == 2:
        return sum(count_z(x * x) for x in range(-smax, smax + 1))
    total = 0
    for x in range(-smax, smax + 1):
        xx = x * x
        if xx * den >= num:
            continue
        for y in range(-smax, smax + 1):
            total += count_z(xx + y * y)
    return total


# ---------------------------------------------------------------------------
# The hard-core graph


PointSource = Union[CanonicalPointSet, RandomPointSet, np.ndarray]


@dataclass
class HardCoreGraph:
    """Hard-core representation of a model on a finite point set.

    Immutable once built; the cached vertex-level CSR is materialized only
    when an algorithm asks for it (it is an alias of the point arrays when
    q == 1).
    """

    positions: np.ndarray        # (n, d)
    interaction: np.ndarray      # (q, q)
    weights: np.ndarray          # (q,) per-type vertex weight
    region_side: float
    point_offsets: np.ndarray    # (n+1,) int64
    point_neighbors: np.ndarray  # int32
    point_dist2: Optional[np.ndarray]  # per stored pair; None when q == 1
    resolution: Optional[float] = None
    seed: Optional[int] = None
    _vertex_csr: Optional[tuple] = field(default=None, repr=False)
    _vertex_w: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def num_points(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    @property
    def q(self) -> int:
        return self.weights.shape[0]

    @property
    def num_vertices(self) -> int:
        return self.num_points * self.q

    @property
    def volume(self) -> float:
        return self.region_side ** self.dimension

    def point_of(self, vertex: int) -> int:
        return vertex // self.q

    def type_of(self, vertex: int) -> int:
        return vertex % self.q

    def vertex_weights(self) -> np.ndarray:
        if self._vertex_w is None:
            self._vertex_w = np.tile(self.weights, self.num_points)
        return self._vertex_w

    def vertex_csr(self) -> tuple:
        """(offsets, neighbors) over packed vertex ids, segments sorted by id."""
        if self._vertex_csr is not None:
            return self._vertex_csr
        if self.q == 1:
            self._vertex_csr = (self.point_offsets, self.point_neighbors)
            return self._vertex_csr
        q = self.q
        inter2 = self.interaction ** 2
        counts = np.zeros(self.num_vertices + 1, dtype=np.int64)
        for p in range(self.num_points):
            seg = slice(self.point_offsets[p], self.point_offsets[p + 1])
            d2 = self.point_dist2[seg]
            for t in range(q):
                cnt = int((d2 < inter2[t].reshape(-1, 1)).sum())
                cnt += int(np.count_nonzero(inter2[t] > 0)) - (1 if inter2[t, t] > 0 else 0)
                counts[p * q + t + 1] = cnt
        # second pass: fill
        offsets = np.cumsum(counts)
        neighbors = np.empty(offsets[-1], dtype=np.int32)
        for p in range(self.num_points):
            seg = slice(self.point_offsets[p], self.point_offsets[p + 1])
            nbr_pts = self.point_neighbors[seg]
            d2 = self.point_dist2[seg]
            for t in range(q):
                out = []
                for j in range(q):
                    if j != t and inter2[t, j] > 0:
                        out.append(p * q + j)           # same point, other type
                    sel = nbr_pts[d2 < inter2[t, j]]
                    if sel.size:
                        out.append(sel.astype(np.int64) * q + j)
                v = p * q + t
                if out:
                    flat = np.sort(np.concatenate([np.atleast_1d(o) for o in out]))
                else:
                    flat = np.empty(0, dtype=np.int64)
                neighbors[offsets[v]:offsets[v + 1]] = flat
        self._vertex_csr = (offsets, neighbors)
        return self._vertex_csr

    def with_weights(self, vertex_or_type_weights: np.ndarray) -> "HardCoreGraph":
        """Same structure with new per-type weights (adjacency shared)."""
        w = np.asarray(vertex_or_type_weights, dtype=np.float64)
        if w.shape != (self.q,):
            raise ValueError(f"expected {self.q} per-type weights")
        g = HardCoreGraph(self.positions, self.interaction, w, self.region_side,
                          self.point_offsets, self.point_neighbors,
                          self.point_dist2, self.resolution, self.seed)
        g._vertex_csr = self._vertex_csr
        return g

    def degrees(self) -> np.ndarray:
        offsets, _ = self.vertex_csr()
        return np.diff(offsets)

    def max_degree(self) -> int:
        deg = self.degrees()
        return int(deg.max()) if deg.size else 0

    def per_type_degree(self, vertex: int) -> np.ndarray:
        """Number of neighbours of each type for one vertex."""
        offsets, neighbors = self.vertex_csr()
        nbr = neighbors[offsets[vertex]:offsets[vertex + 1]]
        return np.bincount(np.asarray(nbr) % self.q, minlength=self.q)

    def is_independent(self, vertices) -> bool:
        chosen = set(int(v) for v in vertices)
        offsets, neighbors = self.vertex_csr()
        for v in chosen:
            for u in neighbors[offsets[v]:offsets[v + 1]]:
                if int(u) in chosen:
                    return False
        return True

    # -- serialization ------------------------------------------------------

    def write_binary(self, path: str) -> None:
        """Little-endian binary dump: header, weights, interaction, positions,
        offsets and neighbour array (64-bit), squared distances when q > 1."""
        n, d, q = self.num_points, self.dimension, self.q
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<QQQQ", _FORMAT_VERSION, d, q, n))
            fh.write(struct.pack("<ddQd",
                                 0.0 if self.resolution is None else self.resolution,
                                 self.region_side,
                                 0 if self.seed is None else self.seed,
                                 self.volume))
            self.weights.astype("<f8").tofile(fh)
            self.interaction.astype("<f8").tofile(fh)
            self.positions.astype("<f8").tofile(fh)
            self.point_offsets.astype("<u8").tofile(fh)
            self.point_neighbors.astype("<u8").tofile(fh)
            fh.write(struct.pack("<Q", 0 if self.point_dist2 is None else 1))
            if self.point_dist2 is not None:
                self.point_dist2.astype("<f8").tofile(fh)

    def write_edgelist(self, path: str) -> None:
        """Human-readable vertex edge list; refuses graphs above 10^4 vertices."""
        if self.num_vertices > 10_000:
            raise ValueError("edge-list export limited to 10^4 vertices")
        offsets, neighbors = self.vertex_csr()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# vertices {self.num_vertices} (points {self.num_points}, "
                     f"types {self.q})\n")
            for v in range(self.num_vertices):
                for u in neighbors[offsets[v]:offsets[v + 1]]:
                    if v < u:
                        fh.write(f"{v} {u}\n")


def load_graph(path: str) -> HardCoreGraph:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError("not a hardgrid graph file")
        version, d, q, n = struct.unpack("<QQQQ", fh.read(32))
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported graph format version {version}")
        rho, side, seed, _vol = struct.unpack("<ddQd", fh.read(32))
        weights = np.fromfile(fh, "<f8", q)
        interaction = np.fromfile(fh, "<f8", q * q).reshape(q, q)
        positions = np.fromfile(fh, "<f8", n * d).reshape(n, d)
        offsets = np.fromfile(fh, "<u8", n + 1).astype(np.int64)
        neighbors = np.fromfile(fh, "<u8", offsets[-1]).astype(np.int32)
        (has_d2,) = struct.unpack("<Q", fh.read(8))
        dist2 = np.fromfile(fh, "<f8", offsets[-1]) if has_d2 else None
    return HardCoreGraph(positions, interaction, weights, side, offsets,
                         neighbors, dist2,
                         resolution=None if rho == 0.0 else rho,
                         seed=None if seed == 0 else seed)


def is_point_graph_valid(graph: HardCoreGraph) -> bool:
    """Symmetry sanity sweep over the stored point adjacency."""
    offsets, neighbors = graph.point_offsets, graph.point_neighbors
    pairs = set()
    for p in range(graph.num_points):
        for u in neighbors[offsets[p]:offsets[p + 1]]:
            pairs.add((p, int(u)))
    return all((b, a) in pairs for (a, b) in pairs)


def build_graph(model: ModelSpec, points: PointSource,
                pair_scan_cap: int = PAIR_SCAN_CAP) -> HardCoreGraph:
    """Build the hard-core representation of the model on the given points.

    Uses a spatial hash with cell side lam_max so each point scans only its
    3^d neighbouring cells; when lam_max is 0 the graph is edgeless and no
    scanning happens at all. Aborts with GraphSizeError beyond the pair cap.
    """
    resolution = None
    seed = None
    if isinstance(points, CanonicalPointSet):
        resolution = points.resolution
        pos = points.positions()
    elif isinstance(points, RandomPointSet):
        seed = points.seed
        pos = points.positions()
    else:
        pos = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pos.shape[0] == 0:
        raise ValueError("point set must be non-empty")
    side = model.region.side_length
    if pos.shape[1] != model.dimension:
        raise ValueError("points do not match the model dimension")
    if np.any(pos < 0) or np.any(pos >= side):
        raise ValueError("all points must lie inside [0, side_length)^d")

    n, d = pos.shape
    lam_max = model.interaction.lambda_max()
    weights = model.fugacities.values * (model.volume() / n)

    if lam_max == 0.0:
        offsets = np.zeros(n + 1, dtype=np.int64)
        neighbors = np.empty(0, dtype=np.int32)
        dist2 = np.empty(0, dtype=np.float64) if model.q > 1 else None
        return HardCoreGraph(pos, model.interaction.entries.copy(), weights,
                             side, offsets, neighbors, dist2, resolution, seed)

    ncells = np.full(d, max(1, math.ceil(side / lam_max)), dtype=np.int64)
    cell_offsets_nd = np.array(list(iter_product((-1, 0, 1), repeat=d)),
                               dtype=np.int64)
    want_dist2 = model.q > 1
    offsets, neighbors, dist2, scanned = _kernels.build_point_adjacency(
        np.ascontiguousarray(pos), lam_max, ncells, cell_offsets_nd,
        lam_max * lam_max, pair_scan_cap, want_dist2)
    if scanned < 0:
        vol_ball = min(1.0, lam_max ** d) * n / model.volume()
        raise GraphSizeError(n, pair_scan_cap, n * max(1.0, vol_ball))
    return HardCoreGraph(np.ascontiguousarray(pos),
                         model.interaction.entries.copy(), weights, side,
                         offsets, neighbors, dist2 if want_dist2 else None,
                         resolution, seed)
