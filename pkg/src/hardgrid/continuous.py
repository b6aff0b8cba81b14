"""Continuous-side computations and the perturbation sampler.

Includes the exact closed form for 1D hard rods, a truncated-series Monte
Carlo estimate of the continuous normalizing constant, configuration
validity, and the sampler that turns a discrete independent set into a
continuous configuration by drawing one uniform point from each occupied
allocation cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels, glauber, rng
from .discretize import (Allocation, CanonicalPointSet, HardCoreGraph,
                         build_graph, smallest_feasible_resolution)
from .hardcore import LogWeight, log_sum_exp
from .model import ModelSpec

_PURPOSE_ORACLE = 0x4F52434C
_PURPOSE_PERTURB = 0x50455254
_PURPOSE_CSAMPLE = 0x43534D50
_PURPOSE_BATCH = 0x42415443

ORACLE_TRUNCATION_CAP = 20
ORACLE_SAMPLES_CAP = 10_000_000


class OracleTruncationError(RuntimeError):
    """The series oracle would need more than 20 terms at this tolerance."""


@dataclass(frozen=True)
class ContinuousConfiguration:
    """Particle positions with a type assignment; may be empty."""

    points: np.ndarray   # (N, d)
    types: np.ndarray    # (N,) int

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @staticmethod
    def empty(dimension: int) -> "ContinuousConfiguration":
        return ContinuousConfiguration(np.empty((0, dimension)),
                                       np.empty(0, dtype=np.int64))


def is_valid(model: ModelSpec, config: ContinuousConfiguration) -> bool:
    """True iff every pair keeps distance >= the interaction entry of its types.

    Empty and single-particle configurations are always valid.
    """
    n = config.n
    if n <= 1:
        return True
    pts = config.points
    types = config.types
    inter2 = model.interaction.entries ** 2
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    thr = inter2[types[:, None], types[None, :]]
    iu = np.triu_indices(n, k=1)
    return not np.any(d2[iu] < thr[iu])


def tonks_log_z(length: float, radius: float, fugacity: float) -> LogWeight:
    """Exact ln Z for 1D hard rods: particles on [0, length) with pairwise
    minimum distance sigma = 2 * radius.

    Z = sum_k (lambda^k / k!) * max(length - (k-1) sigma, 0)^k; the sum is
    finite because terms vanish once (k-1) sigma reaches the length.
    """
    if not length > 0:
        raise ValueError("length must be > 0")
    if not radius > 0:
        raise ValueError("radius must be > 0")
    if fugacity < 0:
        raise ValueError("fugacity must be >= 0")
    if fugacity == 0.0:
        return LogWeight(0.0)
    sigma = 2.0 * radius
    log_lambda = math.log(fugacity)
    terms = [0.0]  # k = 0
    k = 1
    while True:
        free = length - (k - 1) * sigma
        if free <= 0:
            break
        terms.append(k * log_lambda - math.lgamma(k + 1) + k * math.log(free))
        k += 1
    return LogWeight(log_sum_exp(terms))


def tonks_mean_particles(length: float, radius: float, fugacity: float,
                         rel_step: float = 1e-4) -> float:
    """lambda * d/dlambda ln Z by a central difference with relative step."""
    h = rel_step
    hi = float(tonks_log_z(length, radius, fugacity * (1.0 + h)))
    lo = float(tonks_log_z(length, radius, fugacity * (1.0 - h)))
    return (hi - lo) / (2.0 * h)


def tonks_count_distribution(length: float, radius: float,
                             fugacity: float) -> np.ndarray:
    """P(N = k) for the 1D hard-rod model, from the closed-form terms."""
    sigma = 2.0 * radius
    if fugacity == 0.0:
        return np.array([1.0])
    log_lambda = math.log(fugacity)
    terms = [0.0]
    k = 1
    while True:
        free = length - (k - 1) * sigma
        if free <= 0:
            break
        terms.append(k * log_lambda - math.lgamma(k + 1) + k * math.log(free))
        k += 1
    arr = np.asarray(terms)
    probs = np.exp(arr - log_sum_exp(arr))
    return probs / probs.sum()


# ---------------------------------------------------------------------------
# Truncated-series Monte Carlo oracle


@dataclass(frozen=True)
class OracleEstimate:
    ln_z: float
    std_error: float
    truncation_k: int
    samples_per_term: int
    tail_bound: float     # absolute bound on the truncated mass

    def tail_relative(self) -> float:
        return self.tail_bound / math.exp(self.ln_z)


def _compositions(total: int, parts: int):
    """All vectors of ``parts`` non-negative ints summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _poisson_tail(mean: float, k: int) -> float:
    """sum_{j > k} mean^j / j! computed by forward summation."""
    if mean <= 0:
        return 0.0
    log_term = (k + 1) * math.log(mean) - math.lgamma(k + 2)
    total = 0.0
    for j in range(k + 1, k + 400):
        total += math.exp(log_term)
        log_term += math.log(mean) - math.log(j + 1)  # term_{j+1} = term_j * mean/(j+1)
        if math.exp(log_term) < total * 1e-18 + 1e-300:
            break
    return total


def oracle_log_z_mc(model: ModelSpec, tol: float, seed: int) -> OracleEstimate:
    """Monte Carlo evaluation of the k-particle series, term by term.

    Each term vol^k * prod_i lambda_i^{k_i} / k_i! * P(valid) groups the
    type assignments by their count vector (multinomial symmetry), and P is
    the fraction of uniform k-tuples passing the validity indicator. The
    truncation K is the smallest one whose series tail is below
    (tol/2) * exp(-sum lambda vol), so the truncation error is below tol/2
    relative to any admissible Z; K > 20 raises.
    """
    if not 0 < tol <= 1:
        raise ValueError("tol must be in (0, 1]")
    vol = model.volume()
    lam = model.fugacities.values
    s_mean = float(lam.sum()) * vol
    if s_mean == 0.0:
        return OracleEstimate(0.0, 0.0, 0, 0, 0.0)

    trunc_k = None
    for k in range(1, ORACLE_TRUNCATION_CAP + 1):
        if _poisson_tail(s_mean, k) <= 0.5 * tol * math.exp(-s_mean):
            trunc_k = k
            break
    if trunc_k is None:
        raise OracleTruncationError(
            f"series needs more than {ORACLE_TRUNCATION_CAP} terms at tol={tol} "
            f"(sum lambda * vol = {s_mean:.3g}); use the closed form or a "
            "smaller model"
        )
    ns = min(ORACLE_SAMPLES_CAP, math.ceil((4.0 / tol) ** 2))

    d = model.dimension
    side = model.region.side_length
    inter2 = model.interaction.entries ** 2
    base = rng.derive_key(seed, _PURPOSE_ORACLE)

    z_hat = 1.0
    var = 0.0
    term_index = 0
    for k in range(1, trunc_k + 1):
        for counts in _compositions(k, model.q):
            log_coef = k * math.log(vol)
            for i, ki in enumerate(counts):
                if ki:
                    if lam[i] == 0.0:
                        log_coef = -math.inf
                        break
                    log_coef += ki * math.log(lam[i]) - math.lgamma(ki + 1)
            term_index += 1
            if log_coef == -math.inf:
                continue
            coef = math.exp(log_coef)
            if k == 1:
                z_hat += coef
                continue
            types = np.repeat(np.arange(model.q), counts)
            thr = inter2[types[:, None], types[None, :]]
            iu = np.triu_indices(k, 1)
            thr_pairs = thr[iu]
            key = rng.derive_key(base, term_index)
            counter = 0
            hits = 0
            chunk = max(1, (1 << 22) // (k * k))
            done = 0
            while done < ns:
                b = min(chunk, ns - done)
                u = rng.stream_uniform_array(key, counter, b * k * d)
                counter += b * k * d
                pts = u.reshape(b, k, d) * side
                diff = pts[:, :, None, :] - pts[:, None, :, :]
                d2 = np.einsum("bijk,bijk->bij", diff, diff)
                ok = np.all(d2[:, iu[0], iu[1]] >= thr_pairs[None, :], axis=1)
                hits += int(ok.sum())
                done += b
            p_hat = hits / ns
            z_hat += coef * p_hat
            var += coef * coef * p_hat * (1.0 - p_hat) / ns

    tail_abs = _poisson_tail(s_mean, trunc_k)
    return OracleEstimate(math.log(z_hat), math.sqrt(var) / z_hat,
                          trunc_k, ns, tail_abs)


# ---------------------------------------------------------------------------
# Perturbation sampling


def _perturb_points(allocation: Allocation, point_indices: np.ndarray,
                    types: np.ndarray, key: int) -> ContinuousConfiguration:
    d = allocation.region.dimension
    n = len(point_indices)
    stream = rng.Stream(key)
    perm = stream.permutation(n)
    pts = np.empty((n, d))
    out_types = np.empty(n, dtype=np.int64)
    for slot, src in enumerate(perm):
        u = stream.uniforms(d)
        pts[slot] = allocation.preimage_sample(int(point_indices[src]), u)
        out_types[slot] = types[src]
    return ContinuousConfiguration(pts, out_types)


def perturb(graph: HardCoreGraph, allocation: Allocation,
            independent_set: np.ndarray, seed: int) -> ContinuousConfiguration:
    """Turn an independent set into a continuous configuration.

    The vertices are ordered by a uniform random permutation; each vertex
    (x, i) becomes a particle of type i at a uniform point of the preimage
    cell of x. Requires an allocation with explicit cell geometry.
    """
    vs = np.sort(np.asarray(independent_set, dtype=np.int64))
    points = vs // graph.q
    types = vs % graph.q
    key = rng.derive_key(seed, _PURPOSE_PERTURB)
    return _perturb_points(allocation, points, types, key)


def sampling_resolution(model: ModelSpec, eps_s: float) -> float:
    """Feasible resolution for an eps_s-approximate continuous sample:
    sqrt(d) (32 q max(lam, lam^2) vol / eps_s)^(1/d) max(1, 4 / lam_min)."""
    if not 0 < eps_s <= 1:
        raise ValueError("eps_s must be in (0, 1]")
    d = model.dimension
    lam_max = model.fugacities.lambda_max()
    lam_min = model.interaction.lambda_min()
    base = (32.0 * model.q * max(lam_max, lam_max ** 2) * model.volume()
            / eps_s) ** (1.0 / d)
    factor = 1.0 if math.isinf(lam_min) else max(1.0, 4.0 / lam_min)
    return smallest_feasible_resolution(model.region.side_length,
                                        math.sqrt(d) * base * factor)


@dataclass
class ContinuousSample:
    configuration: ContinuousConfiguration
    valid: bool
    retries: int
    resolution: float
    num_vertices: int
    steps: int
    seed: int


def _interval_chain_setup(model: ModelSpec, rho: float):
    pts = CanonicalPointSet(model.region, rho)
    n = pts.size
    positions = np.arange(n, dtype=np.float64) / rho
    sigma = float(model.interaction.entries[0, 0])
    w = float(model.fugacities.values[0]) * model.volume() / n
    # exact max degree of the implicit interval graph
    sig2 = sigma * sigma
    half = 0
    mid = n // 2
    for j in range(mid - 1, -1, -1):
        diff = positions[mid] - positions[j]
        if diff * diff < sig2:
            half += 1
        else:
            break
    max_deg = 0
    for i in range(n):
        left = min(half, i)
        right = min(half, n - 1 - i)
        max_deg = max(max_deg, left + right)
    if sigma > 0 and sigma * rho >= 1.0:
        cap = int((n - 1) // max(1, math.ceil(sigma * rho - 1e-12))) + 5
    else:
        cap = n
    return positions, sig2, w, max_deg, min(cap, n)


def sample_continuous(model: ModelSpec, eps_s: float, seed: int,
                      max_retries: int = 16, *, c: float = 1.0,
                      steps: Optional[int] = None,
                      resolution: Optional[float] = None) -> ContinuousSample:
    """Approximate sample from the continuous Gibbs distribution.

    Discretizes at the sampling resolution, runs the chain at variation
    budget eps_s / 2, perturbs the resulting independent set, and rejects
    and repeats when the perturbed configuration is invalid. After
    ``max_retries`` rejections the last configuration is returned flagged
    invalid rather than raising.
    """
    if not 0 < eps_s <= 1:
        raise ValueError("eps_s must be in (0, 1]")
    rho = resolution if resolution is not None else sampling_resolution(model, eps_s)
    _ = CanonicalPointSet(model.region, rho)  # feasibility check
    allocation = Allocation.canonical(model.region, rho)
    base = rng.derive_key(seed, _PURPOSE_CSAMPLE)

    if model.dimension == 1 and model.q == 1:
        positions, sig2, w, max_deg, cap = _interval_chain_setup(model, rho)
        n = positions.shape[0]
        nsteps = steps if steps is not None else int(math.ceil(
            glauber.step_count(n, max_deg, eps_s / 2.0, c)))
        occ = np.empty(cap, dtype=np.int64)
        last = None
        for attempt in range(max_retries + 1):
            key = rng.derive_key(base, attempt)
            m = _kernels.run_interval_chain(positions, sig2, w, np.uint64(key),
                                            nsteps, occ)
            vertices = np.sort(occ[:m].copy())
            cfg = _perturb_points(allocation, vertices,
                                  np.zeros(m, dtype=np.int64),
                                  rng.derive_key(key, _PURPOSE_PERTURB))
            last = cfg
            if is_valid(model, cfg):
                return ContinuousSample(cfg, True, attempt, rho, n, nsteps, seed)
        return ContinuousSample(last, False, max_retries, rho, n, nsteps, seed)

    graph = build_graph(model, CanonicalPointSet(model.region, rho))
    nsteps = steps if steps is not None else int(math.ceil(
        glauber.step_count(graph.num_vertices, graph.max_degree(),
                           eps_s / 2.0, c)))
    last = None
    for attempt in range(max_retries + 1):
        vs = glauber.sample(graph, eps_s / 2.0, rng.derive_key(base, attempt),
                            c=c, steps=nsteps)
        cfg = perturb(graph, allocation, vs, rng.derive_key(base, 7777 + attempt))
        last = cfg
        if is_valid(model, cfg):
            return ContinuousSample(cfg, True, attempt, rho,
                                    graph.num_vertices, nsteps, seed)
    return ContinuousSample(last, False, max_retries, rho,
                            graph.num_vertices, nsteps, seed)


@dataclass
class BatchSamples:
    """Stationary-stream batch of continuous samples (1D single type).

    Samples come from ``streams`` independent chains, each burnt in and then
    snapshotted every ``spacing`` steps; the per-stream means are i.i.d., so
    their spread yields an honest standard error for mean statistics even
    though consecutive snapshots within a stream are correlated.
    """

    particle_counts: np.ndarray       # per retained sample
    invalid_before_retry: np.ndarray  # first perturbation failed validity
    retries: np.ndarray
    stream_of_sample: np.ndarray
    resolution: float
    num_vertices: int
    burn_steps: int
    spacing_steps: int
    configurations: Optional[list] = field(default=None, repr=False)

    def mean_count(self) -> float:
        return float(self.particle_counts.mean())

    def mean_count_se(self) -> float:
        streams = np.unique(self.stream_of_sample)
        means = np.array([self.particle_counts[self.stream_of_sample == s].mean()
                          for s in streams])
        return float(means.std(ddof=1) / math.sqrt(means.size))

    def invalid_rate(self) -> float:
        return float(self.invalid_before_retry.mean())

    def invalid_rate_se(self) -> float:
        streams = np.unique(self.stream_of_sample)
        means = np.array([self.invalid_before_retry[self.stream_of_sample == s].mean()
                          for s in streams])
        return float(means.std(ddof=1) / math.sqrt(means.size))


def sample_continuous_batch(model: ModelSpec, eps_s: float, n_samples: int,
                            seed: int, *, streams: int = 20,
                            spacing_sweeps: float = 1.0,
                            burn_factor: float = 6.0,
                            max_retries: int = 16,
                            resolution: Optional[float] = None,
                            keep_configurations: bool = False) -> BatchSamples:
    """Batch variant of the continuous sampler for moment studies.

    Only 1D single-type models (the chain uses the implicit interval
    adjacency). Each stream burns in for burn_factor * n * (ln n + ln(2/eps))
    steps so its marginal is stationary; retained snapshots then all follow
    the post-burn-in chain law, and a rejected perturbation consumes the next
    snapshot of the same stream, mirroring the reject-and-repeat rule.
    """
    if model.dimension != 1 or model.q != 1:
        raise ValueError("batch sampling implemented for 1D single-type models")
    if not 0 < eps_s <= 1:
        raise ValueError("eps_s must be in (0, 1]")
    rho = resolution if resolution is not None else sampling_resolution(model, eps_s)
    allocation = Allocation.canonical(model.region, rho)
    positions, sig2, w, _max_deg, cap = _interval_chain_setup(model, rho)
    n = positions.shape[0]

    spacing = max(1, int(round(spacing_sweeps * n)))
    burn = int(math.ceil(burn_factor * n * (math.log(n) + math.log(2.0 / eps_s))))
    per_stream = math.ceil(n_samples / streams)
    buffer = per_stream + max(16, per_stream // 16)

    base = rng.derive_key(seed, _PURPOSE_BATCH)
    keys = rng.derive_key_array(base, streams)
    counts = np.empty((streams, buffer), dtype=np.int64)
    snaps = np.empty((streams, buffer, cap), dtype=np.int64)
    _kernels.run_interval_streams(positions, sig2, w, keys, burn, spacing,
                                  buffer, counts, snaps)

    out_counts = np.empty(n_samples, dtype=np.int64)
    out_invalid = np.zeros(n_samples, dtype=bool)
    out_retries = np.zeros(n_samples, dtype=np.int64)
    out_stream = np.empty(n_samples, dtype=np.int64)
    configs = [] if keep_configurations else None
    perturb_base = rng.derive_key(base, 0x7065)

    idx = 0
    for s in range(streams):
        cursor = 0
        take = min(per_stream, n_samples - idx)
        for _ in range(take):
            retry = 0
            cfg = None
            while True:
                if cursor >= buffer:
                    raise RuntimeError("snapshot buffer exhausted; increase "
                                       "streams or lower max_retries")
                m = int(counts[s, cursor])
                vertices = snaps[s, cursor, :m]
                cursor += 1
                key = rng.derive_key(perturb_base, idx * (max_retries + 1) + retry)
                cfg = _perturb_points(allocation, np.sort(vertices),
                                      np.zeros(m, dtype=np.int64), key)
                ok = is_valid(model, cfg)
                if retry == 0:
                    out_invalid[idx] = not ok
                if ok or retry >= max_retries:
                    break
                retry += 1
            out_counts[idx] = cfg.n
            out_retries[idx] = retry
            out_stream[idx] = s
            if configs is not None:
                configs.append(cfg)
            idx += 1
        if idx >= n_samples:
            break

    return BatchSamples(out_counts, out_invalid, out_retries, out_stream,
                        rho, n, burn, spacing, configs)
