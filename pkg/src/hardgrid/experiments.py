"""Batch experiments: concentration of random discretizations, expectation
bounds, and the tightness of the required point count.

The 1D hard-rod model is the workhorse here because its exact transfer
recursion scales to millions of points, so every trial gets an exact
discrete value and an exact continuous reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .discretize import RandomPointSet
from .hardcore import exact_log_z_1d
from .continuous import tonks_log_z
from .model import ModelSpec


def hypercube_partitioning_size(dimension: int, side_length: float,
                                eps: float) -> int:
    """Number of cells ceil(sqrt(d) l / eps)^d of the equal-box partitioning."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    return math.ceil(math.sqrt(dimension) * side_length / eps) ** dimension


def required_points(m: int, gamma1: float, delta2: float, p: float) -> int:
    """Points needed so a random set admits a delta2-allocation w.p. >= 1-p:
    ceil(48 (1/delta2)^2 (1/gamma1) m ln(2m/p))."""
    if not (0 < gamma1 <= 1 and 0 < delta2 <= 1 and 0 < p <= 1):
        raise ValueError("gamma1, delta2, p must lie in (0, 1]")
    return math.ceil(48.0 * (1.0 / delta2) ** 2 * (1.0 / gamma1) * m
                     * math.log(2.0 * m / p))


def modified_markov_bound(eps: float, delta: float, c: float) -> float:
    """Upper-tail bound (1/(c+1)) (1 + delta (1-eps)/eps) for a non-negative
    variable whose lower tail below (1-eps) E[X] has mass at most delta."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if not 0 <= delta <= 1:
        raise ValueError("delta must be in [0, 1]")
    if c < 0:
        raise ValueError("c must be >= 0")
    return (1.0 / (c + 1.0)) * (1.0 + delta * (1.0 - eps) / eps)


def tightness_check(fugacity: float, volume: float, n: int,
                    eps_d: float) -> bool:
    """True iff n points provably under-approximate the free model:
    (1 + lam vol / n)^n < exp(-eps_d) exp(lam vol), evaluated in log space.

    Guaranteed to hold for every n < (lam vol)^2 / (6 eps_d) once
    lam vol > 6.
    """
    x = fugacity * volume
    if not x > 6.0:
        raise ValueError("requires fugacity * volume > 6")
    if n < 1:
        raise ValueError("n must be >= 1")
    lhs = n * math.log1p(x / n)
    return lhs < x - eps_d


def _require_1d_single_type(model: ModelSpec) -> tuple[float, float, float]:
    if model.dimension != 1 or model.q != 1:
        raise ValueError("experiment requires a 1D single-type model")
    sigma = float(model.interaction.entries[0, 0])
    if not sigma > 0:
        raise ValueError("experiment requires a positive interaction distance")
    lam = float(model.fugacities.values[0])
    return model.region.side_length, sigma / 2.0, lam


@dataclass
class ConcentrationReport:
    n: int
    trials: int
    eps_d: float
    reference_ln_z: float
    fraction_within: float
    deviations: np.ndarray
    rows: list = field(default_factory=list)  # (trial, n, ln_z_hc, ln_z_ref, dev)

    def summary(self) -> dict:
        dev = self.deviations
        return {
            "n": self.n,
            "trials": self.trials,
            "eps_d": self.eps_d,
            "fraction_within": self.fraction_within,
            "min_deviation": float(dev.min()) if dev.size else math.nan,
            "median_deviation": float(np.median(dev)) if dev.size else math.nan,
            "max_deviation": float(dev.max()) if dev.size else math.nan,
        }


def concentration_trial(model: ModelSpec, n: int, trials: int, eps_d: float,
                        seed: int) -> ConcentrationReport:
    """Uniformly random n-point discretizations of a 1D hard-rod model.

    Each trial draws a fresh point set, computes the exact discrete ln Z by
    the transfer recursion, and compares against the closed form; the report
    carries the fraction of trials within eps_d and the deviation spread.
    """
    side, radius, lam = _require_1d_single_type(model)
    if n > 1_000_000:
        raise ValueError("n capped at 10^6 for the exact recursion")
    ln_z_ref = float(tonks_log_z(side, radius, lam))
    sigma = 2.0 * radius
    w = lam * model.volume() / n

    rows = []
    deviations = np.empty(trials)
    for t in range(trials):
        pts = RandomPointSet(model.region, n, rng.derive_key(seed, t))
        pos = np.sort(pts.points[:, 0])
        ln_z_hc = float(exact_log_z_1d(pos, sigma, w))
        dev = abs(ln_z_hc - ln_z_ref)
        deviations[t] = dev
        rows.append((t, n, ln_z_hc, ln_z_ref, dev))
    frac = float((deviations <= eps_d).mean()) if trials else math.nan
    return ConcentrationReport(n, trials, eps_d, ln_z_ref, frac,
                               deviations, rows)


@dataclass
class ExpectationReport:
    mean_z: float
    z_ref: float
    standard_error: float
    passed: bool           # mean - 2 SE <= reference (one-sided)
    trials: int
    rows: list = field(default_factory=list)


def expectation_check(model: ModelSpec, n: int, trials: int,
                      seed: int) -> ExpectationReport:
    """Estimate E[Z] over random discretizations and test it from above.

    Z values are exponentiated with a common max shift, so the linear-space
    mean is stable even when ln Z is large.
    """
    side, radius, lam = _require_1d_single_type(model)
    ln_z_ref = float(tonks_log_z(side, radius, lam))
    sigma = 2.0 * radius
    w = lam * model.volume() / n

    ln_zs = np.empty(trials)
    rows = []
    for t in range(trials):
        pts = RandomPointSet(model.region, n, rng.derive_key(seed, t))
        pos = np.sort(pts.points[:, 0])
        ln_zs[t] = float(exact_log_z_1d(pos, sigma, w))
        rows.append((t, n, float(ln_zs[t]), ln_z_ref,
                     abs(float(ln_zs[t]) - ln_z_ref)))

    shift = float(ln_zs.max())
    scaled = np.exp(ln_zs - shift)
    mean_scaled = float(scaled.mean())
    se_scaled = float(scaled.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    scale = math.exp(shift)
    mean_z = mean_scaled * scale
    se = se_scaled * scale
    z_ref = math.exp(ln_z_ref)
    return ExpectationReport(mean_z, z_ref, se, mean_z - 2.0 * se <= z_ref,
                             trials, rows)
