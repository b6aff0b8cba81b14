"""Continuous hard-constraint point processes and their approximability conditions.

A model is a triple (region, interaction matrix, fugacities): particles of q
types live in the cube [0, l)^d, type i appears with Poisson intensity
lambda(i), and a configuration is valid only if particles of types i and j
are never closer than the interaction distance entry (i, j). All types here
are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


class ConfigError(ValueError):
    """Model config rejected; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Region:
    """Axis-aligned cube [0, side_length)^dimension."""

    dimension: int
    side_length: float

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if not (self.side_length > 0):
            raise ValueError("side_length must be > 0")

    def volume(self) -> float:
        return self.side_length ** self.dimension


@dataclass(frozen=True)
class InteractionMatrix:
    """Symmetric q x q matrix of minimum pair distances (0 = unconstrained)."""

    entries: np.ndarray

    def __post_init__(self):
        e = _readonly(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError("interaction matrix must be square")
        if np.any(e < 0) or not np.all(np.isfinite(e)):
            raise ValueError("interaction entries must be finite and >= 0")
        if not np.array_equal(e, e.T):
            raise ValueError("interaction matrix must be symmetric")
        object.__setattr__(self, "entries", e)

    @property
    def q(self) -> int:
        return self.entries.shape[0]

    def lambda_min(self) -> float:
        """Smallest strictly positive entry; +inf when all entries are zero."""
        pos = self.entries[self.entries > 0]
        return float(pos.min()) if pos.size else math.inf

    def lambda_max(self) -> float:
        return float(self.entries.max())


@dataclass(frozen=True)
class Fugacities:
    """Per-type Poisson intensities."""

    values: np.ndarray

    def __post_init__(self):
        v = _readonly(np.atleast_1d(self.values))
        if v.ndim != 1 or v.size < 1:
            raise ValueError("fugacities must be a non-empty vector")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("fugacities must be finite and >= 0")
        object.__setattr__(self, "values", v)

    @property
    def q(self) -> int:
        return self.values.size

    def lambda_max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class ModelSpec:
    """A hard-constraint point process (region, interactions, fugacities)."""

    region: Region
    interaction: InteractionMatrix
    fugacities: Fugacities
    type_names: tuple = field(default=())

    def __post_init__(self):
        if self.interaction.q != self.fugacities.q:
            raise ValueError(
                f"interaction is {self.interaction.q}x{self.interaction.q} but "
                f"{self.fugacities.q} fugacities were given"
            )
        if self.type_names and len(self.type_names) != self.q:
            raise ValueError("type_names length must match the number of types")

    @property
    def q(self) -> int:
        return self.fugacities.q

    @property
    def dimension(self) -> int:
        return self.region.dimension

    def volume(self) -> float:
        return self.region.volume()

    def sum_fugacity(self) -> float:
        return float(self.fugacities.values.sum())

    @staticmethod
    def hard_sphere(dimension: int, side_length: float, radius: float,
                    fugacity: float) -> "ModelSpec":
        """Single type, pairwise minimum distance 2*radius."""
        if radius < 0:
            raise ValueError("radius must be >= 0")
        return ModelSpec(
            Region(dimension, side_length),
            InteractionMatrix(np.array([[2.0 * radius]])),
            Fugacities(np.array([float(fugacity)])),
        )

    @staticmethod
    def widom_rowlinson(dimension: int, side_length: float,
                        radii: Sequence[float],
                        fugacities: Sequence[float]) -> "ModelSpec":
        """q types; same-type pairs free, cross-type minimum distance r_i + r_j."""
        r = np.asarray(radii, dtype=np.float64)
        if r.ndim != 1 or np.any(r < 0):
            raise ValueError("radii must be a vector of non-negative reals")
        entries = r[:, None] + r[None, :]
        np.fill_diagonal(entries, 0.0)
        return ModelSpec(
            Region(dimension, side_length),
            InteractionMatrix(entries),
            Fugacities(np.asarray(fugacities, dtype=np.float64)),
        )


@dataclass(frozen=True)
class VolumeExclusionMatrix:
    """Entry (i, j) = volume of a d-ball whose radius is interaction (i, j)."""

    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _readonly(self.entries))

    def l1_norm(self) -> float:
        """Max row sum (equals max column sum; the matrix is symmetric)."""
        return float(np.abs(self.entries).sum(axis=1).max())


def ball_volume(dimension: int, radius: float) -> float:
    """Lebesgue volume of a d-ball, pi^(d/2) r^d / Gamma(d/2 + 1)."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    d = int(dimension)
    return math.pi ** (d / 2.0) * radius ** d / math.gamma(d / 2.0 + 1.0)


def volume_exclusion_matrix(model: ModelSpec) -> VolumeExclusionMatrix:
    d = model.dimension
    ent = model.interaction.entries
    out = np.zeros_like(ent)
    for i in range(model.q):
        for j in range(model.q):
            out[i, j] = ball_volume(d, ent[i, j])
    return VolumeExclusionMatrix(out)


def log_z_upper_bound(model: ModelSpec) -> float:
    """log of the crude partition-function bound exp(sum_i lambda(i) vol)."""
    return model.sum_fugacity() * model.volume()


@dataclass(frozen=True)
class UniformConditionReport:
    satisfied: bool
    lhs: float   # max fugacity
    rhs: float   # e / L1 norm of the volume exclusion matrix

    def describe(self) -> str:
        rel = "<" if self.satisfied else ">="
        return (f"uniform-fugacity condition lambda_max < e/||Theta||_1: "
                f"{self.lhs:.6g} {rel} {self.rhs:.6g}")


def check_uniform_condition(model: ModelSpec) -> UniformConditionReport:
    """Check lambda_max < e / ||Theta||_1 with Theta the volume exclusion matrix.

    Raises ValueError when the matrix is identically zero: the model is
    unconstrained and the closed form exp(sum lambda vol) applies instead.
    """
    theta = volume_exclusion_matrix(model)
    norm = theta.l1_norm()
    if norm == 0.0:
        raise ValueError(
            "volume exclusion matrix is zero (no constraints); condition vacuous, "
            "use the unconstrained closed form"
        )
    lhs = model.fugacities.lambda_max()
    rhs = math.e / norm
    return UniformConditionReport(lhs < rhs, lhs, rhs)


@dataclass(frozen=True)
class CliqueConditionResult:
    """Witness search outcome for the per-type decay condition.

    status is one of:
      'feasible'       -- witness f found, f(i) > sum_j Theta(i,j) f(j) lambda(j)
      'infeasible'     -- proven no witness exists
      'not_certified'  -- iteration cap hit without certificate either way
    """

    status: str
    f: Optional[np.ndarray]
    spectral_radius_estimate: float

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


_POWER_ITER_CAP = 10_000
_POWER_ITER_SLACK = 1e-9


def check_clique_condition(model: ModelSpec) -> CliqueConditionResult:
    """Search for f > 0 with f(i) > sum_j Theta(i,j) f(j) lambda(j) for all i.

    Such an f exists iff the spectral radius of M(i,j) = Theta(i,j) lambda(j)
    is below 1. For q = 2 with zero diagonal the product test
    Theta(1,2) lambda(2) * Theta(2,1) lambda(1) < 1 is exact and the witness
    is (1, (1+beta) Theta(2,1) lambda(1)). Otherwise the witness is the
    truncated Neumann series sum_k M^k 1, accepted once its tail is
    negligible; Collatz-Wielandt ratios certify infeasibility when they
    stay >= 1.
    """
    theta = volume_exclusion_matrix(model).entries
    lam = model.fugacities.values
    q = model.q
    m = theta * lam[None, :]

    if not m.any():
        return CliqueConditionResult("feasible", np.ones(q), 0.0)

    if q == 2 and theta[0, 0] == 0.0 and theta[1, 1] == 0.0:
        product = m[0, 1] * m[1, 0]
        if product >= 1.0:
            return CliqueConditionResult("infeasible", None, math.sqrt(product))
        alpha = 1.0 - product
        beta = 0.5 * alpha / max(product, _POWER_ITER_SLACK)
        f2 = (1.0 + beta) * m[1, 0]
        if f2 <= 0.0:
            # type 1 exerts no pressure on type 2; any positive value works
            f2 = 1.0
        f = np.array([1.0, f2])
        if np.all(f > m @ f):
            return CliqueConditionResult("feasible", f, math.sqrt(product))

    # Neumann series f_T = sum_{k<=T} M^k 1; converges iff rho(M) < 1.
    ones = np.ones(q)
    f = ones.copy()
    term = ones.copy()
    rho_est = 0.0
    for _ in range(_POWER_ITER_CAP):
        term = m @ term
        norm = float(term.max())
        mf = m @ f
        with np.errstate(divide="ignore"):
            ratios = np.where(f > 0, mf / np.maximum(f, 1e-300), np.inf)
        rho_est = float(np.min(ratios))  # Collatz-Wielandt lower bound on rho
        if rho_est >= 1.0 and norm >= 1.0:
            return CliqueConditionResult("infeasible", None, rho_est)
        if norm <= _POWER_ITER_SLACK * float(f.max()):
            # tail negligible; f satisfies (I - M) f = 1 - tail > 0
            if np.all(f > mf):
                return CliqueConditionResult("feasible", f, rho_est)
            break
        f = f + term
        if not np.all(np.isfinite(f)):
            return CliqueConditionResult("infeasible", None, rho_est)
    return CliqueConditionResult("not_certified", None, rho_est)


# ---------------------------------------------------------------------------
# JSON config ingestion


def model_from_config(config: Union[dict, str]) -> ModelSpec:
    """Build a ModelSpec from a config dict or a path to a JSON file.

    Expected shape:
      {"dimension": int, "side_length": float,
       "types": [{"name": str, "fugacity": float}, ...],
       "interaction": {"preset": "hard_sphere" | "widom_rowlinson" | "matrix",
                       "radius": float | "radii": [...] | "matrix": [[...]]}}
    """
    if isinstance(config, str):
        with open(config, "r", encoding="utf-8") as fh:
            try:
                config = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("<root>", "config must be a JSON object")

    def need(key, typ, where=config, label=None):
        label = label or key
        if key not in where:
            raise ConfigError(label, "missing")
        val = where[key]
        if typ is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, typ) or isinstance(val, bool):
            raise ConfigError(label, f"expected {typ.__name__}")
        return val

    dimension = need("dimension", int)
    if dimension < 1:
        raise ConfigError("dimension", "must be >= 1")
    side = need("side_length", float)
    if not side > 0:
        raise ConfigError("side_length", "must be > 0")

    types = need("types", list)
    if not types:
        raise ConfigError("types", "must list at least one type")
    names, fugs = [], []
    for idx, entry in enumerate(types):
        if not isinstance(entry, dict):
            raise ConfigError(f"types[{idx}]", "expected object")
        names.append(entry.get("name", f"type{idx}"))
        fug = need("fugacity", float, entry, f"types[{idx}].fugacity")
        if fug < 0:
            raise ConfigError(f"types[{idx}].fugacity", "must be >= 0")
        fugs.append(fug)
    q = len(fugs)

    inter = need("interaction", dict)
    preset = need("preset", str, inter, "interaction.preset")
    if preset == "hard_sphere":
        if q != 1:
            raise ConfigError("types", "hard_sphere preset requires exactly one type")
        radius = need("radius", float, inter, "interaction.radius")
        if radius < 0:
            raise ConfigError("interaction.radius", "must be >= 0")
        return ModelSpec.hard_sphere(dimension, side, radius, fugs[0])
    if preset == "widom_rowlinson":
        radii = need("radii", list, inter, "interaction.radii")
        if len(radii) != q:
            raise ConfigError("interaction.radii", f"expected {q} entries")
        try:
            spec = ModelSpec.widom_rowlinson(dimension, side, radii, fugs)
        except ValueError as exc:
            raise ConfigError("interaction.radii", str(exc)) from exc
        return ModelSpec(spec.region, spec.interaction, spec.fugacities,
                         tuple(names))
    if preset == "matrix":
        matrix = need("matrix", list, inter, "interaction.matrix")
        try:
            im = InteractionMatrix(np.asarray(matrix, dtype=np.float64))
        except ValueError as exc:
            raise ConfigError("interaction.matrix", str(exc)) from exc
        if im.q != q:
            raise ConfigError("interaction.matrix", f"expected {q}x{q} matrix")
        return ModelSpec(Region(dimension, side), im, Fugacities(np.asarray(fugs)),
                         tuple(names))
    raise ConfigError("interaction.preset",
                      "must be one of hard_sphere, widom_rowlinson, matrix")
