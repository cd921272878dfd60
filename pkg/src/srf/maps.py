"""Semantic maps, region constraint validation, and the volume-ratio metric.

A semantic map is a dense grid of oracle values over the study space, the
per-model picture of where the function is confident.  Averaging maps from
several oracles gives the data-level picture.  A region report checks the
operator constraints over a region: it is robust when the mean stays high
and the variance low, adversarial when the mean stays low and the variance
high, and neither otherwise.  The volume-ratio metric is mean region volume
over domain volume, both unnormalized so the ratio reads as a fraction of
the space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Literal, Sequence

import numpy as np

from .errors import BudgetExceededError
from .geometry import Domain, FloatArray, Region, normalized_volume
from .oracles import FunctionOracle

GRID_BUDGET = 10_000_000
"""Hard cap on the total number of grid samples."""

_CHUNK = 65_536

MAP_FORMAT_TAG = "srf-map v1"

Verdict = Literal["robust", "adversarial", "neither"]


@dataclass(frozen=True, eq=False)
class SemanticMap:
    """Dense grid of f samples over a domain.

    values is flat in row-major order: the last dimension varies fastest,
    matching the sampling order of ``sample_map``.
    """

    domain: Domain
    grid: tuple[int, ...]
    values: FloatArray
    meta: str = ""

    def __post_init__(self) -> None:
        grid = tuple(int(c) for c in self.grid)
        object.__setattr__(self, "grid", grid)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if len(grid) != self.domain.n:
            raise ValueError(f"grid has {len(grid)} entries for a {self.domain.n}-D domain")
        if any(c < 2 for c in grid):
            raise ValueError(f"every grid count must be at least 2, got {grid}")
        expected = int(np.prod(grid))
        if values.shape != (expected,):
            raise ValueError(f"expected {expected} values, got shape {values.shape}")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("map values must lie in [0, 1]")

    def axis_points(self, dim: int) -> FloatArray:
        """The inclusive uniform grid coordinates along one dimension."""
        return np.linspace(self.domain.lo[dim], self.domain.hi[dim], self.grid[dim])


@dataclass(frozen=True, eq=False)
class RegionReport:
    """Constraint check of a region: grid mean/variance and the verdict."""

    mean: float
    variance: float
    contains_u0: bool
    volume: float
    samples_used: int
    verdict: Verdict

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "contains_u0": self.contains_u0,
            "volume": self.volume,
            "samples_used": self.samples_used,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def _check_budget(counts: Sequence[int]) -> int:
    total = 1
    for c in counts:
        if c < 2:
            raise ValueError(f"every grid count must be at least 2, got {tuple(counts)}")
        total *= int(c)
    if total > GRID_BUDGET:
        raise BudgetExceededError(
            f"grid of {total} points exceeds the {GRID_BUDGET} sample budget"
        )
    return total


def _grid_values(
    oracle: FunctionOracle, lo: FloatArray, hi: FloatArray, counts: tuple[int, ...]
) -> FloatArray:
    """Oracle values over an inclusive uniform grid, last dimension fastest."""
    axes = [np.linspace(lo[k], hi[k], counts[k]) for k in range(len(counts))]
    total = int(np.prod(counts))
    values = np.empty(total, dtype=np.float64)
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        grid_idx = np.unravel_index(flat, counts)
        pts = np.column_stack([axes[k][grid_idx[k]] for k in range(len(counts))])
        values[flat] = oracle.f_many(pts)
    return values


def sample_map(oracle: FunctionOracle, domain: Domain, grid: Sequence[int] | int) -> SemanticMap:
    """Sample the oracle over an inclusive uniform grid.

    ``grid`` is a per-dimension count or a single count applied to every
    dimension; endpoints are sampled.  Ordering is deterministic with the
    last dimension varying fastest.
    """
    if isinstance(grid, (int, np.integer)):
        counts: tuple[int, ...] = (int(grid),) * domain.n
    else:
        counts = tuple(int(c) for c in grid)
    if len(counts) != domain.n:
        raise ValueError(f"grid has {len(counts)} entries for a {domain.n}-D domain")
    _check_budget(counts)
    values = _grid_values(oracle, domain.lo, domain.hi, counts)
    return SemanticMap(domain=domain, grid=counts, values=values, meta=oracle.name)


def average_maps(maps: Sequence[SemanticMap]) -> SemanticMap:
    """Pointwise mean of maps sharing a domain and grid."""
    if not maps:
        raise ValueError("at least one map is required")
    first = maps[0]
    for other in maps[1:]:
        if other.grid != first.grid:
            raise ValueError(f"grid mismatch: {other.grid} vs {first.grid}")
        if not (
            np.array_equal(other.domain.lo, first.domain.lo)
            and np.array_equal(other.domain.hi, first.domain.hi)
        ):
            raise ValueError("domain mismatch between maps")
    stacked = np.stack([m.values for m in maps])
    return SemanticMap(
        domain=first.domain,
        grid=first.grid,
        values=stacked.mean(axis=0),
        meta=f"average:{len(maps)}",
    )


def map_to_csv(semantic_map: SemanticMap) -> str:
    """Render a map as CSV with a single header comment line.

    Header: ``# srf-map v1 n=<n> grid=<c1,...,cn> domain=<lo1:hi1,...>``;
    rows are ``u1,...,un,f`` in sampling order with round-trip float
    formatting.
    """
    domain = semantic_map.domain
    grid_text = ",".join(str(c) for c in semantic_map.grid)
    domain_text = ",".join(
        f"{float(lo)!r}:{float(hi)!r}" for lo, hi in zip(domain.lo, domain.hi)
    )
    lines = [f"# {MAP_FORMAT_TAG} n={domain.n} grid={grid_text} domain={domain_text}"]
    axes = [semantic_map.axis_points(k) for k in range(domain.n)]
    for flat, value in enumerate(semantic_map.values):
        idx = np.unravel_index(flat, semantic_map.grid)
        coords = ",".join(f"{float(axes[k][idx[k]])!r}" for k in range(domain.n))
        lines.append(f"{coords},{float(value)!r}")
    return "\n".join(lines) + "\n"


def map_from_csv(text: str) -> SemanticMap:
    """Parse a map written by ``map_to_csv``."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith(f"# {MAP_FORMAT_TAG} "):
        raise ValueError("not a recognized map file: missing header")
    header = lines[0]
    fields: dict[str, str] = {}
    for token in header.split()[3:]:
        key, _, value = token.partition("=")
        fields[key] = value
    try:
        n = int(fields["n"])
        counts = tuple(int(c) for c in fields["grid"].split(","))
        pairs = [pair.split(":") for pair in fields["domain"].split(",")]
        lo = np.array([float(p[0]) for p in pairs])
        hi = np.array([float(p[1]) for p in pairs])
    except (KeyError, IndexError, ValueError) as exc:
        raise ValueError(f"malformed map header: {header!r}") from exc
    if len(counts) != n or lo.size != n:
        raise ValueError(f"inconsistent map header: {header!r}")
    values = np.array([float(line.rsplit(",", 1)[1]) for line in lines[1:]])
    return SemanticMap(domain=Domain(lo, hi), grid=counts, values=values)


def validate_region(
    oracle: FunctionOracle,
    reg: Region,
    eps_m: float = 0.15,
    eps_v: float = 0.01,
    samples_per_dim: int = 33,
    u0: FloatArray | None = None,
) -> RegionReport:
    """Check the robustness-operator constraints over a region.

    The verdict is ``robust`` when mean >= 1 - eps_m and variance <= eps_v,
    ``adversarial`` when mean <= eps_m and variance >= eps_v, and
    ``neither`` otherwise.  Note the variance clause of the adversarial
    test is taken literally, so a uniformly low plateau validates as
    neither.
    """
    counts = (int(samples_per_dim),) * reg.n
    total = _check_budget(counts)
    values = _grid_values(oracle, reg.a, reg.b, counts)
    mean = float(values.mean())
    variance = float(values.var())
    contains_u0 = True if u0 is None else reg.contains(u0)
    if mean >= 1.0 - eps_m and variance <= eps_v:
        verdict: Verdict = "robust"
    elif mean <= eps_m and variance >= eps_v:
        verdict = "adversarial"
    else:
        verdict = "neither"
    return RegionReport(
        mean=mean,
        variance=variance,
        contains_u0=contains_u0,
        volume=normalized_volume(reg),
        samples_used=total,
        verdict=verdict,
    )


def srvr(region_volumes: Sequence[float], domain: Domain) -> float:
    """Mean region volume over domain volume (raw volumes on both sides)."""
    volumes = np.asarray(region_volumes, dtype=np.float64)
    if volumes.size == 0:
        raise ValueError("at least one region volume is required")
    if np.any(volumes < 0):
        raise ValueError("region volumes must be non-negative")
    return float(volumes.mean() / domain.volume)
