"""Corner-based trapezoid integrals plus an independent midpoint check.

With corner values f_D the trapezoid estimate of the integral over a region
is

    integral(f) ~= (1 / 2^n) prod(r_i) * sum(f_D),

exact for multilinear integrands (degree at most one per variable).  The
midpoint rule over a uniform grid serves as a verification oracle that
shares no formula with the trapezoid path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, EvaluatorError
from .geometry import FloatArray, Region, normalized_volume
from .oracles import FunctionOracle

BRUTE_FORCE_BUDGET = 10_000_000
"""Hard cap on pts_per_dim ** n for the midpoint oracle."""

_CHUNK = 65_536


@dataclass(frozen=True, eq=False)
class CornerValues:
    """Function values at the inner corners and optionally outer corners.

    Attributes
    ----------
    f_d:
        Values at the 2^n corners of the region, in mask-column order.
    f_q:
        Values at the 2^n corners of the enlarged outer box, present only
        for the outer-inner black-box rule.
    """

    f_d: FloatArray
    f_q: FloatArray | None = None

    def __post_init__(self) -> None:
        f_d = np.asarray(self.f_d, dtype=np.float64)
        object.__setattr__(self, "f_d", f_d)
        if f_d.ndim != 1 or f_d.size < 2:
            raise ValueError(f"f_d must hold at least 2 corner values, got shape {f_d.shape}")
        if self.f_q is not None:
            f_q = np.asarray(self.f_q, dtype=np.float64)
            object.__setattr__(self, "f_q", f_q)
            if f_q.shape != f_d.shape:
                raise ValueError(
                    f"outer corner count {f_q.shape} does not match inner {f_d.shape}"
                )


@dataclass(frozen=True, eq=False)
class CornerGradients:
    """Gradients at the corners: row i of g is grad f at corner i."""

    g: FloatArray

    def __post_init__(self) -> None:
        g = np.asarray(self.g, dtype=np.float64)
        object.__setattr__(self, "g", g)
        if g.ndim != 2:
            raise ValueError(f"gradient matrix must be 2-D, got shape {g.shape}")


def corner_values(oracle: FunctionOracle, corners: FloatArray) -> CornerValues:
    """Evaluate the oracle at every corner column, in column order.

    Corners outside the oracle's domain are clamped onto it before
    evaluation; use ``oracle.domain.contains_points`` beforehand when the
    caller needs to know whether clamping occurred.
    """
    clamped = oracle.domain.clamp_points(np.asarray(corners, dtype=np.float64))
    values = np.empty(clamped.shape[1], dtype=np.float64)
    for i in range(clamped.shape[1]):
        try:
            values[i] = oracle.f(clamped[:, i])
        except EvaluatorError as exc:
            raise EvaluatorError(f"corner {i}: {exc}") from exc
    return CornerValues(f_d=values)


def corner_gradients(oracle: FunctionOracle, corners: FloatArray) -> CornerGradients:
    """Evaluate grad f at every corner column; rows follow column order."""
    clamped = oracle.domain.clamp_points(np.asarray(corners, dtype=np.float64))
    rows = np.empty((clamped.shape[1], clamped.shape[0]), dtype=np.float64)
    for i in range(clamped.shape[1]):
        try:
            rows[i] = oracle.grad(clamped[:, i])
        except EvaluatorError as exc:
            raise EvaluatorError(f"corner {i}: {exc}") from exc
    return CornerGradients(g=rows)


def trapezoid_integral(vals: CornerValues, reg: Region) -> float:
    """Trapezoid estimate (1/2^n) prod(r) sum(f_D) over the region."""
    expected = 2**reg.n
    if vals.f_d.size != expected:
        raise ValueError(
            f"corner count {vals.f_d.size} does not match 2^{reg.n} = {expected}"
        )
    return normalized_volume(reg) * float(vals.f_d.sum())


def brute_force_integral(oracle: FunctionOracle, reg: Region, pts_per_dim: int) -> float:
    """Midpoint-rule Riemann sum over a uniform grid inside the region.

    Converges to the true integral as pts_per_dim grows for continuous f,
    and is exact for multilinear integrands; used to verify the trapezoid
    path and every update formula derived from it.
    """
    if pts_per_dim < 2:
        raise ValueError(f"pts_per_dim must be at least 2, got {pts_per_dim}")
    n = reg.n
    total_pts = pts_per_dim**n
    if total_pts > BRUTE_FORCE_BUDGET:
        raise BudgetExceededError(
            f"{pts_per_dim}^{n} = {total_pts} exceeds the {BRUTE_FORCE_BUDGET} point budget"
        )
    h = reg.r / pts_per_dim
    midpoints = [reg.a[k] + (np.arange(pts_per_dim) + 0.5) * h[k] for k in range(n)]
    dims = (pts_per_dim,) * n
    acc = 0.0
    for start in range(0, total_pts, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total_pts))
        grid_idx = np.unravel_index(flat, dims)
        pts = np.column_stack([midpoints[k][grid_idx[k]] for k in range(n)])
        acc += float(oracle.f_many(pts).sum())
    return acc * float(np.prod(h))
