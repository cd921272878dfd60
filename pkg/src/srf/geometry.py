"""Axis-aligned boxes, binary corner masks, and volumes.

A region is the box D = {u : a <= u <= b} with side lengths r = b - a > 0.
Its 2^n corners are indexed by n-bit masks: corner i takes component k from
b where bit k of i is set and from a otherwise.  The mask matrix M collects
those bits column by column, so the corner matrix is

    D = 1 a^T + M^T (.) 1 r^T    (columnwise: d_i = a + m_i (.) r),

and the complement matrix is M-bar = 1 - M.  The normalized volume of a
region is (1 / 2^n) prod(r_i).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import numpy.typing as npt

from .errors import DimensionTooLargeError

FloatArray = npt.NDArray[np.float64]

MAX_DIMENSION = 20
"""Largest supported dimension; 2^20 corners is already a million calls."""


def _frozen_vector(x: object, name: str) -> FloatArray:
    """Validate and return a read-only float64 copy of a 1-D vector."""
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Region:
    """Axis-aligned hyper-rectangle [a, b] with positive side lengths.

    Attributes
    ----------
    a:
        Left bounds, one entry per dimension.
    b:
        Right bounds; ``b > a`` componentwise.
    """

    a: FloatArray
    b: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", _frozen_vector(self.a, "a"))
        object.__setattr__(self, "b", _frozen_vector(self.b, "b"))
        if self.a.shape != self.b.shape:
            raise ValueError(
                f"bound dimensions differ: a has {self.a.size}, b has {self.b.size}"
            )
        if not np.all(self.b > self.a):
            raise ValueError("region side lengths must be positive (b > a componentwise)")

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def r(self) -> FloatArray:
        """Side lengths b - a (always positive)."""
        return self.b - self.a

    @property
    def center(self) -> FloatArray:
        return 0.5 * (self.a + self.b)

    def contains(self, u: object) -> bool:
        """Whether u lies in [a, b] (bounds inclusive)."""
        point = np.asarray(u, dtype=np.float64)
        return bool(np.all(point >= self.a) and np.all(point <= self.b))


@dataclass(frozen=True, eq=False)
class Domain:
    """The study space Omega, a box [lo, hi] with lo < hi componentwise."""

    lo: FloatArray
    hi: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", _frozen_vector(self.lo, "lo"))
        object.__setattr__(self, "hi", _frozen_vector(self.hi, "hi"))
        if self.lo.shape != self.hi.shape:
            raise ValueError(
                f"bound dimensions differ: lo has {self.lo.size}, hi has {self.hi.size}"
            )
        if not np.all(self.hi > self.lo):
            raise ValueError("domain must satisfy lo < hi componentwise")

    @property
    def n(self) -> int:
        return self.lo.size

    @property
    def extent(self) -> FloatArray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        """Raw volume prod(hi - lo), no normalization."""
        return float(np.prod(self.extent))

    def contains(self, u: object, strict: bool = False) -> bool:
        point = np.asarray(u, dtype=np.float64)
        if strict:
            return bool(np.all(point > self.lo) and np.all(point < self.hi))
        return bool(np.all(point >= self.lo) and np.all(point <= self.hi))

    def contains_points(self, points: FloatArray) -> bool:
        """Whether every column of an n x m matrix lies inside the box."""
        return bool(
            np.all(points >= self.lo[:, None]) and np.all(points <= self.hi[:, None])
        )

    def clamp_points(self, points: FloatArray) -> FloatArray:
        """Columnwise clip of an n x m matrix into [lo, hi]."""
        return np.clip(points, self.lo[:, None], self.hi[:, None])

    def clamp_vector(self, u: FloatArray) -> FloatArray:
        return np.clip(u, self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """The n x 2^n bit matrix M and its complement.

    Column i is the n-bit binary encoding of i with row 0 holding the most
    significant bit, so column 0 is all zeros and the last column all ones.
    """

    m: FloatArray
    mbar: FloatArray

    @property
    def n(self) -> int:
        return self.m.shape[0]

    @property
    def corners(self) -> int:
        return self.m.shape[1]


@lru_cache(maxsize=None)
def mask_matrix(n: int) -> BinaryMask:
    """Binary mask matrix for dimension n.

    Parameters
    ----------
    n:
        Dimension, 1 <= n <= MAX_DIMENSION.

    Returns
    -------
    BinaryMask
        Cached, read-only M and M-bar of shape (n, 2^n).
    """
    if not isinstance(n, (int, np.integer)):
        raise TypeError(f"dimension must be an integer, got {type(n).__name__}")
    if n < 1:
        raise ValueError(f"dimension must be at least 1, got {n}")
    if n > MAX_DIMENSION:
        raise DimensionTooLargeError(
            f"dimension {n} exceeds the corner-enumeration cap {MAX_DIMENSION}"
        )
    indices = np.arange(2**n, dtype=np.uint32)
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint32)
    bits = ((indices[None, :] >> shifts[:, None]) & 1).astype(np.float64)
    complement = 1.0 - bits
    bits.setflags(write=False)
    complement.setflags(write=False)
    return BinaryMask(m=bits, mbar=complement)


def corner_matrix(reg: Region) -> FloatArray:
    """All 2^n corners of the region, one per column, in mask order.

    Component k of column i is exactly ``reg.b[k]`` where bit k of i is set
    and ``reg.a[k]`` otherwise, so column 0 is a and the last column is b
    with no floating-point drift.
    """
    mask = mask_matrix(reg.n)
    return np.where(mask.m > 0.5, reg.b[:, None], reg.a[:, None])


def outer_corner_matrix(reg: Region, alpha: float) -> FloatArray:
    """Corners of the region enlarged by the boundary factor alpha.

    The outer box spans [a - (alpha/2) r, b + (alpha/2) r], so its side
    lengths are (1 + alpha) r and alpha = 0 reproduces ``corner_matrix``
    exactly.
    """
    if alpha < 0:
        raise ValueError(f"boundary factor must be non-negative, got {alpha}")
    mask = mask_matrix(reg.n)
    margin = (alpha / 2.0) * reg.r
    outer_a = reg.a - margin
    outer_b = reg.b + margin
    return np.where(mask.m > 0.5, outer_b[:, None], outer_a[:, None])


def normalized_volume(reg: Region) -> float:
    """(1 / 2^n) prod(r_i), the volume unit shared by all update rules."""
    return float(np.prod(reg.r) / 2.0**reg.n)
