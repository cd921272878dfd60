"""Synthetic confidence landscapes evaluated one point at a time.

These are deliberately dependency-free scalar implementations of the same
analytic test functions the srf library ships in-process, so that running
them across the process boundary exercises the wire protocol end to end
while the values stay comparable to machine precision.

Every landscape maps a parameter vector u (length n) to a raw value; the
client side owns the (0, 1) clip policy. Gradients, where defined, refer
to the raw function.
"""

from __future__ import annotations

import math
from typing import Callable, Mapping, Sequence

Point = Sequence[float]
ValueFn = Callable[[Point], float]
GradFn = Callable[[Point], list[float]]

KINDS = (
    "constant",
    "ramp",
    "step_box",
    "smooth_plateau",
    "gaussian_bump",
    "trap_plateau",
)

_KNOWN_PARAMS: dict[str, set[str]] = {
    "constant": {"level"},
    "ramp": {"slope", "intercept"},
    "step_box": {"box_lo", "box_hi", "hi", "lo"},
    "smooth_plateau": {"box_lo", "box_hi", "hi", "lo", "sharpness"},
    "gaussian_bump": {"center", "width", "hi", "lo"},
    "trap_plateau": {
        "box_lo", "box_hi", "hi", "lo", "sharpness",
        "trap_center", "trap_width", "trap_depth",
    },
}


def _sigmoid(x: float) -> float:
    """Numerically stable logistic function."""
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    t = math.exp(x)
    return t / (1.0 + t)


def _level(params: Mapping[str, object], key: str, default: float) -> float:
    value = float(params.get(key, default))  # type: ignore[arg-type]
    if not 0.0 < value < 1.0:
        raise ValueError(f"{key} must lie in (0, 1), got {value}")
    return value


def _vector(
    params: Mapping[str, object], key: str, n: int, default: Sequence[float]
) -> list[float]:
    raw = params.get(key)
    if raw is None:
        return [float(x) for x in default]
    if isinstance(raw, (int, float)):
        values = [float(raw)]
    else:
        values = [float(x) for x in raw]  # type: ignore[union-attr]
    if len(values) == 1 and n > 1:
        values = values * n
    if len(values) != n:
        raise ValueError(f"{key} must have {n} entries, got {len(values)}")
    return values


def _box(
    params: Mapping[str, object], n: int, domain: Sequence[tuple[float, float]]
) -> tuple[list[float], list[float]]:
    box_lo = _vector(params, "box_lo", n, [2.0] * n)
    box_hi = _vector(params, "box_hi", n, [6.0] * n)
    if not all(h > l for l, h in zip(box_lo, box_hi)):
        raise ValueError("box must satisfy box_lo < box_hi componentwise")
    return box_lo, box_hi


def make_landscape(
    kind: str,
    n: int,
    domain: Sequence[tuple[float, float]],
    params: Mapping[str, object],
) -> tuple[ValueFn, GradFn | None]:
    """Build the value function and, where defined, the gradient function.

    Validation mirrors the client's builtin specs: the kind must be known,
    unknown parameters are rejected, and level-style parameters must stay
    inside (0, 1).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown landscape kind {kind!r}; choose from {KINDS}")
    if n < 1:
        raise ValueError(f"dimension must be at least 1, got {n}")
    if len(domain) != n:
        raise ValueError(f"domain has {len(domain)} axes but n = {n}")
    if not all(h > l for l, h in domain):
        raise ValueError("every domain axis must satisfy lo < hi")
    unknown = set(params) - _KNOWN_PARAMS[kind]
    if unknown:
        raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")

    if kind == "constant":
        level = _level(params, "level", 0.5)
        return (lambda u: level), (lambda u: [0.0] * n)

    if kind == "ramp":
        default_slope = [1.0 / (n * (h - l)) for l, h in domain]
        slope = _vector(params, "slope", n, default_slope)
        if "intercept" in params:
            intercept = float(params["intercept"])  # type: ignore[arg-type]
        elif "slope" in params:
            intercept = 0.0
        else:
            intercept = -sum(s * l for s, (l, _) in zip(slope, domain))

        def ramp_value(u: Point) -> float:
            return sum(s * x for s, x in zip(slope, u)) + intercept

        return ramp_value, (lambda u: list(slope))

    if kind == "step_box":
        box_lo, box_hi = _box(params, n, domain)
        hi = _level(params, "hi", 0.9)
        lo = _level(params, "lo", 0.1)

        def step_value(u: Point) -> float:
            inside = all(l <= x <= h for x, l, h in zip(u, box_lo, box_hi))
            return hi if inside else lo

        return step_value, None

    if kind == "smooth_plateau":
        box_lo, box_hi = _box(params, n, domain)
        hi = _level(params, "hi", 0.9)
        lo = _level(params, "lo", 0.1)
        sharpness = float(params.get("sharpness", 8.0))  # type: ignore[arg-type]
        if sharpness <= 0:
            raise ValueError(f"sharpness must be positive, got {sharpness}")

        def plateau_product(u: Point) -> tuple[float, list[float], list[float]]:
            rise = [_sigmoid(sharpness * (x - l)) for x, l in zip(u, box_lo)]
            fall = [_sigmoid(sharpness * (h - x)) for x, h in zip(u, box_hi)]
            product = 1.0
            for r, f in zip(rise, fall):
                product *= r * f
            return product, rise, fall

        def plateau_value(u: Point) -> float:
            product, _, _ = plateau_product(u)
            return lo + (hi - lo) * product

        def plateau_grad(u: Point) -> list[float]:
            product, rise, fall = plateau_product(u)
            coeff = (hi - lo) * product * sharpness
            return [coeff * (f - r) for r, f in zip(rise, fall)]

        return plateau_value, plateau_grad

    if kind == "gaussian_bump":
        mid = [0.5 * (l + h) for l, h in domain]
        center = _vector(params, "center", n, mid)
        width = float(params.get("width", 0.3))  # type: ignore[arg-type]
        if width <= 0:
            raise ValueError(f"width must be positive, got {width}")
        hi = _level(params, "hi", 0.9)
        lo = _level(params, "lo", 0.1)

        def bump_value(u: Point) -> float:
            d2 = sum((x - c) ** 2 for x, c in zip(u, center))
            return lo + (hi - lo) * math.exp(-d2 / (2.0 * width**2))

        def bump_grad(u: Point) -> list[float]:
            diff = [x - c for x, c in zip(u, center)]
            envelope = math.exp(-sum(d * d for d in diff) / (2.0 * width**2))
            coeff = (hi - lo) * envelope
            return [coeff * (-d / width**2) for d in diff]

        return bump_value, bump_grad

    # trap_plateau: a smooth plateau with a gaussian dip carved out of it
    box_lo, box_hi = _box(params, n, domain)
    hi = _level(params, "hi", 0.9)
    lo = _level(params, "lo", 0.1)
    sharpness = float(params.get("sharpness", 8.0))  # type: ignore[arg-type]
    if sharpness <= 0:
        raise ValueError(f"sharpness must be positive, got {sharpness}")
    trap_center = _vector(
        params, "trap_center", n,
        [0.5 * (l + h) for l, h in zip(box_lo, box_hi)],
    )
    trap_width = float(params.get("trap_width", 0.3))  # type: ignore[arg-type]
    if trap_width <= 0:
        raise ValueError(f"trap_width must be positive, got {trap_width}")
    trap_depth = float(params.get("trap_depth", 0.7))  # type: ignore[arg-type]
    if not 0.0 <= trap_depth < hi:
        raise ValueError(f"trap_depth must lie in [0, hi), got {trap_depth}")

    def trap_parts(u: Point) -> tuple[float, list[float], list[float], list[float], float]:
        rise = [_sigmoid(sharpness * (x - l)) for x, l in zip(u, box_lo)]
        fall = [_sigmoid(sharpness * (h - x)) for x, h in zip(u, box_hi)]
        product = 1.0
        for r, f in zip(rise, fall):
            product *= r * f
        diff = [x - c for x, c in zip(u, trap_center)]
        envelope = math.exp(-sum(d * d for d in diff) / (2.0 * trap_width**2))
        return product, rise, fall, diff, envelope

    def trap_value(u: Point) -> float:
        product, _, _, _, envelope = trap_parts(u)
        plateau = lo + (hi - lo) * product
        return plateau - trap_depth * envelope

    def trap_grad(u: Point) -> list[float]:
        product, rise, fall, diff, envelope = trap_parts(u)
        coeff = (hi - lo) * product * sharpness
        return [
            coeff * (f - r) + trap_depth * envelope * d / trap_width**2
            for r, f, d in zip(rise, fall, diff)
        ]

    return trap_value, trap_grad
