"""Bound-update rules and the fixed-step growth loop.

All four rules descend a loss whose decrease means "grow the box while it
only covers high-confidence space".  Writing M / M-bar for the corner mask
matrices, f_D / f_Q for inner / outer corner values, G_D for the corner
gradient matrix (rows grad f(d_i)), r for side lengths, and V for the
normalized volume (1/2^n) prod(r):

- naive (black box, penalty lambda):
    grad_a = 2 V diag(1/r) M-bar f_D - lambda r
    grad_b = -2 V diag(1/r) M f_D + lambda r
- outer-inner ratio, black box (boundary factor alpha, outer masks M_Q and
  M-bar_Q built from (1 + alpha)^(n-1) combinations):
    grad_a = 2 V diag(1/r) (2 M-bar f_D - M-bar_Q f_Q)
    grad_b = 2 V diag(1/r) (-2 M f_D + M_Q f_Q)
- outer-inner ratio, white box (emphasis beta, gamma_n = 2 - beta (2n - 1),
  face-sum vectors s built from cross-terms of G_D):
    grad_a = V (diag(1/r) (gamma_n M-bar - beta M) f_D
              + beta diagvec(M-bar G_D) + beta s_a)
    grad_b = V (-diag(1/r) (gamma_n M - beta M-bar) f_D
              + beta diagvec(M G_D) + beta s_b)
- trapezoid gradient (white box, penalty lambda):
    grad_a = V (-diagvec(M-bar G_D) + sum(f_D) / r) - lambda r
    grad_b = V (-diagvec(M G_D) - sum(f_D) / r) + lambda r

The growth loop initializes a small box around u0 and runs T fixed-step
descent iterations, clipping the bounds into the study domain after every
step; clipping is the containment mechanism, since on flat landscapes the
rules provably push the bounds outward forever.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import BetaOutOfRangeError, GradientUnsupportedError
from .geometry import (
    Domain,
    FloatArray,
    Region,
    corner_matrix,
    mask_matrix,
    normalized_volume,
    outer_corner_matrix,
)
from .oracles import FunctionOracle
from .quadrature import (
    CornerGradients,
    CornerValues,
    corner_gradients,
    corner_values,
    trapezoid_integral,
)

METHODS = ("naive", "oirb", "oirw", "trapgrad")

FLOOR_FRACTION = 1e-6
"""Default side-length floor as a fraction of the per-dimension extent."""

CONVERGENCE_TOL = 1e-9
CONVERGENCE_RUN = 10


def beta_limit(n: int) -> float:
    """Stability bound: beta must stay below 2 / (2n - 1)."""
    return 2.0 / (2 * n - 1)


def check_beta(beta: float, n: int) -> None:
    if not 0.0 <= beta < beta_limit(n):
        raise BetaOutOfRangeError(
            f"beta = {beta} is outside [0, {beta_limit(n)}) for dimension {n}"
        )


@dataclass(frozen=True)
class OptimizerParams:
    """Hyperparameters of the growth loop.

    Defaults follow the reference settings eta = 0.1, alpha = 0.05,
    beta = 0.0009, lam = 0.1, steps = 800.  ``floor`` of None means the
    per-dimension default FLOOR_FRACTION * (hi - lo).  ``early_stop``
    enables an optional convergence short-circuit that is off by default
    so runs always take exactly ``steps`` iterations.
    """

    eta: float = 0.1
    lam: float = 0.1
    alpha: float = 0.05
    beta: float = 0.0009
    steps: int = 800
    eps_init: float = 0.5
    floor: float | None = None
    early_stop: bool = False

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.steps < 1:
            raise ValueError(f"steps must be at least 1, got {self.steps}")
        if self.eps_init <= 0:
            raise ValueError(f"eps_init must be positive, got {self.eps_init}")
        if self.floor is not None and self.floor <= 0:
            raise ValueError(f"floor must be positive when set, got {self.floor}")


@dataclass(frozen=True, eq=False)
class StepRecord:
    """Bounds after step t, whether anything was clamped during the step,
    and a monitoring loss surrogate (None for the initial record)."""

    t: int
    a: FloatArray
    b: FloatArray
    clamped: bool
    loss: float | None = None


@dataclass(eq=False)
class GrowthTrace:
    """Full record of one growth run."""

    method: str
    params: OptimizerParams
    u0: FloatArray
    domain: Domain
    steps: list[StepRecord] = field(default_factory=list)
    final: Region | None = None
    forward: int = 0
    backward: int = 0

    def to_json_dict(self) -> dict[str, Any]:
        params = {
            "eta": self.params.eta,
            "lambda": self.params.lam,
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "steps": self.params.steps,
            "eps_init": self.params.eps_init,
            "floor": self.params.floor,
            "early_stop": self.params.early_stop,
        }
        assert self.final is not None
        return {
            "method": self.method,
            "params": params,
            "u0": [float(x) for x in self.u0],
            "domain": {
                "lo": [float(x) for x in self.domain.lo],
                "hi": [float(x) for x in self.domain.hi],
            },
            "final": {
                "a": [float(x) for x in self.final.a],
                "b": [float(x) for x in self.final.b],
            },
            "counters": {"forward": self.forward, "backward": self.backward},
            "steps": [
                {
                    "t": rec.t,
                    "a": [float(x) for x in rec.a],
                    "b": [float(x) for x in rec.b],
                    "clamped": rec.clamped,
                }
                for rec in self.steps
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "GrowthTrace":
        try:
            params = OptimizerParams(
                eta=float(doc["params"]["eta"]),
                lam=float(doc["params"]["lambda"]),
                alpha=float(doc["params"]["alpha"]),
                beta=float(doc["params"]["beta"]),
                steps=int(doc["params"]["steps"]),
                eps_init=float(doc["params"]["eps_init"]),
                floor=doc["params"]["floor"],
                early_stop=bool(doc["params"].get("early_stop", False)),
            )
            domain = Domain(np.array(doc["domain"]["lo"]), np.array(doc["domain"]["hi"]))
            trace = cls(
                method=str(doc["method"]),
                params=params,
                u0=np.array(doc["u0"], dtype=np.float64),
                domain=domain,
                final=Region(np.array(doc["final"]["a"]), np.array(doc["final"]["b"])),
                forward=int(doc["counters"]["forward"]),
                backward=int(doc["counters"]["backward"]),
            )
            trace.steps = [
                StepRecord(
                    t=int(rec["t"]),
                    a=np.array(rec["a"], dtype=np.float64),
                    b=np.array(rec["b"], dtype=np.float64),
                    clamped=bool(rec["clamped"]),
                )
                for rec in doc["steps"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed growth trace: {exc}") from exc
        return trace

    @classmethod
    def from_json(cls, text: str) -> "GrowthTrace":
        return cls.from_json_dict(json.loads(text))


def naive_step(vals: CornerValues, reg: Region, lam: float) -> tuple[FloatArray, FloatArray]:
    """Gradients of the penalized negative-integral loss at the bounds."""
    mask = mask_matrix(reg.n)
    vol = normalized_volume(reg)
    r = reg.r
    grad_a = 2.0 * vol * (mask.mbar @ vals.f_d) / r - lam * r
    grad_b = -2.0 * vol * (mask.m @ vals.f_d) / r + lam * r
    return grad_a, grad_b


def _outer_masks(mask_m: FloatArray, mask_mbar: FloatArray, alpha: float, n: int) -> tuple[FloatArray, FloatArray]:
    scale = (1.0 + alpha) ** (n - 1)
    m_q = scale * ((1.0 + alpha / 2.0) * mask_m + (alpha / 2.0) * mask_mbar)
    mbar_q = scale * ((1.0 + alpha / 2.0) * mask_mbar + (alpha / 2.0) * mask_m)
    return m_q, mbar_q


def oirb_step(vals: CornerValues, reg: Region, alpha: float) -> tuple[FloatArray, FloatArray]:
    """Black-box outer-inner step; needs outer corner values in vals.f_q."""
    if vals.f_q is None:
        raise ValueError("outer corner values f_q are required for the outer-inner rule")
    mask = mask_matrix(reg.n)
    m_q, mbar_q = _outer_masks(mask.m, mask.mbar, alpha, reg.n)
    vol = normalized_volume(reg)
    r = reg.r
    grad_a = 2.0 * vol * (2.0 * (mask.mbar @ vals.f_d) - mbar_q @ vals.f_q) / r
    grad_b = 2.0 * vol * (-2.0 * (mask.m @ vals.f_d) + m_q @ vals.f_q) / r
    return grad_a, grad_b


def _face_sums(
    mask_m: FloatArray, mask_mbar: FloatArray, g: FloatArray, r: FloatArray
) -> tuple[FloatArray, FloatArray]:
    """Cross-dimension gradient sums over the a-faces and b-faces.

    Component k sums r_i * (partial_i f) over corners of the face u_k = a_k
    (respectively u_k = b_k), signed by whether the corner sits at a_i or
    b_i in dimension i, divided by r_k.
    """
    # cross[c, i] = (mbar - m)[i, c] * G[c, i]
    cross = (mask_mbar - mask_m).T * g
    t_a = mask_mbar @ cross
    t_b = -(mask_m @ cross)
    s_a = (t_a @ r - np.diag(t_a) * r) / r
    s_b = (t_b @ r - np.diag(t_b) * r) / r
    return s_a, s_b


def oirw_step(
    vals: CornerValues, grads: CornerGradients, reg: Region, beta: float
) -> tuple[FloatArray, FloatArray]:
    """White-box outer-inner step in the shrinking-margin limit.

    At beta = 0 this collapses exactly to the unregularized naive step.
    """
    n = reg.n
    check_beta(beta, n)
    mask = mask_matrix(n)
    gamma = 2.0 - beta * (2 * n - 1)
    mbar_d = gamma * mask.mbar - beta * mask.m
    m_d = gamma * mask.m - beta * mask.mbar
    vol = normalized_volume(reg)
    r = reg.r
    g = grads.g
    diag_a = np.einsum("kc,ck->k", mask.mbar, g)
    diag_b = np.einsum("kc,ck->k", mask.m, g)
    s_a, s_b = _face_sums(mask.m, mask.mbar, g, r)
    grad_a = vol * ((mbar_d @ vals.f_d) / r + beta * diag_a + beta * s_a)
    grad_b = vol * (-(m_d @ vals.f_d) / r + beta * diag_b + beta * s_b)
    return grad_a, grad_b


def trapgrad_step(
    vals: CornerValues, grads: CornerGradients, reg: Region, lam: float
) -> tuple[FloatArray, FloatArray]:
    """Gradient of the trapezoid surrogate itself (white box)."""
    mask = mask_matrix(reg.n)
    vol = normalized_volume(reg)
    r = reg.r
    g = grads.g
    diag_a = np.einsum("kc,ck->k", mask.mbar, g)
    diag_b = np.einsum("kc,ck->k", mask.m, g)
    f_sum = float(vals.f_d.sum())
    grad_a = vol * (-diag_a + f_sum / r) - lam * r
    grad_b = vol * (-diag_b - f_sum / r) + lam * r
    return grad_a, grad_b


class _CountingOracle(FunctionOracle):
    """Delegating wrapper that counts forward and backward evaluations."""

    def __init__(self, inner: FunctionOracle) -> None:
        super().__init__(inner.n, inner.domain, inner.supports_grad, inner.name)
        self._inner = inner
        self.forward = 0
        self.backward = 0

    def f(self, u: object) -> float:
        self.forward += 1
        return self._inner.f(u)

    def f_many(self, pts: FloatArray) -> FloatArray:
        pts = np.asarray(pts, dtype=np.float64)
        self.forward += pts.shape[0]
        return self._inner.f_many(pts)

    def grad(self, u: object) -> FloatArray:
        self.backward += 1
        return self._inner.grad(u)

    def grad_many(self, pts: FloatArray) -> FloatArray:
        pts = np.asarray(pts, dtype=np.float64)
        self.backward += pts.shape[0]
        return self._inner.grad_many(pts)

    def _values(self, pts: FloatArray) -> FloatArray:  # pragma: no cover
        return self._inner.f_many(pts)

    def _grads(self, pts: FloatArray) -> FloatArray:  # pragma: no cover
        return self._inner.grad_many(pts)


def _resolve_floor(params: OptimizerParams, domain: Domain) -> FloatArray:
    if params.floor is not None:
        floor = np.full(domain.n, float(params.floor))
    else:
        floor = FLOOR_FRACTION * domain.extent
    if np.any(floor >= domain.extent):
        raise ValueError("floor must be smaller than the domain extent")
    return floor


def _repair_bounds(
    a: FloatArray, b: FloatArray, floor: FloatArray, domain: Domain
) -> tuple[FloatArray, FloatArray, bool]:
    """Clip bounds into the domain and restore the side-length floor.

    Too-short (or crossed) sides are re-expanded symmetrically about the
    center, then shifted back inside the domain if the expansion poked out.
    Returns the repaired bounds and whether the domain clip changed them.
    """
    a2 = domain.clamp_vector(a)
    b2 = domain.clamp_vector(b)
    clamped = bool(np.any(a2 != a) or np.any(b2 != b))
    short = (b2 - a2) < floor
    if np.any(short):
        center = 0.5 * (a2 + b2)
        a2 = np.where(short, center - 0.5 * floor, a2)
        b2 = np.where(short, center + 0.5 * floor, b2)
        shift_up = np.maximum(domain.lo - a2, 0.0)
        shift_down = np.maximum(b2 - domain.hi, 0.0)
        a2 = a2 + shift_up - shift_down
        b2 = b2 + shift_up - shift_down
    return a2, b2, clamped


def grow_region(
    oracle: FunctionOracle,
    u0: FloatArray,
    method: str,
    params: OptimizerParams,
    domain: Domain,
) -> GrowthTrace:
    """Run T fixed-step descent iterations from a small box around u0.

    Each iteration evaluates the corners of the current box, applies the
    method's update rule, steps the bounds by -eta * gradient, clips them
    into the domain, and restores the side-length floor.  The trace records
    the bounds after every step together with a clamped flag covering both
    the bound clip and any outer-corner clamping during evaluation.  Runs
    are deterministic given identical oracle responses.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.shape != (domain.n,):
        raise ValueError(f"u0 must have dimension {domain.n}, got shape {u0.shape}")
    if oracle.n != domain.n:
        raise ValueError(f"oracle dimension {oracle.n} does not match domain {domain.n}")
    if not domain.contains(u0, strict=True):
        raise ValueError("u0 must lie strictly inside the domain")
    if not (
        np.all(domain.lo >= oracle.domain.lo) and np.all(domain.hi <= oracle.domain.hi)
    ):
        raise ValueError("the study domain must lie inside the oracle's declared domain")
    if method == "oirw":
        check_beta(params.beta, domain.n)
    if method in ("oirw", "trapgrad") and not oracle.supports_grad:
        raise GradientUnsupportedError(
            f"method {method!r} needs gradients but oracle {oracle.name!r} has none"
        )

    counting = _CountingOracle(oracle)
    floor = _resolve_floor(params, domain)
    a = domain.clamp_vector(u0 - params.eps_init)
    b = domain.clamp_vector(u0 + params.eps_init)
    init_clamped = bool(np.any(a != u0 - params.eps_init) or np.any(b != u0 + params.eps_init))
    a, b, _ = _repair_bounds(a, b, floor, domain)

    trace = GrowthTrace(method=method, params=params, u0=u0.copy(), domain=domain)
    trace.steps.append(StepRecord(t=0, a=a.copy(), b=b.copy(), clamped=init_clamped))

    still_streak = 0
    for t in range(1, params.steps + 1):
        reg = Region(a, b)
        corners = corner_matrix(reg)
        vals = corner_values(counting, corners)
        step_clamped = False

        if method == "naive":
            grad_a, grad_b = naive_step(vals, reg, params.lam)
        elif method == "oirb":
            outer = outer_corner_matrix(reg, params.alpha)
            if not domain.contains_points(outer):
                step_clamped = True
                outer = domain.clamp_points(outer)
            outer_vals = corner_values(counting, outer)
            both = CornerValues(f_d=vals.f_d, f_q=outer_vals.f_d)
            grad_a, grad_b = oirb_step(both, reg, params.alpha)
        else:
            grads = corner_gradients(counting, corners)
            if method == "oirw":
                grad_a, grad_b = oirw_step(vals, grads, reg, params.beta)
            else:
                grad_a, grad_b = trapgrad_step(vals, grads, reg, params.lam)

        loss = -trapezoid_integral(vals, reg)
        if method in ("naive", "trapgrad"):
            loss += 0.5 * params.lam * float(reg.r @ reg.r)

        new_a = a - params.eta * grad_a
        new_b = b - params.eta * grad_b
        new_a, new_b, bound_clamped = _repair_bounds(new_a, new_b, floor, domain)
        step_clamped = step_clamped or bound_clamped

        moved = float(np.abs(new_a - a).sum() + np.abs(new_b - b).sum())
        a, b = new_a, new_b
        trace.steps.append(StepRecord(t=t, a=a.copy(), b=b.copy(), clamped=step_clamped, loss=loss))

        if params.early_stop:
            still_streak = still_streak + 1 if moved < CONVERGENCE_TOL else 0
            if still_streak >= CONVERGENCE_RUN:
                break

    trace.final = Region(a, b)
    trace.forward = counting.forward
    trace.backward = counting.backward
    return trace
