"""Scalar test functions and the process boundary for external evaluators.

Every oracle maps a point u in its domain to a confidence value in the open
interval (0, 1).  Raw values are clipped to [CLIP, 1 - CLIP] on the way out
so that saturating evaluators cannot produce exact 0 or 1; gradients refer
to the unclipped function.

Builtin landscapes cover the shapes the optimizers are exercised on: flat
levels, linear ramps, a hard step box, its smooth sigmoid counterpart, a
gaussian bump, and a plateau with a low-confidence trap inside it.  Any
other evaluator attaches through a newline-delimited JSON protocol over a
child process's standard input and output; see ``external_oracle``.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import EvaluatorError, GradientUnsupportedError, ProtocolError
from .geometry import Domain, FloatArray

CLIP = 1e-9
"""Half-width of the clip band keeping oracle outputs inside (0, 1)."""

HANDSHAKE_TIMEOUT = 30.0
"""Default seconds to wait for an external evaluator's ready line."""

BUILTIN_KINDS = (
    "constant",
    "ramp",
    "step_box",
    "smooth_plateau",
    "gaussian_bump",
    "trap_plateau",
)


class FunctionOracle(ABC):
    """Evaluator of f(u) in (0, 1) and, when supported, grad f(u).

    Subclasses implement ``_values`` over a batch of points (rows) and may
    implement ``_grads``; the public methods apply the clip policy and the
    gradient-capability gate.
    """

    def __init__(self, n: int, domain: Domain, supports_grad: bool, name: str) -> None:
        if domain.n != n:
            raise ValueError(f"domain dimension {domain.n} does not match n = {n}")
        self._n = int(n)
        self._domain = domain
        self._supports_grad = bool(supports_grad)
        self._name = name

    @property
    def n(self) -> int:
        return self._n

    @property
    def domain(self) -> Domain:
        return self._domain

    @property
    def supports_grad(self) -> bool:
        return self._supports_grad

    @property
    def name(self) -> str:
        return self._name

    def f(self, u: Sequence[float] | FloatArray) -> float:
        """Clipped scalar value at one point."""
        point = self._check_point(u)
        raw = float(self._values(point[None, :])[0])
        return min(max(raw, CLIP), 1.0 - CLIP)

    def f_many(self, pts: FloatArray) -> FloatArray:
        """Clipped values for an (m, n) array of points, order preserved."""
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self._n:
            raise ValueError(f"expected an (m, {self._n}) point array, got shape {pts.shape}")
        return np.clip(self._values(pts), CLIP, 1.0 - CLIP)

    def grad(self, u: Sequence[float] | FloatArray) -> FloatArray:
        """Gradient of the unclipped function at one point."""
        if not self._supports_grad:
            raise GradientUnsupportedError(f"oracle {self._name!r} does not supply gradients")
        point = self._check_point(u)
        return self._grads(point[None, :])[0].copy()

    def grad_many(self, pts: FloatArray) -> FloatArray:
        if not self._supports_grad:
            raise GradientUnsupportedError(f"oracle {self._name!r} does not supply gradients")
        pts = np.asarray(pts, dtype=np.float64)
        return self._grads(pts)

    def _check_point(self, u: Sequence[float] | FloatArray) -> FloatArray:
        point = np.asarray(u, dtype=np.float64)
        if point.shape != (self._n,):
            raise ValueError(f"expected a point of dimension {self._n}, got shape {point.shape}")
        return point

    @abstractmethod
    def _values(self, pts: FloatArray) -> FloatArray:
        """Raw (unclipped) values for an (m, n) batch."""

    def _grads(self, pts: FloatArray) -> FloatArray:
        raise GradientUnsupportedError(f"oracle {self._name!r} does not supply gradients")


class CallableOracle(FunctionOracle):
    """Oracle wrapping plain vectorized callables.

    ``fn`` maps an (m, n) array to m values; ``grad_fn``, when given, maps
    it to an (m, n) array of gradients.
    """

    def __init__(
        self,
        n: int,
        domain: Domain,
        fn: Callable[[FloatArray], FloatArray],
        grad_fn: Callable[[FloatArray], FloatArray] | None = None,
        name: str = "callable",
    ) -> None:
        super().__init__(n, domain, supports_grad=grad_fn is not None, name=name)
        self._fn = fn
        self._grad_fn = grad_fn

    def _values(self, pts: FloatArray) -> FloatArray:
        return np.asarray(self._fn(pts), dtype=np.float64)

    def _grads(self, pts: FloatArray) -> FloatArray:
        if self._grad_fn is None:
            raise GradientUnsupportedError(f"oracle {self._name!r} does not supply gradients")
        return np.asarray(self._grad_fn(pts), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class BuiltinSpec:
    """Configuration of an analytic landscape.

    Attributes
    ----------
    kind:
        One of BUILTIN_KINDS.
    n:
        Dimension of the parameter space.
    domain:
        Declared study space; defaults to [0, 10]^n.
    params:
        Kind-specific parameters; missing keys take the defaults documented
        in ``make_builtin``.
    """

    kind: str
    n: int = 2
    domain: Domain | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in BUILTIN_KINDS:
            raise ValueError(f"unknown builtin kind {self.kind!r}; choose from {BUILTIN_KINDS}")
        if self.n < 1:
            raise ValueError(f"dimension must be at least 1, got {self.n}")
        if self.domain is not None and self.domain.n != self.n:
            raise ValueError(
                f"domain dimension {self.domain.n} does not match n = {self.n}"
            )


def _level(params: Mapping[str, Any], key: str, default: float) -> float:
    value = float(params.get(key, default))
    if not 0.0 < value < 1.0:
        raise ValueError(f"{key} must lie in (0, 1), got {value}")
    return value


def _vector_param(params: Mapping[str, Any], key: str, n: int, default: FloatArray) -> FloatArray:
    raw = params.get(key)
    if raw is None:
        return np.asarray(default, dtype=np.float64)
    vec = np.atleast_1d(np.asarray(raw, dtype=np.float64))
    if vec.size == 1 and n > 1:
        vec = np.full(n, vec[0])
    if vec.shape != (n,):
        raise ValueError(f"{key} must have {n} entries, got shape {vec.shape}")
    return vec


def _box_param(params: Mapping[str, Any], n: int, domain: Domain) -> tuple[FloatArray, FloatArray]:
    default_lo = np.full(n, 2.0)
    default_hi = np.full(n, 6.0)
    box_lo = _vector_param(params, "box_lo", n, default_lo)
    box_hi = _vector_param(params, "box_hi", n, default_hi)
    if not np.all(box_hi > box_lo):
        raise ValueError("box must satisfy box_lo < box_hi componentwise")
    return box_lo, box_hi


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


def make_builtin(spec: BuiltinSpec) -> FunctionOracle:
    """Build an analytic oracle from a spec.

    Parameter defaults per kind:

    - constant: level = 0.5
    - ramp: slope (per-dim; default gives the normalized diagonal ramp
      mean_k (u_k - lo_k) / (hi_k - lo_k)), intercept
    - step_box: box_lo/box_hi = [2, 6]^n, hi = 0.9, lo = 0.1 (no gradients)
    - smooth_plateau: step_box params plus sharpness = 8 (sigmoid product)
    - gaussian_bump: center = domain midpoint, width = 0.3, hi = 0.9,
      lo = 0.1
    - trap_plateau: smooth_plateau params plus trap_center = box midpoint,
      trap_width = 0.3, trap_depth = 0.7
    """
    n = spec.n
    domain = spec.domain if spec.domain is not None else Domain(np.zeros(n), np.full(n, 10.0))
    params = dict(spec.params)
    unknown = set(params) - _KNOWN_PARAMS[spec.kind]
    if unknown:
        raise ValueError(f"unknown parameters for {spec.kind}: {sorted(unknown)}")
    name = f"builtin:{spec.kind}"

    if spec.kind == "constant":
        level = _level(params, "level", 0.5)

        def const_values(pts: FloatArray) -> FloatArray:
            return np.full(pts.shape[0], level)

        def const_grads(pts: FloatArray) -> FloatArray:
            return np.zeros_like(pts)

        return CallableOracle(n, domain, const_values, const_grads, name)

    if spec.kind == "ramp":
        default_slope = 1.0 / (n * domain.extent)
        slope = _vector_param(params, "slope", n, default_slope)
        if "intercept" in params:
            intercept = float(params["intercept"])
        elif "slope" in params:
            intercept = 0.0
        else:
            intercept = -float(slope @ domain.lo)

        def ramp_values(pts: FloatArray) -> FloatArray:
            return pts @ slope + intercept

        def ramp_grads(pts: FloatArray) -> FloatArray:
            return np.tile(slope, (pts.shape[0], 1))

        return CallableOracle(n, domain, ramp_values, ramp_grads, name)

    if spec.kind == "step_box":
        box_lo, box_hi = _box_param(params, n, domain)
        hi = _level(params, "hi", 0.9)
        lo = _level(params, "lo", 0.1)

        def step_values(pts: FloatArray) -> FloatArray:
            inside = np.all((pts >= box_lo) & (pts <= box_hi), axis=1)
            return np.where(inside, hi, lo)

        return CallableOracle(n, domain, step_values, None, name)

    if spec.kind == "smooth_plateau":
        box_lo, box_hi = _box_param(params, n, domain)
        hi = _level(params, "hi", 0.9)
        lo = _level(params, "lo", 0.1)
        sharpness = float(params.get("sharpness", 8.0))
        if sharpness <= 0:
            raise ValueError(f"sharpness must be positive, got {sharpness}")

        def plateau_values(pts: FloatArray) -> FloatArray:
            rise = expit(sharpness * (pts - box_lo))
            fall = expit(sharpness * (box_hi - pts))
            return lo + (hi - lo) * np.prod(rise * fall, axis=1)

        def plateau_grads(pts: FloatArray) -> FloatArray:
            rise = expit(sharpness * (pts - box_lo))
            fall = expit(sharpness * (box_hi - pts))
            product = np.prod(rise * fall, axis=1)
            return (hi - lo) * product[:, None] * sharpness * (fall - rise)

        return CallableOracle(n, domain, plateau_values, plateau_grads, name)

    if spec.kind == "gaussian_bump":
        center = _vector_param(params, "center", n, 0.5 * (domain.lo + domain.hi))
        width = float(params.get("width", 0.3))
        if width <= 0:
            raise ValueError(f"width must be positive, got {width}")
        hi = _level(params, "hi", 0.9)
        lo = _level(params, "lo", 0.1)

        def bump_values(pts: FloatArray) -> FloatArray:
            d2 = ((pts - center) ** 2).sum(axis=1)
            return lo + (hi - lo) * np.exp(-d2 / (2.0 * width**2))

        def bump_grads(pts: FloatArray) -> FloatArray:
            diff = pts - center
            envelope = np.exp(-(diff**2).sum(axis=1) / (2.0 * width**2))
            return (hi - lo) * envelope[:, None] * (-diff / width**2)

        return CallableOracle(n, domain, bump_values, bump_grads, name)

    # trap_plateau: a smooth plateau with a gaussian dip carved out of it.
    box_lo, box_hi = _box_param(params, n, domain)
    hi = _level(params, "hi", 0.9)
    lo = _level(params, "lo", 0.1)
    sharpness = float(params.get("sharpness", 8.0))
    if sharpness <= 0:
        raise ValueError(f"sharpness must be positive, got {sharpness}")
    trap_center = _vector_param(params, "trap_center", n, 0.5 * (box_lo + box_hi))
    trap_width = float(params.get("trap_width", 0.3))
    if trap_width <= 0:
        raise ValueError(f"trap_width must be positive, got {trap_width}")
    trap_depth = float(params.get("trap_depth", 0.7))
    if not 0.0 <= trap_depth < hi:
        raise ValueError(f"trap_depth must lie in [0, hi), got {trap_depth}")

    def trap_values(pts: FloatArray) -> FloatArray:
        rise = expit(sharpness * (pts - box_lo))
        fall = expit(sharpness * (box_hi - pts))
        plateau = lo + (hi - lo) * np.prod(rise * fall, axis=1)
        d2 = ((pts - trap_center) ** 2).sum(axis=1)
        return plateau - trap_depth * np.exp(-d2 / (2.0 * trap_width**2))

    def trap_grads(pts: FloatArray) -> FloatArray:
        rise = expit(sharpness * (pts - box_lo))
        fall = expit(sharpness * (box_hi - pts))
        product = np.prod(rise * fall, axis=1)
        plateau_grad = (hi - lo) * product[:, None] * sharpness * (fall - rise)
        diff = pts - trap_center
        envelope = np.exp(-(diff**2).sum(axis=1) / (2.0 * trap_width**2))
        return plateau_grad + trap_depth * envelope[:, None] * diff / trap_width**2

    return CallableOracle(n, domain, trap_values, trap_grads, name)


class _AdversarialOracle(FunctionOracle):
    """Complement wrapper computing 1 - f (and -grad f when supported)."""

    def __init__(self, inner: FunctionOracle) -> None:
        super().__init__(
            inner.n, inner.domain, inner.supports_grad, f"adversarial({inner.name})"
        )
        self._inner = inner

    def _values(self, pts: FloatArray) -> FloatArray:
        return 1.0 - self._inner.f_many(pts)

    def _grads(self, pts: FloatArray) -> FloatArray:
        return -self._inner.grad_many(pts)


def adversarial_wrapper(oracle: FunctionOracle) -> FunctionOracle:
    """Oracle for the dual problem: robust regions of 1 - f are adversarial
    regions of f.  Wrapping twice restores the original values up to the
    rounding of 1 - (1 - x)."""
    return _AdversarialOracle(oracle)


class ExternalOracle(FunctionOracle):
    """Client side of the newline-delimited JSON evaluator protocol.

    The child process speaks one JSON object per line over stdio:

    - handshake (server -> client, first line):
      ``{"op": "ready", "n": <int>, "grad": <bool>, "domain": [[lo, hi], ...]}``
    - request (client -> server):
      ``{"id": <int>, "op": "eval", "u": [<float>, ...], "grad": <bool>}``
    - response (server -> client):
      ``{"id": <int>, "f": <float>, "grad": [<float>, ...] | null}`` or
      ``{"id": <int>, "error": "<message>"}``
    - shutdown (client -> server): ``{"op": "bye"}`` and stdin closes.

    Exactly one request is in flight at a time and responses must carry the
    request's id; anything else is a protocol error.  Out-of-range f values
    are clipped and counted in ``clip_warnings``.
    """

    def __init__(
        self,
        command: str,
        args: Sequence[str] = (),
        handshake_timeout: float = HANDSHAKE_TIMEOUT,
        eval_timeout: float = 60.0,
    ) -> None:
        self._eval_timeout = eval_timeout
        self._next_id = 0
        self.clip_warnings = 0
        self._closed = False
        try:
            self._proc = subprocess.Popen(
                [command, *args],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise EvaluatorError(f"could not spawn evaluator {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump_lines, daemon=True)
        self._reader.start()
        try:
            ready = self._read_json(handshake_timeout, "handshake")
        except EvaluatorError:
            self._kill()
            raise
        n, domain, grad = self._parse_ready(ready)
        super().__init__(n, domain, supports_grad=grad, name=f"exec:{command}")

    @staticmethod
    def _parse_ready(ready: dict[str, Any]) -> tuple[int, Domain, bool]:
        if ready.get("op") != "ready":
            raise ProtocolError(f"expected a ready handshake, got {ready!r}")
        try:
            n = int(ready["n"])
            grad = bool(ready["grad"])
            pairs = [(float(lo), float(hi)) for lo, hi in ready["domain"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed handshake {ready!r}") from exc
        if len(pairs) != n or n < 1:
            raise ProtocolError(f"handshake domain does not match n = {n}")
        lo = np.array([p[0] for p in pairs])
        hi = np.array([p[1] for p in pairs])
        return n, Domain(lo, hi), grad

    def _pump_lines(self) -> None:
        stdout = self._proc.stdout
        assert stdout is not None
        for line in stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _read_json(self, timeout: float, what: str) -> dict[str, Any]:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise EvaluatorError(f"evaluator produced no {what} within {timeout} s") from None
        if line is None:
            raise EvaluatorError(f"evaluator exited before sending a {what}")
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"evaluator sent invalid JSON for {what}: {line!r}") from exc
        if not isinstance(doc, dict):
            raise ProtocolError(f"evaluator sent a non-object for {what}: {line!r}")
        return doc

    def _roundtrip(self, u: FloatArray, want_grad: bool) -> dict[str, Any]:
        if self._closed:
            raise EvaluatorError("evaluator connection is closed")
        request_id = self._next_id
        self._next_id += 1
        request = {
            "id": request_id,
            "op": "eval",
            "u": [float(x) for x in u],
            "grad": want_grad,
        }
        stdin = self._proc.stdin
        assert stdin is not None
        try:
            stdin.write(json.dumps(request) + "\n")
            stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EvaluatorError(f"evaluator pipe closed while sending: {exc}") from exc
        response = self._read_json(self._eval_timeout, f"response to request {request_id}")
        if response.get("id") != request_id:
            raise ProtocolError(
                f"out-of-order response: expected id {request_id}, got {response.get('id')!r}"
            )
        if "error" in response:
            raise EvaluatorError(f"evaluator error for request {request_id}: {response['error']}")
        return response

    def _eval_value(self, u: FloatArray) -> float:
        response = self._roundtrip(u, want_grad=False)
        try:
            raw = float(response["f"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed response {response!r}") from exc
        if not math.isfinite(raw):
            raise ProtocolError(f"evaluator returned a non-finite value {raw!r}")
        if raw < CLIP or raw > 1.0 - CLIP:
            self.clip_warnings += 1
        return raw

    def _values(self, pts: FloatArray) -> FloatArray:
        return np.array([self._eval_value(pts[i]) for i in range(pts.shape[0])])

    def _grads(self, pts: FloatArray) -> FloatArray:
        rows = np.empty_like(pts)
        for i in range(pts.shape[0]):
            response = self._roundtrip(pts[i], want_grad=True)
            grad = response.get("grad")
            if not isinstance(grad, list) or len(grad) != self.n:
                raise ProtocolError(f"malformed gradient in response {response!r}")
            rows[i] = [float(g) for g in grad]
        return rows

    def close(self) -> None:
        """Send the shutdown line and reap the child process."""
        if self._closed:
            return
        self._closed = True
        stdin = self._proc.stdin
        try:
            if stdin is not None:
                stdin.write(json.dumps({"op": "bye"}) + "\n")
                stdin.flush()
                stdin.close()
        except (BrokenPipeError, OSError):
            pass
        try:
            self._proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self._kill()

    def _kill(self) -> None:
        self._closed = True
        self._proc.kill()
        self._proc.wait()

    def __enter__(self) -> "ExternalOracle":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def __del__(self) -> None:
        try:
            if not self._closed and self._proc.poll() is None:
                self._kill()
        except Exception:
            pass


def external_oracle(
    command: str,
    args: Sequence[str] = (),
    handshake_timeout: float = HANDSHAKE_TIMEOUT,
) -> ExternalOracle:
    """Spawn an evaluator process and return the oracle speaking to it."""
    return ExternalOracle(command, args, handshake_timeout=handshake_timeout)
