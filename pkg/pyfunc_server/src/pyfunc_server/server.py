"""Newline-delimited JSON evaluation server over stdin/stdout.

The process announces itself with a ready line, then answers one request
at a time, in order:

    {"op": "ready", "n": 2, "grad": true, "domain": [[0.0, 10.0], [0.0, 10.0]]}
    {"id": 0, "op": "eval", "u": [4.0, 4.0], "grad": false}   (stdin)
    {"id": 0, "f": 0.9, "grad": null}                          (stdout)
    {"op": "bye"}                                              (stdin)

Malformed requests produce an error response carrying the request's id
(or null when no id could be read) and the server keeps serving; only
"bye" or end of input shuts it down.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

from . import hook
from .landscapes import KINDS, GradFn, ValueFn, make_landscape


@dataclass(frozen=True)
class ServerConfig:
    """A validated description of what the server evaluates.

    ``kind`` is one of the synthetic landscapes or "hook" for the
    user-attached pipeline; ``params`` are landscape parameters; ``grad``
    declares whether gradient requests will be honored.
    """

    kind: str
    n: int = 2
    domain: tuple[tuple[float, float], ...] = ()
    params: Mapping[str, object] = field(default_factory=dict)
    grad: bool = True

    def resolve(self) -> tuple[ValueFn, GradFn | None, tuple[tuple[float, float], ...]]:
        domain = self.domain or tuple((0.0, 10.0) for _ in range(self.n))
        if self.kind == "hook":
            if self.params:
                raise ValueError("the hook kind takes no landscape parameters")
            if len(domain) != self.n or not all(h > l for l, h in domain):
                raise ValueError("domain must list n axes with lo < hi")
            grad_fn = None
            if hook.predict_grad is not None:
                grad_fn = lambda u: [float(g) for g in hook.predict_grad(u)]
            return (lambda u: float(hook.predict(u))), grad_fn, domain
        value_fn, grad_fn = make_landscape(self.kind, self.n, domain, self.params)
        return value_fn, grad_fn, domain


class RequestHandler:
    """Validates requests and produces response lines for one config."""

    def __init__(self, config: ServerConfig) -> None:
        value_fn, grad_fn, domain = config.resolve()
        self._value_fn = value_fn
        self._grad_fn = grad_fn if config.grad else None
        self.n = config.n
        self.domain = domain

    @property
    def supports_grad(self) -> bool:
        return self._grad_fn is not None

    def ready_line(self) -> str:
        return json.dumps({
            "op": "ready",
            "n": self.n,
            "grad": self.supports_grad,
            "domain": [[lo, hi] for lo, hi in self.domain],
        })

    def handle_line(self, line: str) -> tuple[str | None, bool]:
        """Return (response line or None, keep serving)."""
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            return self._error(None, "invalid JSON"), True
        if not isinstance(doc, dict):
            return self._error(None, "request must be a JSON object"), True
        if doc.get("op") == "bye":
            return None, False
        request_id = doc.get("id")
        if doc.get("op") != "eval":
            return self._error(request_id, f"unsupported op {doc.get('op')!r}"), True
        if request_id is None:
            return self._error(None, "missing id"), True
        return self._evaluate(request_id, doc), True

    def _evaluate(self, request_id: object, doc: dict[str, object]) -> str:
        u = doc.get("u")
        if not isinstance(u, list):
            return self._error(request_id, "missing u")
        if len(u) != self.n:
            return self._error(request_id, "dimension mismatch")
        try:
            point = [float(x) for x in u]
        except (TypeError, ValueError):
            return self._error(request_id, "u must be a list of numbers")
        if not all(math.isfinite(x) for x in point):
            return self._error(request_id, "u must be finite")
        want_grad = bool(doc.get("grad", False))
        if want_grad and self._grad_fn is None:
            return self._error(request_id, "gradient not supported")
        try:
            value = self._value_fn(point)
            grad = self._grad_fn(point) if want_grad else None
        except Exception as exc:
            return self._error(request_id, str(exc) or type(exc).__name__)
        return json.dumps({"id": request_id, "f": value, "grad": grad})

    @staticmethod
    def _error(request_id: object, message: str) -> str:
        return json.dumps({"id": request_id, "error": message})


def serve(config: ServerConfig, stdin: IO[str], stdout: IO[str]) -> int:
    """Run the request loop until bye or end of input."""
    handler = RequestHandler(config)
    stdout.write(handler.ready_line() + "\n")
    stdout.flush()
    for line in stdin:
        if not line.strip():
            continue
        response, keep_going = handler.handle_line(line)
        if response is not None:
            stdout.write(response + "\n")
            stdout.flush()
        if not keep_going:
            break
    return 0


def _parse_domain(text: str) -> tuple[tuple[float, float], ...]:
    axes = []
    for chunk in text.split(","):
        lo_text, sep, hi_text = chunk.partition(":")
        if not sep:
            raise ValueError(f"domain axis {chunk!r} is not of the form lo:hi")
        axes.append((float(lo_text), float(hi_text)))
    return tuple(axes)


def _parse_floats(text: str) -> list[float]:
    return [float(chunk) for chunk in text.split(",")]


def _parse_box(text: str) -> tuple[list[float], list[float]]:
    lows, highs = [], []
    for chunk in text.split(","):
        lo_text, sep, hi_text = chunk.partition(":")
        if not sep:
            raise ValueError(f"box axis {chunk!r} is not of the form lo:hi")
        lows.append(float(lo_text))
        highs.append(float(hi_text))
    return lows, highs


def build_config(argv: Sequence[str]) -> ServerConfig:
    parser = argparse.ArgumentParser(
        prog="pyfunc-server",
        description="Serve a scalar test function over the stdio JSON protocol.",
    )
    parser.add_argument("--kind", required=True, choices=(*KINDS, "hook"))
    parser.add_argument("--n", type=int, default=None, help="parameter dimension")
    parser.add_argument("--domain", default=None, help="comma-separated lo:hi per axis")
    parser.add_argument("--no-grad", action="store_true",
                        help="answer gradient requests with an error")
    parser.add_argument("--level", type=float, default=None)
    parser.add_argument("--slope", default=None, help="comma-separated, or one value for all axes")
    parser.add_argument("--intercept", type=float, default=None)
    parser.add_argument("--box", default=None, help="comma-separated lo:hi per axis, or one pair for all")
    parser.add_argument("--hi", type=float, default=None)
    parser.add_argument("--lo", type=float, default=None)
    parser.add_argument("--sharpness", type=float, default=None)
    parser.add_argument("--center", default=None, help="comma-separated coordinates")
    parser.add_argument("--width", type=float, default=None)
    parser.add_argument("--trap-center", default=None, help="comma-separated coordinates")
    parser.add_argument("--trap-width", type=float, default=None)
    parser.add_argument("--trap-depth", type=float, default=None)
    args = parser.parse_args(list(argv))

    domain = _parse_domain(args.domain) if args.domain else ()
    if args.n is not None:
        n = args.n
    elif domain:
        n = len(domain)
    else:
        n = 2

    params: dict[str, object] = {}
    for key in ("level", "intercept", "hi", "lo", "sharpness", "width"):
        value = getattr(args, key)
        if value is not None:
            params[key] = value
    if args.slope is not None:
        params["slope"] = _parse_floats(args.slope)
    if args.center is not None:
        params["center"] = _parse_floats(args.center)
    if args.box is not None:
        box_lo, box_hi = _parse_box(args.box)
        params["box_lo"], params["box_hi"] = box_lo, box_hi
    if args.trap_center is not None:
        params["trap_center"] = _parse_floats(args.trap_center)
    if args.trap_width is not None:
        params["trap_width"] = args.trap_width
    if args.trap_depth is not None:
        params["trap_depth"] = args.trap_depth

    return ServerConfig(
        kind=args.kind, n=n, domain=domain, params=params, grad=not args.no_grad
    )


def main(argv: Sequence[str] | None = None) -> int:
    try:
        config = build_config(sys.argv[1:] if argv is None else argv)
        return serve(config, sys.stdin, sys.stdout)
    except (ValueError, TypeError) as exc:
        print(f"pyfunc-server: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
