"""Command-line surface: map, find, validate, and srvr subcommands.

Exit codes: 0 success, 2 configuration error, 3 evaluator failure,
4 emphasis factor out of range.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BetaOutOfRangeError,
    BudgetExceededError,
    EvaluatorError,
    GradientUnsupportedError,
)
from .fileio import atomic_write_text
from .geometry import Domain, Region
from .maps import map_to_csv, sample_map, srvr, validate_region
from .optimizers import METHODS, GrowthTrace, OptimizerParams, grow_region
from .oracles import (
    BUILTIN_KINDS,
    BuiltinSpec,
    ExternalOracle,
    FunctionOracle,
    adversarial_wrapper,
    external_oracle,
    make_builtin,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVALUATOR = 3
EXIT_BETA = 4


class ConfigError(ValueError):
    """Bad flags, malformed inputs, or inconsistent run configuration."""


def parse_domain(text: str) -> Domain:
    """Parse ``lo:hi,lo:hi,...`` into a Domain."""
    lo: list[float] = []
    hi: list[float] = []
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) != 2:
            raise ConfigError(f"domain component {part!r} is not of the form lo:hi")
        try:
            lo.append(float(pieces[0]))
            hi.append(float(pieces[1]))
        except ValueError as exc:
            raise ConfigError(f"domain component {part!r} is not numeric") from exc
    try:
        return Domain(np.array(lo), np.array(hi))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_vector(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")], dtype=np.float64)
    except ValueError as exc:
        raise ConfigError(f"{what} {text!r} is not a comma-separated float list") from exc


def parse_grid(text: str) -> tuple[int, ...]:
    try:
        counts = tuple(int(c) for c in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"grid {text!r} is not a comma-separated integer list") from exc
    if any(c < 2 for c in counts):
        raise ConfigError(f"grid counts must be at least 2, got {counts}")
    return counts


def _parse_builtin_params(text: str) -> dict[str, list[str]]:
    """Tokenize ``k=v,v2,k2=v`` where bare tokens extend the previous key."""
    params: dict[str, list[str]] = {}
    current: str | None = None
    for token in text.split(","):
        if not token:
            continue
        if "=" in token:
            current, _, value = token.partition("=")
            params.setdefault(current, []).append(value)
        elif current is not None:
            params[current].append(token)
        else:
            params.setdefault("", []).append(token)
    return params


def _floats(tokens: list[str], key: str) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ConfigError(f"parameter {key} has non-numeric value {tokens!r}") from exc


def _builtin_params(kind: str, text: str, n: int) -> dict[str, object]:
    """Convert CLI parameter text into BuiltinSpec params."""
    tokens = _parse_builtin_params(text)
    params: dict[str, object] = {}
    bare = tokens.pop("", None)
    if bare is not None:
        if kind == "constant" and len(bare) == 1:
            params["level"] = _floats(bare, "level")[0]
        else:
            raise ConfigError(f"builtin {kind} does not take bare parameters {bare!r}")
    for key, values in tokens.items():
        if key in ("box", "trap_box"):
            pairs = []
            for value in values:
                pieces = value.split(":")
                if len(pieces) != 2:
                    raise ConfigError(f"box component {value!r} is not of the form lo:hi")
                pairs.append((float(pieces[0]), float(pieces[1])))
            if len(pairs) == 1 and n > 1:
                pairs = pairs * n
            params["box_lo"] = [p[0] for p in pairs]
            params["box_hi"] = [p[1] for p in pairs]
        elif key in ("center", "trap_center", "slope"):
            params[key] = _floats(values, key)
        elif len(values) == 1:
            params[key] = _floats(values, key)[0]
        else:
            raise ConfigError(f"parameter {key} takes one value, got {values!r}")
    return params


def build_oracle(
    fn_spec: str, domain: Domain | None, n_hint: int | None, adversarial: bool
) -> tuple[FunctionOracle, Domain]:
    """Construct the oracle from --fn and reconcile the run domain."""
    scheme, _, payload = fn_spec.partition(":")
    if scheme == "builtin":
        kind, _, param_text = payload.partition(":")
        if kind not in BUILTIN_KINDS:
            raise ConfigError(f"unknown builtin kind {kind!r}; choose from {BUILTIN_KINDS}")
        run_domain = domain if domain is not None else _default_domain(n_hint)
        params = _builtin_params(kind, param_text, run_domain.n)
        try:
            oracle: FunctionOracle = make_builtin(
                BuiltinSpec(kind=kind, n=run_domain.n, domain=run_domain, params=params)
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    elif scheme == "exec":
        if not payload:
            raise ConfigError("exec oracle needs a command, e.g. exec:./server")
        pieces = shlex.split(payload)
        oracle = external_oracle(pieces[0], pieces[1:])
        if domain is not None:
            if domain.n != oracle.n or not (
                np.array_equal(domain.lo, oracle.domain.lo)
                and np.array_equal(domain.hi, oracle.domain.hi)
            ):
                oracle_domain = oracle.domain
                if isinstance(oracle, ExternalOracle):
                    oracle.close()
                raise ConfigError(
                    f"--domain does not match the evaluator's declared domain "
                    f"(lo={oracle_domain.lo.tolist()}, hi={oracle_domain.hi.tolist()})"
                )
        run_domain = oracle.domain
    else:
        raise ConfigError(f"--fn must start with builtin: or exec:, got {fn_spec!r}")
    if adversarial:
        oracle = adversarial_wrapper(oracle)
    return oracle, run_domain


def _default_domain(n_hint: int | None) -> Domain:
    n = 2 if n_hint is None else n_hint
    if n == 1:
        return Domain(np.array([0.0]), np.array([360.0]))
    if n == 2:
        return Domain(np.array([0.0, -10.0]), np.array([360.0, 90.0]))
    raise ConfigError(f"--domain is required for {n}-dimensional runs")


def _close_oracle(oracle: FunctionOracle) -> None:
    inner = getattr(oracle, "_inner", None)
    for candidate in (oracle, inner):
        if isinstance(candidate, ExternalOracle):
            candidate.close()


def _trace_path(out: str, index: int, total: int) -> Path:
    path = Path(out)
    if total == 1:
        return path
    return path.with_name(f"{path.stem}_{index}{path.suffix or '.json'}")


def cmd_map(args: argparse.Namespace) -> int:
    domain = parse_domain(args.domain) if args.domain else None
    oracle, run_domain = build_oracle(args.fn, domain, None, args.adversarial)
    try:
        counts = parse_grid(args.grid) if args.grid else (33,) * run_domain.n
        if len(counts) == 1 and run_domain.n > 1:
            counts = counts * run_domain.n
        try:
            semantic_map = sample_map(oracle, run_domain, counts)
        except (BudgetExceededError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        atomic_write_text(args.out, map_to_csv(semantic_map))
        print(f"wrote {args.out} ({semantic_map.values.size} rows)")
        return EXIT_OK
    finally:
        _close_oracle(oracle)


def cmd_find(args: argparse.Namespace) -> int:
    if not args.u0:
        raise ConfigError("at least one --u0 is required")
    inits = [parse_vector(text, "--u0") for text in args.u0]
    n_hint = inits[0].size
    domain = parse_domain(args.domain) if args.domain else None
    oracle, run_domain = build_oracle(args.fn, domain, n_hint, args.adversarial)
    try:
        if args.method in ("oirw", "trapgrad") and not oracle.supports_grad:
            raise ConfigError(
                f"gradient-unsupported: method {args.method} needs gradients "
                f"but oracle {oracle.name!r} has none"
            )
        try:
            params = OptimizerParams(
                eta=args.eta,
                lam=args.lam,
                alpha=args.alpha,
                beta=args.beta,
                steps=args.steps,
                eps_init=args.eps_init,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for index, u0 in enumerate(inits):
            if u0.size != run_domain.n:
                raise ConfigError(
                    f"--u0 {u0.tolist()} has dimension {u0.size}, expected {run_domain.n}"
                )
            try:
                trace = grow_region(oracle, u0, args.method, params, run_domain)
            except BetaOutOfRangeError:
                raise
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            path = _trace_path(args.out, index, len(inits))
            atomic_write_text(path, trace.to_json() + "\n")
            assert trace.final is not None
            print(
                f"wrote {path} final a={trace.final.a.tolist()!r} "
                f"b={trace.final.b.tolist()!r}"
            )
        return EXIT_OK
    finally:
        _close_oracle(oracle)


def _load_trace(path: str) -> GrowthTrace:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read trace {path!r}: {exc}") from exc
    try:
        return GrowthTrace.from_json(text)
    except ValueError as exc:
        raise ConfigError(f"malformed trace {path!r}: {exc}") from exc


def cmd_validate(args: argparse.Namespace) -> int:
    trace = _load_trace(args.trace)
    domain = parse_domain(args.domain) if args.domain else trace.domain
    oracle, _ = build_oracle(args.fn, domain, trace.domain.n, args.adversarial)
    try:
        assert trace.final is not None
        u0 = parse_vector(args.u0[0], "--u0") if args.u0 else trace.u0
        if args.grid:
            try:
                samples = int(args.grid)
            except ValueError as exc:
                raise ConfigError(
                    f"--grid must be a single integer for validate, got {args.grid!r}"
                ) from exc
        else:
            samples = 33
        try:
            report = validate_region(
                oracle,
                trace.final,
                eps_m=args.eps_m,
                eps_v=args.eps_v,
                samples_per_dim=samples,
                u0=u0,
            )
        except (BudgetExceededError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        text = report.to_json() + "\n"
        if args.out:
            atomic_write_text(args.out, text)
        else:
            sys.stdout.write(text)
        print(
            f"verdict {report.verdict} mean {report.mean!r} variance {report.variance!r}",
            file=sys.stderr,
        )
        return EXIT_OK
    finally:
        _close_oracle(oracle)


def cmd_srvr(args: argparse.Namespace) -> int:
    traces = [_load_trace(path) for path in args.traces]
    first = traces[0].domain
    for trace in traces[1:]:
        if not (
            np.array_equal(trace.domain.lo, first.lo)
            and np.array_equal(trace.domain.hi, first.hi)
        ):
            raise ConfigError("traces were grown over different domains")
    volumes = []
    by_method: dict[str, list[float]] = {}
    for trace in traces:
        assert trace.final is not None
        volume = float(np.prod(trace.final.r))
        volumes.append(volume)
        by_method.setdefault(trace.method, []).append(volume)
    overall = srvr(volumes, first)
    per_method = {method: srvr(vols, first) for method, vols in sorted(by_method.items())}
    print(f"{overall!r}")
    for method, value in per_method.items():
        print(f"method {method} {value!r} ({len(by_method[method])} traces)")
    if args.out:
        summary = {
            "srvr": overall,
            "per_method": per_method,
            "traces": len(traces),
            "domain": {"lo": first.lo.tolist(), "hi": first.hi.tolist()},
        }
        atomic_write_text(args.out, json.dumps(summary) + "\n")
    return EXIT_OK


def _add_oracle_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--fn", required=True, help="builtin:<kind>[:<params>] or exec:<command>")
    parser.add_argument("--domain", help="comma-separated lo:hi per dimension")
    parser.add_argument("--adversarial", action="store_true", help="analyze 1 - f instead of f")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srf",
        description="Find robust and adversarial axis-aligned regions of scalar functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_map = sub.add_parser("map", help="sample a semantic map over the domain")
    _add_oracle_flags(p_map)
    p_map.add_argument("--grid", help="per-dimension sample counts, e.g. 61,26")
    p_map.add_argument("--out", default="map.csv", help="output CSV path")
    p_map.set_defaults(handler=cmd_map)

    p_find = sub.add_parser("find", help="grow regions from initial points")
    _add_oracle_flags(p_find)
    p_find.add_argument("--u0", action="append", help="initial point, comma-separated; repeatable")
    p_find.add_argument("--method", choices=METHODS, default="naive")
    p_find.add_argument("--eta", type=float, default=0.1, help="learning rate")
    p_find.add_argument("--alpha", type=float, default=0.05, help="outer boundary factor")
    p_find.add_argument("--beta", type=float, default=0.0009, help="gradient emphasis factor")
    p_find.add_argument("--lambda", dest="lam", type=float, default=0.1, help="size penalty")
    p_find.add_argument("--steps", type=int, default=800, help="iteration count T")
    p_find.add_argument("--eps-init", type=float, default=0.5, help="initial half-width")
    p_find.add_argument("--out", default="trace.json", help="trace path (indexed per init)")
    p_find.set_defaults(handler=cmd_find)

    p_val = sub.add_parser("validate", help="check a trace's final region")
    p_val.add_argument("trace", help="trace JSON written by find")
    _add_oracle_flags(p_val)
    p_val.add_argument("--grid", help="samples per dimension (default 33)")
    p_val.add_argument("--u0", action="append", help="override the trace's initial point")
    p_val.add_argument("--eps-m", type=float, default=0.15, help="mean threshold")
    p_val.add_argument("--eps-v", type=float, default=0.01, help="variance threshold")
    p_val.add_argument("--out", help="report JSON path (default: stdout)")
    p_val.set_defaults(handler=cmd_validate)

    p_srvr = sub.add_parser("srvr", help="volume-ratio metric over trace files")
    p_srvr.add_argument("traces", nargs="+", help="trace JSON files")
    p_srvr.add_argument("--out", help="summary JSON path")
    p_srvr.set_defaults(handler=cmd_srvr)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except BetaOutOfRangeError as exc:
        print(f"srf: {exc}", file=sys.stderr)
        return EXIT_BETA
    except (ConfigError, BudgetExceededError, GradientUnsupportedError) as exc:
        print(f"srf: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluatorError as exc:
        print(f"srf: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    except OSError as exc:
        print(f"srf: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:
    sys.exit(main())
