"""
Coded Private Read/Write Simulator - command-line entry point
Subcommands: simulate, costs, audit, example, selftest
"""
from dotenv import load_dotenv
load_dotenv()  # Load environment variables from .env file

import argparse
import itertools
import json
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from config import config, configure_logging
from utils.audit import AUDIT_TARGETS, certify_round, run_audit_suite
from utils.codec import decode_database
from utils.errors import InvalidInputError, InvariantViolation, SchemeError
from utils.params import RawConfig, SystemParams, derive
from utils.server import build_null_shaper
from utils.sim import (
    DropoutSchedule,
    RoundSource,
    closed_form_costs,
    cost_table,
    decimal_text,
    execute_round,
    fraction_text,
    init,
    run_round,
    run_schedule,
    tradeoff_sweep,
)
from utils.storage import TraceWriter, write_snapshot
from utils.validators import ConfigValidator

logger = structlog.get_logger()

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_INVALID = 2

EXAMPLES = ("worked", "numerical", "toy")
# Numeric names accepted from scripted runs
EXAMPLE_ALIASES = {"5.1": "worked", "3.1.8": "numerical"}

# Built-in configurations for examples and selftest
WORKED_EXAMPLE = RawConfig(N=8, K=2, X=4, T=1, X_delta=1, K_c=1, xi=1, q=11)
NUMERICAL_EXAMPLE = RawConfig(N=6, K=50, X=3, T=1, X_delta=1, K_c=1, xi=35000)
AUDIT_CONFIGS = (
    RawConfig(N=4, K=2, X=2, T=1, X_delta=1, q=7),
    RawConfig(N=5, K=2, X=3, T=1, X_delta=1, q=11),
)


class ExampleCheck:
    """Collects expected/measured pairs and reports every diff"""

    def __init__(self, name: str):
        self.name = name
        self.rows: List[Tuple[str, object, object]] = []

    def expect(self, quantity: str, expected, measured) -> None:
        self.rows.append((quantity, expected, measured))

    @property
    def diffs(self) -> List[str]:
        return [q for q, expected, measured in self.rows if expected != measured]

    def render(self) -> str:
        lines = [f"example {self.name}"]
        for quantity, expected, measured in self.rows:
            status = "ok" if expected == measured else "DIFF"
            lines.append(f"  {quantity:<28} expected={_show(expected):<14} measured={_show(measured):<14} {status}")
        lines.append("PASS" if not self.diffs else f"FAIL: {', '.join(self.diffs)}")
        return "\n".join(lines)

    def finish(self) -> None:
        print(self.render())
        if self.diffs:
            raise InvariantViolation("example-mismatch", ", ".join(self.diffs))


def _show(value) -> str:
    if isinstance(value, Fraction):
        return f"{fraction_text(value)} ({decimal_text(value)})"
    return str(value)


# Input helpers

def load_params(path: str, seed: Optional[int] = None) -> SystemParams:
    validator = ConfigValidator()
    loaded = validator.load_json(path)
    if not loaded.valid:
        raise InvalidInputError("; ".join(loaded.errors))
    raw = RawConfig.from_dict(loaded.cleaned)
    if seed is not None:
        raw = replace(raw, seed=seed)
    return derive(raw)


def load_schedule(path: str, params: SystemParams) -> DropoutSchedule:
    validator = ConfigValidator()
    loaded = validator.load_json(path)
    if not loaded.valid:
        raise InvalidInputError("; ".join(loaded.errors))
    result = validator.validate_schedule(loaded.cleaned, N=params.N)
    if not result.valid:
        raise InvalidInputError("; ".join(result.errors))
    return DropoutSchedule.explicit(result.cleaned)


def parse_pair(text: str) -> Tuple[int, int]:
    """'r,w' -> (r, w)"""
    try:
        r, w = (int(part) for part in text.split(","))
    except ValueError as e:
        raise InvalidInputError(f"Expected 'r,w' with two integers, got {text!r}") from e
    return r, w


def parse_range(text: str) -> range:
    """'a..b' (inclusive) or a single integer"""
    try:
        if ".." in text:
            low, high = text.split("..", 1)
            return range(int(low), int(high) + 1)
        value = int(text)
        return range(value, value + 1)
    except ValueError as e:
        raise InvalidInputError(f"Bad range {text!r}") from e


def parse_assignments(text: str) -> Dict[str, str]:
    """'k1=v1,k2=v2' -> dict"""
    pairs = {}
    for part in text.split(","):
        if "=" not in part:
            raise InvalidInputError(f"Expected key=value in {text!r}")
        key, value = part.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def parse_sweep(text: Optional[str], params: SystemParams) -> Tuple[range, range]:
    sr = range(0, params.S_r_thresh + 1)
    sw = range(0, params.S_w_thresh + 1)
    if text:
        pairs = parse_assignments(text)
        unknown = sorted(set(pairs) - {"sr", "sw"})
        if unknown:
            raise InvalidInputError(f"Unknown sweep keys: {', '.join(unknown)}")
        if "sr" in pairs:
            sr = parse_range(pairs["sr"])
        if "sw" in pairs:
            sw = parse_range(pairs["sw"])
    return sr, sw


def render_table(table: pd.DataFrame) -> str:
    shown = table.copy()
    for column in ("D", "U", "total"):
        if column in shown:
            shown[column] = shown[column].map(lambda v: fraction_text(v) if isinstance(v, Fraction) else "-")
    return shown.fillna("-").to_string(index=False)


# Commands

def cmd_simulate(args: argparse.Namespace) -> int:
    params = load_params(args.config, args.seed)
    seed = params.seed

    if args.schedule and args.random_dropouts:
        raise InvalidInputError("Use either --schedule or --random-dropouts, not both")
    if args.schedule:
        schedule = load_schedule(args.schedule, params)
        if args.rounds is not None:
            schedule = DropoutSchedule(schedule.rounds[:args.rounds])
    else:
        rounds = args.rounds if args.rounds is not None else 1
        if rounds < 0:
            raise InvalidInputError("--rounds must be >= 0")
        if args.random_dropouts:
            max_read, max_write = parse_pair(args.random_dropouts)
            schedule = DropoutSchedule.random(params, rounds, max_read, max_write, seed)
        else:
            schedule = DropoutSchedule.none(rounds)

    source = RoundSource.uniform(params, seed)
    state = init(params, source.database())
    out = Path(args.out) if args.out else config.output.ensure_output_dir() / "trace.jsonl"

    verify = False if args.no_verify else None
    with TraceWriter(out) as trace:
        reports = run_schedule(state, schedule, source, verify=verify,
                               on_round=lambda r: trace.write(r.to_trace_dict()))

    if args.snapshot:
        write_snapshot(args.snapshot, state.storages, params)

    print(json.dumps({
        "rounds": len(reports),
        "trace": str(out),
        "params": params.to_dict(),
        "reports": [r.to_dict() for r in reports],
    }, indent=2))
    return EXIT_OK


def cmd_costs(args: argparse.Namespace) -> int:
    params = load_params(args.config)
    if args.tradeoff:
        pairs = parse_assignments(args.tradeoff)
        unknown = sorted(set(pairs) - {"T", "X_delta"})
        if unknown:
            raise InvalidInputError(f"Unknown trade-off keys: {', '.join(unknown)}")
        try:
            T = int(pairs.get("T", params.T))
            X_delta = int(pairs.get("X_delta", params.X_delta))
        except ValueError as e:
            raise InvalidInputError(f"Bad trade-off values in {args.tradeoff!r}") from e
        table = tradeoff_sweep(params.N, T, X_delta, params.K_c)
        print(f"Trade-off for N={params.N}, K_c={params.K_c}, T={T}, X_delta={X_delta}")
    else:
        sr, sw = parse_sweep(args.sweep, params)
        table = cost_table(params, sr, sw)
        print(f"Costs for N={params.N}, X={params.X}, T={params.T}, X_delta={params.X_delta}, "
              f"K_c={params.K_c} (S_r_thresh={params.S_r_thresh}, S_w_thresh={params.S_w_thresh})")
    print(render_table(table))
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    params = load_params(args.config, args.seed)
    report = run_audit_suite(params, args.what)
    print(json.dumps(report.to_dict(), indent=2, default=str))
    if not report.passed:
        failed = [c["name"] for c in report.checks if not c["passed"]]
        raise InvariantViolation("audit-failed", ", ".join(sorted(set(failed))))
    return EXIT_OK


def example_worked(seed: int) -> ExampleCheck:
    """Two rounds over N=8 with (1, 2) then (2, 1) dropouts"""
    params = derive(replace(WORKED_EXAMPLE, seed=seed))
    check = ExampleCheck("worked")
    check.expect("S_r_thresh", 3, params.S_r_thresh)
    check.expect("S_w_thresh", 3, params.S_w_thresh)
    check.expect("mu", 3, params.mu)
    check.expect("L", 6, params.L)

    source = RoundSource.uniform(params, seed)
    state = init(params, source.database())
    schedule = DropoutSchedule.explicit([((3,), (5, 7)), ((1, 2), (8,))])
    expected = [
        (Fraction(7, 2), Fraction(6), 2, 1),
        (Fraction(6), Fraction(7, 2), 1, 2),
    ]
    for (read, write), (D, U_inc, R_r, R_w) in zip(schedule, expected):
        theta, delta = source.next()
        result = execute_round(state, theta, delta, read, write)
        t = result.report.t
        check.expect(f"R_r[{t}]", R_r, result.round_params.R_r)
        check.expect(f"R_w[{t}]", R_w, result.round_params.R_w)
        check.expect(f"D[{t}]", D, result.report.D)
        check.expect(f"U_increment[{t}]", U_inc, result.report.U_increment)
    return check


def example_numerical(seed: int) -> ExampleCheck:
    """N=6, K=50, L=70000 without dropouts; oracle off to bound memory"""
    params = derive(replace(NUMERICAL_EXAMPLE, seed=seed))
    check = ExampleCheck("numerical")
    check.expect("L", 70000, params.L)
    source = RoundSource.uniform(params, seed)
    state = init(params, source.database())
    theta, delta = source.next()
    expected_row = state.mirror.row(theta)
    retrieved, report = run_round(state, theta, delta, verify=False)
    check.expect("upload symbols", 210600, report.up_query_symbols + report.up_increment_symbols)
    check.expect("U", Fraction(210600, 70000), report.U)
    check.expect("D", Fraction(3), report.D)
    check.expect("closed-form D", Fraction(3), closed_form_costs(params, 0, 0)[0])
    check.expect("closed-form U", Fraction(3), closed_form_costs(params, 0, 0)[1])
    check.expect("retrieval", True, bool(np.all(retrieved == expected_row)))
    return check


def example_toy(seed: int) -> ExampleCheck:
    check = ExampleCheck("toy")

    # Two-server intuition: any K_c+X = 2 servers recover W + Delta after the update
    params = derive(RawConfig(N=3, K=1, X=1, T=1, X_delta=0, K_c=1, xi=1, seed=seed))
    source = RoundSource.uniform(params, seed)
    initial = source.database()
    state = init(params, initial)
    theta, delta = source.next()
    run_round(state, theta, delta)
    updated = initial.entries[0] + delta
    for pair in itertools.combinations(range(1, params.N + 1), 2):
        decoded = decode_database([state.states[n] for n in pair], params)
        check.expect(f"W+Delta from {pair}", True, bool(np.all(decoded.entries[0] == updated)))

    # Null-shaper: server 1 misses the write phase
    params = derive(RawConfig(N=4, K=1, X=2, T=1, X_delta=0, K_c=1, xi=1, seed=seed))
    shaper = build_null_shaper(params, (1,))
    ints = params.field.to_ints(shaper.values)
    check.expect("null-shaper server 1", 0, int(np.count_nonzero(ints[0])))
    check.expect("null-shaper others nonzero", True, bool(np.all(ints[1:] != 0)))
    source = RoundSource.uniform(params, seed)
    state = init(params, source.database())
    pre = state.snapshot()
    theta, delta = source.next()
    result = execute_round(state, theta, delta, (), (1,))
    certificate = certify_round(pre, state, theta, delta, result.retrieved, result.round_params)
    for clause, ok in certificate.clauses.items():
        check.expect(f"certificate {clause}", True, ok)
    return check


def cmd_example(args: argparse.Namespace) -> int:
    runners: Dict[str, Callable[[int], ExampleCheck]] = {
        "worked": example_worked,
        "numerical": example_numerical,
        "toy": example_toy,
    }
    which = EXAMPLE_ALIASES.get(args.which, args.which)
    runners[which](args.seed if args.seed is not None else config.scheme.default_seed).finish()
    return EXIT_OK


def certified_sweep(raw: RawConfig, seed: int) -> ExampleCheck:
    """One certified round for every admissible (read, write) dropout pair"""
    params = derive(replace(raw, seed=seed))
    check = ExampleCheck(f"rounds N={params.N}")
    source = RoundSource.uniform(params, seed)
    state = init(params, source.database())
    servers = range(1, params.N + 1)
    reads = [c for k in range(params.S_r_thresh) for c in itertools.combinations(servers, k)]
    writes = [c for k in range(params.S_w_thresh) for c in itertools.combinations(servers, k)]
    for read, write in itertools.product(reads, writes):
        pre = state.snapshot()
        theta, delta = source.next()
        result = execute_round(state, theta, delta, read, write)
        certificate = certify_round(pre, state, theta, delta, result.retrieved, result.round_params)
        D, U = closed_form_costs(params, len(read), len(write))
        check.expect(f"certified {read}/{write}", True, certificate.passed)
        check.expect(f"D {read}/{write}", D, result.report.D)
        check.expect(f"U_increment {read}/{write}", U, result.report.U_increment)
    return check


def cmd_selftest(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else config.scheme.default_seed
    failures: List[str] = []

    def attempt(name: str, run: Callable[[], None]) -> None:
        try:
            run()
        except InvariantViolation as e:
            failures.append(f"{name}: {e}")

    attempt("example worked", lambda: example_worked(seed).finish())
    attempt("example toy", lambda: example_toy(seed).finish())
    for raw in AUDIT_CONFIGS:
        attempt(f"rounds N={raw.N}", lambda raw=raw: certified_sweep(raw, seed).finish())

    for raw in AUDIT_CONFIGS:
        report = run_audit_suite(derive(raw), "all", seed)
        print(json.dumps(report.to_dict(), indent=2, default=str))
        if not report.passed:
            failures.append(f"audit N={raw.N}")

    if failures:
        raise InvariantViolation("selftest-failed", "; ".join(failures))
    print("SELFTEST PASS")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coded-rw",
        description=f"{config.app.app_name} {config.app.app_version}",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--log-level", default=None, help="Log level (default from LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Run read/write rounds and write a JSON-lines trace")
    simulate.add_argument("--config", required=True, help="Configuration JSON")
    simulate.add_argument("--rounds", type=int, default=None, help="Number of rounds")
    simulate.add_argument("--schedule", default=None, help="Dropout schedule JSON")
    simulate.add_argument("--random-dropouts", default=None, help="Max read,write dropouts per round")
    simulate.add_argument("--seed", type=int, default=None, help="Override the configured seed")
    simulate.add_argument("--out", default=None, help="Trace output path")
    simulate.add_argument("--snapshot", default=None, help="Write the final storage snapshot here")
    simulate.add_argument("--no-verify", action="store_true", help="Skip the mirror oracle")
    simulate.set_defaults(handler=cmd_simulate)

    costs = sub.add_parser("costs", help="Exact download/upload cost table")
    costs.add_argument("--config", required=True, help="Configuration JSON")
    costs.add_argument("--sweep", default=None, help='Dropout ranges, e.g. "sr=0..2,sw=0..1"')
    costs.add_argument("--tradeoff", default=None, help='Sweep X, e.g. "T=1,X_delta=1"')
    costs.set_defaults(handler=cmd_costs)

    audit = sub.add_parser("audit", help="Exhaustive privacy/security audit")
    audit.add_argument("--config", required=True, help="Configuration JSON")
    audit.add_argument("--what", choices=AUDIT_TARGETS, default="all")
    audit.add_argument("--seed", type=int, default=None)
    audit.set_defaults(handler=cmd_audit)

    example = sub.add_parser("example", help="Replay a worked example and diff every quantity")
    example.add_argument("--which", choices=EXAMPLES + tuple(EXAMPLE_ALIASES), required=True)
    example.add_argument("--seed", type=int, default=None)
    example.set_defaults(handler=cmd_example)

    selftest = sub.add_parser("selftest", help="Run the property suites at built-in tiny configs")
    selftest.add_argument("--seed", type=int, default=None)
    selftest.set_defaults(handler=cmd_selftest)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.log_level)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID

    try:
        return args.handler(args)
    except InvariantViolation as e:
        logger.error("Invariant violated", invariant=e.name, detail=e.detail)
        print(f"invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except InvalidInputError as e:
        logger.error("Invalid input", error=str(e))
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except SchemeError as e:
        logger.error("Scheme error", error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
