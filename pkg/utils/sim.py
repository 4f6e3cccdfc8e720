"""
Round orchestration, the plaintext mirror oracle and the cost ledger.

Each round draws its randomness from numpy.random.default_rng([seed, t]) so a
round can be replayed bit-exactly from its seed and index alone.
"""
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from config import config

from .client import (
    Answer,
    decode_answers,
    gen_increment,
    gen_read_query,
    random_increment_noise,
    random_query_noise,
)
from .codec import (
    Database,
    ServerStorage,
    check_consistency,
    check_database,
    decode_database,
    encode_storage,
    random_storage_noise,
)
from .errors import (
    ConfigurationError,
    InfeasibleReadError,
    InfeasibleWriteError,
    InvalidInputError,
    InvariantViolation,
)
from .field import FieldElement
from .params import RoundParams, SystemParams, round_params, thresholds
from .server import answer_all, build_null_shaper, build_packer, build_unpacker, update_all

logger = structlog.get_logger()

TRACE_KEYS = (
    "t", "theta", "read_dropouts", "write_dropouts", "down_symbols",
    "up_query_symbols", "up_increment_symbols", "D_num", "D_den", "U_num", "U_den",
)


def decimal_text(value: Fraction, places: int = 6) -> str:
    """Exact decimal rendering, rounded half-even to `places` digits and trimmed"""
    quantum = Decimal(1).scaleb(-places)
    text = format((Decimal(value.numerator) / Decimal(value.denominator)).quantize(quantum), "f")
    return text.rstrip("0").rstrip(".") if "." in text else text


def fraction_text(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def round_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng([seed, t])


@dataclass(frozen=True)
class RoundReport:
    """Cost ledger for one read/write cycle"""
    t: int
    theta: int
    read_dropouts: Tuple[int, ...]
    write_dropouts: Tuple[int, ...]
    down_symbols: int
    up_query_symbols: int
    up_query_symbols_alt: int
    up_increment_symbols: int
    L: int
    access_touched_per_server: int
    eta: Fraction

    @property
    def D(self) -> Fraction:
        return Fraction(self.down_symbols, self.L)

    @property
    def U(self) -> Fraction:
        return Fraction(self.up_query_symbols + self.up_increment_symbols, self.L)

    @property
    def U_increment(self) -> Fraction:
        return Fraction(self.up_increment_symbols, self.L)

    def to_trace_dict(self) -> Dict:
        return {
            "t": self.t,
            "theta": self.theta,
            "read_dropouts": list(self.read_dropouts),
            "write_dropouts": list(self.write_dropouts),
            "down_symbols": self.down_symbols,
            "up_query_symbols": self.up_query_symbols,
            "up_increment_symbols": self.up_increment_symbols,
            "D_num": self.D.numerator,
            "D_den": self.D.denominator,
            "U_num": self.U.numerator,
            "U_den": self.U.denominator,
        }

    def to_dict(self) -> Dict:
        data = self.to_trace_dict()
        data.update({
            "up_query_symbols_alt": self.up_query_symbols_alt,
            "D": fraction_text(self.D),
            "D_decimal": decimal_text(self.D),
            "U": fraction_text(self.U),
            "U_decimal": decimal_text(self.U),
            "U_increment": fraction_text(self.U_increment),
            "U_increment_decimal": decimal_text(self.U_increment),
            "access_touched_per_server": self.access_touched_per_server,
            "eta": fraction_text(self.eta),
        })
        return data


@dataclass
class SimulationState:
    """Coded server states plus the plaintext mirror"""
    params: SystemParams
    states: Dict[int, ServerStorage]
    mirror: Database
    t: int = 0

    @property
    def storages(self) -> List[ServerStorage]:
        return [self.states[n] for n in range(1, self.params.N + 1)]

    def snapshot(self) -> "SimulationState":
        return SimulationState(
            params=self.params,
            states={n: s.copy() for n, s in self.states.items()},
            mirror=self.mirror.copy(),
            t=self.t,
        )

    def restore(self, other: "SimulationState") -> None:
        self.states = {n: s.copy() for n, s in other.states.items()}
        self.mirror = other.mirror.copy()
        self.t = other.t


@dataclass(frozen=True)
class RoundResult:
    """Everything a round produced, for certification"""
    retrieved: FieldElement
    report: RoundReport
    round_params: RoundParams


@dataclass
class DropoutSchedule:
    """Per-round (read_dropouts, write_dropouts) pairs"""
    rounds: List[Tuple[Tuple[int, ...], Tuple[int, ...]]] = field(default_factory=list)

    def __iter__(self) -> Iterator[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
        return iter(self.rounds)

    def __len__(self) -> int:
        return len(self.rounds)

    @classmethod
    def explicit(cls, rounds: Iterable[Tuple[Iterable[int], Iterable[int]]]) -> "DropoutSchedule":
        return cls([(tuple(sorted(r)), tuple(sorted(w))) for r, w in rounds])

    @classmethod
    def none(cls, count: int) -> "DropoutSchedule":
        return cls([((), ())] * count)

    @classmethod
    def random(cls, params: SystemParams, count: int, max_read: int, max_write: int,
               seed: int) -> "DropoutSchedule":
        """Uniform dropout counts up to the bounds (capped below the thresholds), uniform subsets"""
        if max_read < 0 or max_write < 0:
            raise ConfigurationError("Dropout bounds must be non-negative")
        rng = np.random.default_rng(seed)
        read_cap = min(max_read, params.S_r_thresh - 1)
        write_cap = min(max_write, params.S_w_thresh - 1)
        rounds = []
        for _ in range(count):
            phases = []
            for cap in (read_cap, write_cap):
                size = int(rng.integers(0, cap + 1))
                chosen = rng.choice(np.arange(1, params.N + 1), size=size, replace=False)
                phases.append(tuple(sorted(int(n) for n in chosen)))
            rounds.append((phases[0], phases[1]))
        return cls(rounds)


class RoundSource:
    """Supplies (theta, delta) for each round"""

    def __init__(self, params: SystemParams, pairs: Optional[Sequence[Tuple[int, Sequence[int]]]] = None,
                 seed: Optional[int] = None):
        self.params = params
        self._pairs = list(pairs) if pairs is not None else None
        self._rng = np.random.default_rng(seed if seed is not None else params.seed)
        self._index = 0

    @classmethod
    def explicit(cls, params: SystemParams, pairs: Sequence[Tuple[int, Sequence[int]]]) -> "RoundSource":
        return cls(params, pairs=pairs)

    @classmethod
    def uniform(cls, params: SystemParams, seed: int) -> "RoundSource":
        return cls(params, seed=seed)

    def database(self) -> Database:
        """Uniform initial database drawn from the source's own generator"""
        return Database(self.params.field.random((self.params.K, self.params.L), self._rng))

    def next(self) -> Tuple[int, FieldElement]:
        if self._pairs is not None:
            if self._index >= len(self._pairs):
                raise ConfigurationError(f"Round source exhausted after {len(self._pairs)} rounds")
            theta, delta = self._pairs[self._index]
            self._index += 1
            return int(theta), self.params.field.array(delta)
        self._index += 1
        theta = int(self._rng.integers(1, self.params.K + 1))
        return theta, self.params.field.random(self.params.L, self._rng)


def init(params: SystemParams, initial_db: Database) -> SimulationState:
    """Encode the initial database with fresh noise drawn for round 0"""
    check_database(initial_db, params)
    noise = random_storage_noise(params, round_rng(params.seed, 0))
    states = {s.server_index: s for s in encode_storage(initial_db, noise, params)}
    logger.info("Simulation initialised", N=params.N, K=params.K, L=params.L, q=params.q,
                eta=fraction_text(params.eta))
    return SimulationState(params=params, states=states, mirror=initial_db.copy(), t=0)


def touched_per_server(answers: Sequence[Answer], before: Dict[int, ServerStorage],
                       after: Dict[int, ServerStorage]) -> int:
    """Largest per-phase count of stored symbols a single server read or rewrote"""
    read = max((a.symbols_read for a in answers), default=0)
    changed = [n for n in after if after[n] is not before[n]]
    written = max((int(np.count_nonzero(after[n].blocks != before[n].blocks)) for n in changed), default=0)
    return max(read, written)


def execute_round(state: SimulationState, theta: int, delta: Sequence[int],
                  read_dropouts: Iterable[int] = (), write_dropouts: Iterable[int] = (),
                  verify: Optional[bool] = None) -> RoundResult:
    """One read phase then one write phase; the state is only changed if the round commits"""
    params = state.params
    ctx = params.field
    t = state.t + 1
    rp = round_params(params, t, read_dropouts, write_dropouts)
    delta = ctx.array(delta)
    if delta.shape != (params.L,):
        raise InvalidInputError(f"Increment has {delta.size} entries, expected L={params.L}")
    rng = round_rng(params.seed, t)
    workers = config.scheme.max_workers
    verify = config.scheme.verify_rounds if verify is None else verify

    # Read phase
    queries = {q.server_index: q for q in gen_read_query(theta, params, random_query_noise(params, rng))}
    packer = build_packer(params, rp)
    answers = answer_all(state.states, queries, packer, rp, max_workers=workers)
    retrieved = decode_answers(answers, theta, rp, params)

    # Write phase
    increment_noise = random_increment_noise(params, rp, rng)
    increments = {p.server_index: p for p in gen_increment(delta, rp, params, increment_noise)}
    unpacker = build_unpacker(params, rp)
    null_shaper = build_null_shaper(params, rp.write_dropouts)
    updated = update_all(state.states, increments, queries, unpacker, null_shaper, rp,
                         max_workers=workers)

    new_mirror = state.mirror.copy()
    new_mirror.entries[theta - 1] = new_mirror.entries[theta - 1] + delta

    if verify:
        _verify_round(state, updated, new_mirror, retrieved, theta, rp)

    recipients = sorted(set(rp.read_available) | set(rp.write_available))
    both = set(rp.read_available) & set(rp.write_available)
    per_query = params.mu * params.K * params.K_c
    report = RoundReport(
        t=t,
        theta=theta,
        read_dropouts=rp.read_dropouts,
        write_dropouts=rp.write_dropouts,
        down_symbols=sum(a.symbol_count for a in answers),
        up_query_symbols=sum(queries[n].symbol_count for n in recipients),
        up_query_symbols_alt=len(both) * per_query,
        up_increment_symbols=sum(increments[n].symbol_count for n in rp.write_available),
        L=params.L,
        access_touched_per_server=touched_per_server(answers, state.states, updated),
        eta=params.eta,
    )

    state.states = updated
    state.mirror = new_mirror
    state.t = t
    logger.info("Round complete", t=t, theta=theta, read_dropouts=list(rp.read_dropouts),
                write_dropouts=list(rp.write_dropouts), D=fraction_text(report.D),
                U=fraction_text(report.U))
    return RoundResult(retrieved=retrieved, report=report, round_params=rp)


def run_round(state: SimulationState, theta: int, delta: Sequence[int],
              read_dropouts: Iterable[int] = (), write_dropouts: Iterable[int] = (),
              verify: Optional[bool] = None) -> Tuple[FieldElement, RoundReport]:
    result = execute_round(state, theta, delta, read_dropouts, write_dropouts, verify)
    return result.retrieved, result.report


def run_schedule(state: SimulationState, schedule: Iterable[Tuple[Iterable[int], Iterable[int]]],
                 source: RoundSource, verify: Optional[bool] = None,
                 on_round: Optional[Callable[[RoundReport], None]] = None) -> List[RoundReport]:
    """Run rounds sequentially; the first infeasible round aborts with its index"""
    reports = []
    for read_dropouts, write_dropouts in schedule:
        theta, delta = source.next()
        try:
            _, report = run_round(state, theta, delta, read_dropouts, write_dropouts, verify)
        except InvalidInputError as e:
            raise type(e)(f"Round {state.t + 1}: {e}") from e
        reports.append(report)
        if on_round is not None:
            on_round(report)
    return reports


def closed_form_costs(params: SystemParams, s_r: int, s_w: int) -> Tuple[Fraction, Fraction]:
    """Normalized download and upload cost for s_r read and s_w write dropouts"""
    if s_r < 0 or s_w < 0:
        raise ConfigurationError("Dropout counts must be non-negative")
    if s_r >= params.S_r_thresh:
        raise InfeasibleReadError(f"s_r={s_r} >= read-dropout threshold {params.S_r_thresh}")
    if s_w >= params.S_w_thresh:
        raise InfeasibleWriteError(f"s_w={s_w} >= write-dropout threshold {params.S_w_thresh}")
    return (
        Fraction(params.N - s_r, params.S_r_thresh - s_r),
        Fraction(params.N - s_w, params.S_w_thresh - s_w),
    )


def cost_table(params: SystemParams, sr_values: Iterable[int], sw_values: Iterable[int]) -> pd.DataFrame:
    """(D, U) for every dropout pair; infeasible pairs are kept and marked"""
    rows = []
    for s_r in sr_values:
        for s_w in sw_values:
            try:
                D, U = closed_form_costs(params, s_r, s_w)
            except InvalidInputError:
                rows.append({"s_r": s_r, "s_w": s_w, "feasible": False,
                             "D": None, "U": None, "D_decimal": None, "U_decimal": None})
                continue
            rows.append({"s_r": s_r, "s_w": s_w, "feasible": True,
                         "D": D, "U": U, "D_decimal": decimal_text(D), "U_decimal": decimal_text(U)})
    return pd.DataFrame(rows, columns=["s_r", "s_w", "feasible", "D", "U", "D_decimal", "U_decimal"])


def tradeoff_sweep(N: int, T: int, X_delta: int, K_c: int = 1,
                   X_values: Optional[Iterable[int]] = None) -> pd.DataFrame:
    """Dropout-free (D, U) across X; infeasible X values are left out"""
    if X_values is None:
        X_values = range(1, N + 1)
    rows = []
    for X in X_values:
        try:
            S_r_thresh, S_w_thresh = thresholds(N, X, T, X_delta, K_c)
        except InvalidInputError:
            continue
        D = Fraction(N, S_r_thresh)
        U = Fraction(N, S_w_thresh)
        rows.append({"X": X, "S_r_thresh": S_r_thresh, "S_w_thresh": S_w_thresh,
                     "D": D, "U": U, "total": D + U,
                     "D_decimal": decimal_text(D), "U_decimal": decimal_text(U)})
    table = pd.DataFrame(rows, columns=["X", "S_r_thresh", "S_w_thresh", "D", "U", "total",
                                        "D_decimal", "U_decimal"])
    if not table.empty:
        best = min(table["total"])
        table["balanced"] = table["total"] == best
    return table


def _verify_round(state: SimulationState, updated: Dict[int, ServerStorage], new_mirror: Database,
                  retrieved: FieldElement, theta: int, rp: RoundParams) -> None:
    params = state.params
    if not bool(np.all(retrieved == state.mirror.entries[theta - 1])):
        raise InvariantViolation("retrieval-mismatch", f"round {rp.t}, theta={theta}")
    for m in rp.write_dropouts:
        if updated[m] is not state.states[m] or not updated[m].same_as(state.states[m]):
            raise InvariantViolation("write-dropout-modified", f"server {m} in round {rp.t}")
    if not decode_database(updated.values(), params).equals(new_mirror):
        raise InvariantViolation("mirror-mismatch", f"round {rp.t}")
    if not check_consistency(list(updated.values()), params):
        raise InvariantViolation("storage-structure", f"round {rp.t}")
