"""
Exact audits of the privacy and security claims, plus a round certifier.

Every observed view is an affine function of the protocol noise, so each
distribution is built the same way: evaluate the view function at zero noise and
at every unit noise vector to get (offset, coefficients), then enumerate all
q^d noise assignments in chunks and tally the resulting views. Views are keyed
by the little-endian uint64 bytes of their symbols.
"""
import itertools
from collections import Counter
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import galois
import numpy as np
import structlog

from config import config

from .client import increment_values, query_rows
from .codec import Database, check_consistency, decode_database, encode_block_terms
from .errors import (
    EnumerationBudgetExceeded,
    InvalidInputError,
    VacuousAuditNotice,
)
from .field import FieldElement
from .params import RoundParams, SystemParams, round_params
from .server import null_shaper_at, packer_at, unpacker_at

logger = structlog.get_logger()

_WORD = np.dtype("<u8")
_PACK_LIMIT = 2 ** 63 - 1
AUDIT_TARGETS = ("privacy", "storage", "increment", "all")

ViewFunction = Callable[[FieldElement], FieldElement]


@dataclass(eq=False)
class ViewDistribution:
    """Exact count of every observed view over all enumerated noise"""
    counts: Dict[bytes, int] = field(default_factory=dict)
    noise_symbols: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def support(self) -> int:
        return len(self.counts)

    def is_uniform(self, expected_support: Optional[int] = None) -> bool:
        if not self.counts:
            return False
        if expected_support is not None and self.support != expected_support:
            return False
        return len(set(self.counts.values())) == 1

    def product(self, other: "ViewDistribution") -> "ViewDistribution":
        """Joint distribution of two independent views; keys are concatenated"""
        counts = {
            a + b: ca * cb
            for a, ca in self.counts.items()
            for b, cb in other.counts.items()
        }
        return ViewDistribution(counts, self.noise_symbols + other.noise_symbols)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ViewDistribution):
            return NotImplemented
        return self.counts == other.counts

    __hash__ = None


@dataclass
class Certificate:
    """Named pass/fail clauses for one round"""
    clauses: Dict[str, bool]
    details: Dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())

    @property
    def failed(self) -> List[str]:
        return [name for name, ok in self.clauses.items() if not ok]

    def to_dict(self) -> Dict:
        return {"passed": self.passed, "clauses": dict(self.clauses), "details": dict(self.details)}


@dataclass
class AuditReport:
    params: Dict
    what: str
    checks: List[Dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def add(self, name: str, passed: bool, **detail) -> None:
        self.checks.append({"name": name, "passed": bool(passed), **detail})
        log = logger.info if passed else logger.warning
        log("Audit check", check=name, passed=bool(passed))

    def to_dict(self) -> Dict:
        return {"passed": self.passed, "what": self.what, "params": self.params, "checks": self.checks}


# Enumeration engine

def check_budget(q: int, noise_symbols: int, budget: Optional[int] = None) -> int:
    budget = config.audit.enumeration_budget if budget is None else budget
    size = q ** noise_symbols
    if size > budget:
        raise EnumerationBudgetExceeded(
            f"Exact enumeration needs q^{noise_symbols} = {size} realizations, budget is {budget}"
        )
    return size


def affine_form(params: SystemParams, view: ViewFunction, noise_symbols: int) -> Tuple[FieldElement, FieldElement]:
    """(offset, coefficients) with view(z) = offset + z @ coefficients"""
    ctx = params.field
    offset = view(ctx.zeros(noise_symbols)).reshape(-1)
    coeff = ctx.zeros((noise_symbols, offset.size))
    for d in range(noise_symbols):
        unit = ctx.zeros(noise_symbols)
        unit[d] = 1
        coeff[d] = view(unit).reshape(-1) - offset
    return offset, coeff


def _tally_chunk(params: SystemParams, offset: FieldElement, coeff: FieldElement,
                 start: int, stop: int) -> Counter:
    q = params.q
    d = coeff.shape[0]
    index = np.arange(start, stop, dtype=np.int64)
    # Most significant digit first, so chunks split the outermost coordinate.
    place = q ** np.arange(d - 1, -1, -1, dtype=np.int64)
    digits = (index[:, np.newaxis] // place[np.newaxis, :]) % q
    views = params.field.array(digits) @ coeff + offset
    symbols = params.field.to_ints(views)
    width = symbols.shape[1]
    if 0 < width and q ** width <= _PACK_LIMIT:
        # One mixed-radix key per row.
        packed = symbols @ (q ** np.arange(width, dtype=np.int64))
        _, first, counts = np.unique(packed, return_index=True, return_counts=True)
        rows = symbols[first]
    else:
        rows, counts = np.unique(symbols, axis=0, return_counts=True)
    return Counter({row.astype(_WORD).tobytes(): int(c) for row, c in zip(rows, counts)})


def enumerate_views(params: SystemParams, view: ViewFunction, noise_symbols: int,
                    budget: Optional[int] = None) -> ViewDistribution:
    """Exact distribution of view(z) over every z in F_q^noise_symbols"""
    size = check_budget(params.q, noise_symbols, budget)
    offset, coeff = affine_form(params, view, noise_symbols)
    if noise_symbols == 0:
        key = params.field.to_ints(offset).astype(_WORD).tobytes()
        return ViewDistribution({key: 1}, 0)

    chunk = max(1, config.audit.chunk_size)
    tally: Counter = Counter()
    with ThreadPoolExecutor(max_workers=config.scheme.max_workers) as executor:
        futures = [
            executor.submit(_tally_chunk, params, offset, coeff, start, min(start + chunk, size))
            for start in range(0, size, chunk)
        ]
        for future in as_completed(futures):
            tally.update(future.result())
    return ViewDistribution(dict(tally), noise_symbols)


def _check_colluders(params: SystemParams, colluders: Sequence[int], size: int, what: str) -> Tuple[int, ...]:
    chosen = tuple(sorted(int(n) for n in colluders))
    if len(set(chosen)) != len(chosen) or any(not 1 <= n <= params.N for n in chosen):
        raise InvalidInputError(f"Colluders {list(colluders)} are not distinct servers in 1..{params.N}")
    if len(chosen) != size:
        raise InvalidInputError(f"{what} audit needs exactly {size} colluders, got {len(chosen)}")
    return chosen


# View functions

def _query_view(params: SystemParams, theta: int, colluders: Sequence[int]) -> Tuple[ViewFunction, int]:
    shape = (params.mu, params.K_c, params.T, params.K)
    d = int(np.prod(shape))

    def view(z: FieldElement) -> FieldElement:
        noise = z.reshape(shape)
        return np.concatenate([
            query_rows(params, theta, params.alpha(n), noise).reshape(-1) for n in colluders
        ])

    return view, d


def _increment_view(params: SystemParams, rp: RoundParams, delta: FieldElement,
                    colluders: Sequence[int]) -> Tuple[ViewFunction, int]:
    shape = (rp.num_w, params.K_c, params.X_delta)
    d = int(np.prod(shape))
    delta_view = params.field.array(delta).reshape(params.J, params.K_c)

    def view(z: FieldElement) -> FieldElement:
        noise = z.reshape(shape)
        return np.concatenate([
            increment_values(params, rp, delta_view, params.alpha(n), noise).reshape(-1)
            for n in colluders
        ])

    return view, d


def _storage_view(params: SystemParams, db: Database, colluders: Sequence[int],
                  blocks: Sequence[int]) -> Tuple[ViewFunction, int]:
    """Colluders' stored blocks; only the noise of the listed blocks is enumerated"""
    data = db.block_view(params.J, params.K_c)
    per_block = params.X * params.K
    d = per_block * len(blocks)

    def view(z: FieldElement) -> FieldElement:
        noise = params.field.zeros((params.J, params.X, params.K))
        noise[list(blocks)] = z.reshape(len(blocks), params.X, params.K)
        coded = [encode_block_terms(params, params.alpha(n), data, noise) for n in colluders]
        # Block-major, then colluder, then coordinate.
        return np.concatenate([
            np.concatenate([c[j] for c in coded]) for j in blocks
        ])

    return view, d


# Distribution operations

def query_view_distribution(theta: int, colluders: Sequence[int], params: SystemParams,
                            budget: Optional[int] = None) -> ViewDistribution:
    """Joint compact queries of T colluders over all query noise"""
    colluders = _check_colluders(params, colluders, params.T, "Query")
    view, d = _query_view(params, theta, colluders)
    return enumerate_views(params, view, d, budget)


def query_history_distribution(thetas: Sequence[int], colluders: Sequence[int], params: SystemParams,
                               budget: Optional[int] = None) -> ViewDistribution:
    """Colluders' queries across two rounds with independent noise"""
    if len(thetas) != 2:
        raise InvalidInputError("History audit covers exactly two rounds")
    colluders = _check_colluders(params, colluders, params.T, "Query")
    first, d = _query_view(params, thetas[0], colluders)
    second, _ = _query_view(params, thetas[1], colluders)

    def view(z: FieldElement) -> FieldElement:
        return np.concatenate([first(z[:d]), second(z[d:])])

    return enumerate_views(params, view, 2 * d, budget)


def storage_view_distribution(db: Database, colluders: Sequence[int], params: SystemParams,
                              budget: Optional[int] = None) -> List[ViewDistribution]:
    """Per-block distributions of X colluders' stored blocks"""
    colluders = _check_colluders(params, colluders, params.X, "Storage")
    return _per_block(params, db, colluders, budget)


def storage_joint_distribution(db: Database, colluders: Sequence[int], params: SystemParams,
                               budget: Optional[int] = None) -> ViewDistribution:
    """All blocks enumerated at once; validates the per-block decomposition"""
    colluders = _check_colluders(params, colluders, params.X, "Storage")
    view, d = _storage_view(params, db, colluders, range(params.J))
    return enumerate_views(params, view, d, budget)


def increment_view_distribution(delta: Sequence[int], colluders: Sequence[int], rp: RoundParams,
                                params: SystemParams, budget: Optional[int] = None) -> ViewDistribution:
    """Coded increments seen by X_delta colluders over all increment noise"""
    if params.X_delta == 0:
        logger.warning("Increment audit is vacuous", X_delta=0)
        raise VacuousAuditNotice("X_delta = 0: increments carry no security claim to verify")
    colluders = _check_colluders(params, colluders, params.X_delta, "Increment")
    view, d = _increment_view(params, rp, delta, colluders)
    return enumerate_views(params, view, d, budget)


def round_view_distribution(theta: int, delta: Sequence[int], colluders: Sequence[int],
                            rp: RoundParams, params: SystemParams,
                            budget: Optional[int] = None) -> ViewDistribution:
    """Queries and increments seen together by at most min(X_delta, T) colluders"""
    limit = min(params.X_delta, params.T)
    colluders = tuple(sorted(int(n) for n in colluders))
    if not 1 <= len(colluders) <= limit:
        raise InvalidInputError(f"Round audit needs 1..{limit} colluders, got {len(colluders)}")
    _check_colluders(params, colluders, len(colluders), "Round")
    queries, d_q = _query_view(params, theta, colluders)
    increments, d_w = _increment_view(params, rp, delta, colluders)

    def view(z: FieldElement) -> FieldElement:
        return np.concatenate([queries(z[:d_q]), increments(z[d_q:])])

    return enumerate_views(params, view, d_q + d_w, budget)


def tightness_check(db: Database, other: Database, colluders: Sequence[int], params: SystemParams,
                    budget: Optional[int] = None) -> bool:
    """True iff X+1 colluders can tell the two databases apart"""
    colluders = _check_colluders(params, colluders, params.X + 1, "Tightness")
    first = _per_block(params, db, colluders, budget)
    second = _per_block(params, other, colluders, budget)
    return any(a != b for a, b in zip(first, second))


def _per_block(params: SystemParams, db: Database, colluders: Sequence[int],
               budget: Optional[int]) -> List[ViewDistribution]:
    check_budget(params.q, params.X * params.K, budget)
    distributions = []
    for j in range(params.J):
        view, d = _storage_view(params, db, colluders, [j])
        distributions.append(enumerate_views(params, view, d, budget))
    return distributions


# Certifier

def certify_round(pre_state, post_state, theta: int, delta: Sequence[int], retrieved: FieldElement,
                  rp: RoundParams) -> Certificate:
    """
    Check one round's artifacts.

    Clauses:
        retrieval: retrieved equals the pre-round mirror row theta
        decode: every (K_c+X)-subset of post-round states decodes to the updated data
        write_dropouts_untouched: write-dropout servers kept their pre-round state
        consistency: post-round states are codewords across all N servers
    """
    params = pre_state.params
    ctx = params.field
    expected = pre_state.mirror.copy()
    expected.entries[theta - 1] = expected.entries[theta - 1] + ctx.array(delta)

    clauses: Dict[str, bool] = {}
    details: Dict[str, str] = {}

    clauses["retrieval"] = bool(np.all(ctx.array(retrieved) == pre_state.mirror.entries[theta - 1]))

    bad_subsets = []
    for subset in itertools.combinations(range(1, params.N + 1), params.recovery_threshold):
        decoded = decode_database([post_state.states[n] for n in subset], params)
        if not decoded.equals(expected):
            bad_subsets.append(list(subset))
    clauses["decode"] = not bad_subsets
    if bad_subsets:
        details["decode"] = f"{len(bad_subsets)} subsets disagree, first {bad_subsets[0]}"

    touched = [m for m in rp.write_dropouts if not post_state.states[m].same_as(pre_state.states[m])]
    clauses["write_dropouts_untouched"] = not touched
    if touched:
        details["write_dropouts_untouched"] = f"servers {touched} changed"

    clauses["consistency"] = check_consistency(post_state.storages, params)

    certificate = Certificate(clauses, details)
    logger.debug("Round certified", t=rp.t, passed=certificate.passed, failed=certificate.failed)
    return certificate


# Interference degree

def observation_points(params: SystemParams) -> FieldElement:
    """Nonzero field points that are not poles"""
    poles = set(params.field.to_ints(params.ftilde).tolist())
    return params.field.array([a for a in range(1, params.q) if a not in poles])


def _terms(x: FieldElement, y: FieldElement) -> int:
    poly = galois.lagrange_poly(x, y)
    return poly.degree + 1 if np.any(poly.coeffs != 0) else 0


def interference_degree(params: SystemParams, rp: RoundParams, theta: int, delta: Sequence[int],
                        query_noise: FieldElement, increment_noise: FieldElement,
                        block: int = 0, component: int = 0) -> int:
    """
    Vandermonde terms left in a server's update once the desired Cauchy term
    Delta[j, i] * e_theta / (alpha - f[j, i]) is removed, observed on coordinate theta.
    """
    ctx = params.field
    points = observation_points(params)
    if points.size <= params.X:
        raise InvalidInputError(f"GF({params.q}) has too few non-pole points to observe degree {params.X}")
    delta_view = ctx.array(delta).reshape(params.J, params.K_c)
    j, i = block, component
    ell = rp.write_window_of(j)
    pole = params.poles[j, i]

    values = ctx.zeros(points.size)
    for idx in range(points.size):
        alpha = points[idx]
        shaped = null_shaper_at(params, rp.write_dropouts, alpha)[j, i] * unpacker_at(params, rp, alpha)[j, i]
        coded = increment_values(params, rp, delta_view, alpha, increment_noise)[ell, i]
        query = query_rows(params, theta, alpha, query_noise)[i, j % params.mu, theta - 1]
        desired = delta_view[j, i] / (alpha - pole)
        values[idx] = shaped * coded * query - desired
    return _terms(points, values)


def answer_interference_degree(params: SystemParams, rp: RoundParams, db: Database, theta: int,
                               storage_noise: FieldElement, query_noise: FieldElement,
                               window: int = 0, component: int = 0) -> int:
    """Vandermonde terms in an answer once the window's desired Cauchy terms are removed"""
    ctx = params.field
    points = observation_points(params)
    bound = params.X + params.T + params.K_c - 1
    if points.size <= bound:
        raise InvalidInputError(f"GF({params.q}) has too few non-pole points to observe degree {bound}")
    data = db.block_view(params.J, params.K_c)
    rows = list(rp.read_window(window))
    i = component

    values = ctx.zeros(points.size)
    for idx in range(points.size):
        alpha = points[idx]
        blocks = encode_block_terms(params, alpha, data, storage_noise)
        query = query_rows(params, theta, alpha, query_noise)[i]
        packer = packer_at(params, alpha)
        total = ctx.element(0)
        for j in rows:
            inner = (blocks[j] * query[j % params.mu]).sum()
            desired = data[theta - 1, j, i] / (alpha - params.poles[j, i])
            total = total + packer[j, i] * inner - desired
        values[idx] = total
    return _terms(points, values)


def update_interference_sweep(params: SystemParams, rng: np.random.Generator,
                              theta: int = 1) -> Dict[Tuple[int, ...], int]:
    """Update interference degree for every admissible write-dropout set"""
    ctx = params.field
    q_noise = ctx.ones((params.mu, params.K_c, params.T, params.K))
    delta = ctx.random(params.L, rng)
    servers = range(1, params.N + 1)
    degrees: Dict[Tuple[int, ...], int] = {}
    for size in range(params.S_w_thresh):
        for write in itertools.combinations(servers, size):
            rp = round_params(params, 1, (), write)
            w_noise = ctx.ones((rp.num_w, params.K_c, params.X_delta))
            degrees[write] = interference_degree(params, rp, theta, delta, q_noise, w_noise)
    logger.debug("Update interference swept", write_sets=len(degrees))
    return degrees


# Suite

def run_audit_suite(params: SystemParams, what: str = "all", seed: Optional[int] = None,
                    budget: Optional[int] = None) -> AuditReport:
    """Run the enumeration audits for one configuration"""
    if what not in AUDIT_TARGETS:
        raise InvalidInputError(f"Unknown audit target {what!r}; expected one of {AUDIT_TARGETS}")
    rng = np.random.default_rng(params.seed if seed is None else seed)
    report = AuditReport(params=params.to_dict(), what=what)
    servers = range(1, params.N + 1)

    if what in ("privacy", "all"):
        _audit_privacy(params, report, servers, budget)
    if what in ("storage", "all"):
        _audit_storage(params, report, servers, rng, budget)
    if what in ("increment", "all"):
        _audit_increment(params, report, servers, rng, budget)

    logger.info("Audit finished", what=what, passed=report.passed, checks=len(report.checks))
    return report


def _audit_privacy(params: SystemParams, report: AuditReport, servers: Iterable[int],
                   budget: Optional[int]) -> None:
    d = params.mu * params.K_c * params.T * params.K
    for colluders in itertools.combinations(servers, params.T):
        reference = query_view_distribution(1, colluders, params, budget)
        same = all(
            query_view_distribution(theta, colluders, params, budget) == reference
            for theta in range(2, params.K + 1)
        )
        report.add("query-privacy", same and reference.is_uniform(params.q ** d),
                   colluders=list(colluders), total=reference.total, support=reference.support)

    try:
        check_budget(params.q, 2 * d, budget)
    except EnumerationBudgetExceeded:
        report.add("query-history", True, skipped="beyond enumeration budget")
        return
    colluders = tuple(range(1, params.T + 1))
    reference = query_history_distribution((1, 1), colluders, params, budget)
    same = all(
        query_history_distribution(pair, colluders, params, budget) == reference
        for pair in itertools.product(range(1, params.K + 1), repeat=2)
    )
    report.add("query-history", same, colluders=list(colluders), total=reference.total)


def _audit_storage(params: SystemParams, report: AuditReport, servers: Iterable[int],
                   rng: np.random.Generator, budget: Optional[int]) -> None:
    servers = list(servers)
    first = Database(params.field.random((params.K, params.L), rng))
    second = Database(params.field.random((params.K, params.L), rng))
    support = params.q ** (params.X * params.K)
    for colluders in itertools.combinations(servers, params.X):
        a = storage_view_distribution(first, colluders, params, budget)
        b = storage_view_distribution(second, colluders, params, budget)
        report.add("storage-security", a == b and all(dist.is_uniform(support) for dist in a),
                   colluders=list(colluders), blocks=len(a), total=a[0].total)

    if params.X + 1 <= params.N:
        zero = Database(params.field.zeros((params.K, params.L)))
        ones = Database(params.field.ones((params.K, params.L)))
        colluders = servers[:params.X + 1]
        report.add("storage-tightness", tightness_check(zero, ones, colluders, params, budget),
                   colluders=colluders)

    try:
        check_budget(params.q, params.J * params.X * params.K, budget)
    except EnumerationBudgetExceeded:
        report.add("storage-decomposition", True, skipped="beyond enumeration budget")
        return
    colluders = servers[:params.X]
    blocks = storage_view_distribution(first, colluders, params, budget)
    product = blocks[0]
    for dist in blocks[1:]:
        product = product.product(dist)
    joint = storage_joint_distribution(first, colluders, params, budget)
    report.add("storage-decomposition", joint == product, total=joint.total)


def _audit_increment(params: SystemParams, report: AuditReport, servers: Iterable[int],
                     rng: np.random.Generator, budget: Optional[int]) -> None:
    rp = round_params(params, 1)
    ctx = params.field
    if params.X_delta == 0:
        logger.warning("Increment audit is vacuous", X_delta=0)
        report.add("increment-security", True, skipped="X_delta = 0, nothing to verify")
    else:
        first = ctx.random(params.L, rng)
        second = ctx.random(params.L, rng)
        support = params.q ** (rp.num_w * params.K_c * params.X_delta)
        for colluders in itertools.combinations(servers, params.X_delta):
            a = increment_view_distribution(first, colluders, rp, params, budget)
            b = increment_view_distribution(second, colluders, rp, params, budget)
            report.add("increment-security", a == b and a.is_uniform(support),
                       colluders=list(colluders), total=a.total)

        limit = min(params.X_delta, params.T)
        colluders = tuple(range(1, limit + 1))
        d = params.mu * params.K_c * params.T * params.K + rp.num_w * params.K_c * params.X_delta
        try:
            check_budget(params.q, d, budget)
        except EnumerationBudgetExceeded:
            report.add("round-view", True, skipped="beyond enumeration budget")
        else:
            reference = round_view_distribution(1, first, colluders, rp, params, budget)
            same = all(
                round_view_distribution(theta, delta, colluders, rp, params, budget) == reference
                for theta in range(1, params.K + 1)
                for delta in (first, second)
            )
            report.add("round-view", same, colluders=list(colluders), total=reference.total)

    sweep = update_interference_sweep(params, rng)
    failing = [list(write) for write, terms in sweep.items()
               if terms > params.X or (params.X_delta >= 1 and terms != params.X)]
    report.add("update-interference", not failing, write_sets=len(sweep), failing=failing,
               bound=params.X)
