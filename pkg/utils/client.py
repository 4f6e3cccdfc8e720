"""
User side of a round: queries, increments and answer decoding.

Queries and increments are produced for all N servers; the simulator decides
which of them are actually transmitted.
"""
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import structlog

from .errors import (
    DimensionError,
    DropoutMisuseError,
    InsufficientSharesError,
    InvalidInputError,
    InvariantViolation,
    SingularMatrixError,
)
from .field import FieldElement
from .params import RoundParams, SystemParams

logger = structlog.get_logger()


@dataclass(eq=False)
class QueryNoise:
    """Fresh user randomness for queries, shape (mu, K_c, T, K)"""
    Ztilde: FieldElement


@dataclass(eq=False)
class IncrementNoise:
    """Fresh user randomness for increments, shape (num_w, K_c, X_delta)"""
    values: FieldElement


@dataclass(eq=False)
class ReadQuery:
    """Compact query for one server: K_c components of mu rows of K symbols"""
    server_index: int
    components: FieldElement

    @property
    def symbol_count(self) -> int:
        return int(self.components.size)

    def expand(self, J: int) -> FieldElement:
        """Full (K_c, J, K) form; row j repeats compact row j mod mu"""
        mu = self.components.shape[1]
        return self.components[:, np.arange(J) % mu, :]


@dataclass(eq=False)
class WriteIncrement:
    """Coded increment for one server, shape (num_w, K_c)"""
    server_index: int
    deltas: FieldElement

    @property
    def symbol_count(self) -> int:
        return int(self.deltas.size)


@dataclass(eq=False)
class Answer:
    """One server's answer, shape (num_r, K_c)"""
    server_index: int
    values: FieldElement
    symbols_read: int = 0

    @property
    def symbol_count(self) -> int:
        return int(self.values.size)


def random_query_noise(params: SystemParams, rng: np.random.Generator) -> QueryNoise:
    return QueryNoise(params.field.random((params.mu, params.K_c, params.T, params.K), rng))


def random_increment_noise(params: SystemParams, rp: RoundParams,
                           rng: np.random.Generator) -> IncrementNoise:
    return IncrementNoise(params.field.random((rp.num_w, params.K_c, params.X_delta), rng))


def unit_vector(params: SystemParams, theta: int) -> FieldElement:
    if not 1 <= theta <= params.K:
        raise InvalidInputError(f"theta={theta} outside submodels 1..{params.K}")
    e = params.field.zeros(params.K)
    e[theta - 1] = 1
    return e


def query_rows(params: SystemParams, theta: int, alpha: FieldElement,
               noise: FieldElement) -> FieldElement:
    """
    Compact query evaluated at one point.

    Row u of component i is e_theta + (alpha - f[u, i]) * sum_s alpha^s Ztilde[u, i, s].

    Returns:
        (K_c, mu, K) array
    """
    ctx = params.field
    e = unit_vector(params, theta)
    vander = ctx.powers(alpha, noise.shape[2])
    masked = ctx.zeros((params.mu, params.K_c, params.K))
    for s in range(noise.shape[2]):
        masked = masked + noise[:, :, s, :] * vander[s]
    gaps = alpha - params.poles[:params.mu]
    rows = masked * gaps[:, :, np.newaxis] + e
    return rows.transpose(1, 0, 2)


def gen_read_query(theta: int, params: SystemParams, noise: QueryNoise) -> List[ReadQuery]:
    """Compact queries for every server"""
    expected = (params.mu, params.K_c, params.T, params.K)
    if noise.Ztilde.shape != expected:
        raise DimensionError(f"Query noise shape {noise.Ztilde.shape} != {expected}")
    return [
        ReadQuery(n, query_rows(params, theta, params.alpha(n), noise.Ztilde))
        for n in range(1, params.N + 1)
    ]


def increment_values(params: SystemParams, rp: RoundParams, delta_view: FieldElement,
                     alpha: FieldElement, noise: FieldElement) -> FieldElement:
    """
    Coded increment at one point.

    Args:
        delta_view: (J, K_c) increment, [j, i] = delta[i + K_c*j]
        noise: (num_w, K_c, X_delta)

    Returns:
        (num_w, K_c) array
    """
    ctx = params.field
    cauchy = np.reciprocal(alpha - params.poles)
    packed = (delta_view * cauchy).reshape(rp.num_w, rp.R_w, params.K_c).sum(axis=1)
    vander = ctx.powers(alpha, noise.shape[2])
    for x in range(noise.shape[2]):
        packed = packed + noise[:, :, x] * vander[x]
    return packed


def gen_increment(delta: FieldElement, rp: RoundParams, params: SystemParams,
                  noise: IncrementNoise) -> List[WriteIncrement]:
    """Coded increments for every server"""
    delta = params.field.array(delta)
    if delta.shape != (params.L,):
        raise DimensionError(f"Increment has shape {delta.shape}, expected ({params.L},)")
    expected = (rp.num_w, params.K_c, params.X_delta)
    if noise.values.shape != expected:
        raise DimensionError(f"Increment noise shape {noise.values.shape} != {expected}")

    delta_view = delta.reshape(params.J, params.K_c)
    return [
        WriteIncrement(n, increment_values(params, rp, delta_view, params.alpha(n), noise.values))
        for n in range(1, params.N + 1)
    ]


def interference_width(params: SystemParams) -> int:
    """Vandermonde terms carrying interference in every answer"""
    return params.X + params.T + params.K_c - 1


def read_decode_matrix(params: SystemParams, servers: Sequence[int],
                       window_poles: FieldElement) -> FieldElement:
    """Cauchy columns for the window's poles, then Vandermonde columns"""
    ctx = params.field
    alphas = params.alphas[np.asarray(servers, dtype=np.int64) - 1]
    R = window_poles.size
    M = ctx.zeros((len(servers), R + interference_width(params)))
    M[:, :R] = np.reciprocal(alphas[:, np.newaxis] - window_poles[np.newaxis, :])
    M[:, R:] = ctx.powers(alphas, interference_width(params))
    return M


def decode_answers(answers: Sequence[Answer], theta: int, rp: RoundParams,
                   params: SystemParams) -> FieldElement:
    """Recover the length-L submodel theta from the read-available servers' answers"""
    unit_vector(params, theta)
    by_server: Dict[int, Answer] = {a.server_index: a for a in answers}
    dropped = sorted(set(by_server) & set(rp.read_dropouts))
    if dropped:
        raise DropoutMisuseError(f"Answers from read-dropout servers {dropped}")
    missing = sorted(set(rp.read_available) - set(by_server))
    if missing:
        raise InsufficientSharesError(f"Missing answers from servers {missing}")

    servers = list(rp.read_available)
    if len(servers) != rp.R_r + interference_width(params):
        raise InvariantViolation("read-system-square", f"{len(servers)} answers for {rp.R_r} unknowns")

    Y = params.field.zeros((len(servers), rp.num_r, params.K_c))
    for row, n in enumerate(servers):
        values = by_server[n].values
        if values.shape != (rp.num_r, params.K_c):
            raise DimensionError(f"Answer from server {n} has shape {values.shape}")
        Y[row] = values

    result = params.field.zeros((params.J, params.K_c))
    offsets = np.arange(rp.R_r)
    for i in range(params.K_c):
        groups: Dict[Tuple[int, ...], List[int]] = {}
        for ell in range(rp.num_r):
            key = tuple(params.pole_index[ell * rp.R_r:(ell + 1) * rp.R_r, i].tolist())
            groups.setdefault(key, []).append(ell)
        for key, ells in groups.items():
            M = read_decode_matrix(params, servers, params.ftilde[list(key)])
            try:
                M_inv = params.field.inverse(M)
            except SingularMatrixError as e:
                raise InvariantViolation("read-decode-singular", str(e)) from e
            ells = np.asarray(ells)
            desired = M_inv[:rp.R_r] @ Y[:, ells, i]
            rows = ells[np.newaxis, :] * rp.R_r + offsets[:, np.newaxis]
            result[rows, i] = desired

    logger.debug("Answers decoded", theta=theta, windows=rp.num_r, servers=len(servers))
    return result.reshape(params.L)
