"""
Coded storage: encoding, whole-database decoding and structural checks.

Block j of server n holds
    sum_i W[:, j, i] / (alpha_n - f[j, i]) + sum_x alpha_n^x Z[j, x, :]
where W[:, j, i] is column i + K_c*j of the K x L database. The decoder is a
test oracle; users never reconstruct the whole database.
"""
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import structlog

from .errors import DimensionError, InsufficientSharesError, InvariantViolation, SingularMatrixError
from .field import FieldElement
from .params import SystemParams

logger = structlog.get_logger()


@dataclass(eq=False)
class Database:
    """Plaintext K x L submodel matrix (the mirror oracle)"""
    entries: FieldElement

    def block_view(self, J: int, K_c: int) -> FieldElement:
        """View as (K, J, K_c): [k, j, i] = entries[k, i + K_c*j]"""
        return self.entries.reshape(self.entries.shape[0], J, K_c)

    def row(self, theta: int) -> FieldElement:
        return self.entries[theta - 1].copy()

    def copy(self) -> "Database":
        return Database(self.entries.copy())

    def equals(self, other: "Database") -> bool:
        return self.entries.shape == other.entries.shape and bool(np.all(self.entries == other.entries))


@dataclass(eq=False)
class StorageNoise:
    """Storage randomness Z with shape (J, X, K)"""
    Z: FieldElement


@dataclass(eq=False)
class ServerStorage:
    """Coded state of one server: J blocks of K symbols"""
    server_index: int
    blocks: FieldElement

    def copy(self) -> "ServerStorage":
        return ServerStorage(self.server_index, self.blocks.copy())

    def same_as(self, other: "ServerStorage") -> bool:
        return (
            self.server_index == other.server_index
            and self.blocks.shape == other.blocks.shape
            and bool(np.all(self.blocks == other.blocks))
        )

    @property
    def symbol_count(self) -> int:
        return int(self.blocks.size)


def check_database(db: Database, params: SystemParams) -> None:
    if db.entries.shape != (params.K, params.L):
        raise DimensionError(f"Database shape {db.entries.shape} != (K, L)=({params.K}, {params.L})")


def random_database(params: SystemParams, rng: np.random.Generator) -> Database:
    return Database(params.field.random((params.K, params.L), rng))


def random_storage_noise(params: SystemParams, rng: np.random.Generator) -> StorageNoise:
    return StorageNoise(params.field.random((params.J, params.X, params.K), rng))


def cauchy_coefficients(params: SystemParams, alpha: FieldElement) -> FieldElement:
    """1 / (alpha - f[j, i]) for every block and column, shape (J, K_c)"""
    gaps = alpha - params.poles
    if np.any(gaps.view(np.ndarray) == 0):
        raise InvariantViolation("pole-collision", "evaluation point equals a pole")
    return np.reciprocal(gaps)


def encode_block_terms(params: SystemParams, alpha: FieldElement,
                       data: FieldElement, noise: FieldElement) -> FieldElement:
    """
    Evaluate the storage code at one point.

    Args:
        alpha: Evaluation point
        data: (K, J, K_c) database view
        noise: (J, X, K) storage noise

    Returns:
        (J, K) coded blocks
    """
    ctx = params.field
    cauchy = cauchy_coefficients(params, alpha)
    vander = ctx.powers(alpha, noise.shape[1])
    blocks = ctx.zeros((params.J, data.shape[0]))
    for i in range(params.K_c):
        blocks = blocks + data[:, :, i].T * cauchy[:, i][:, np.newaxis]
    for x in range(noise.shape[1]):
        blocks = blocks + noise[:, x, :] * vander[x]
    return blocks


def encode_storage(db: Database, noise: StorageNoise, params: SystemParams) -> List[ServerStorage]:
    """Code the database into N server states"""
    check_database(db, params)
    if noise.Z.shape != (params.J, params.X, params.K):
        raise DimensionError(f"Storage noise shape {noise.Z.shape} != (J, X, K)")

    data = db.block_view(params.J, params.K_c)
    states = [
        ServerStorage(n, encode_block_terms(params, params.alpha(n), data, noise.Z))
        for n in range(1, params.N + 1)
    ]
    logger.debug("Storage encoded", N=params.N, J=params.J, K=params.K)
    return states


def generator_matrix(params: SystemParams, servers: Sequence[int], pole_row: np.ndarray) -> FieldElement:
    """Rows: servers; columns: K_c Cauchy terms for the given pole row, then X Vandermonde terms"""
    ctx = params.field
    alphas = params.alphas[np.asarray(servers, dtype=np.int64) - 1]
    poles = params.ftilde[pole_row]
    cauchy = np.reciprocal(alphas[:, np.newaxis] - poles[np.newaxis, :])
    vander = ctx.powers(alphas, params.X)
    G = ctx.zeros((len(servers), params.K_c + params.X))
    G[:, :params.K_c] = cauchy
    G[:, params.K_c:] = vander
    return G


def _distinct_pole_rows(params: SystemParams) -> Dict[Tuple[int, ...], np.ndarray]:
    """Map each distinct pole row to the blocks that use it"""
    rows = [tuple(r) for r in params.pole_index[:params.mu].tolist()]
    return {row: np.arange(start, params.J, params.mu) for start, row in enumerate(rows)}


def decode_database(storages: Iterable[ServerStorage], params: SystemParams) -> Database:
    """Recover the database from the first K_c+X distinct servers supplied"""
    chosen: Dict[int, ServerStorage] = {}
    for state in storages:
        chosen.setdefault(state.server_index, state)
    needed = params.recovery_threshold
    if len(chosen) < needed:
        raise InsufficientSharesError(f"Need {needed} distinct servers, got {len(chosen)}")

    servers = sorted(chosen)[:needed]
    stacked = params.field.zeros((needed, params.J, params.K))
    for row, n in enumerate(servers):
        stacked[row] = chosen[n].blocks

    entries = params.field.zeros((params.K, params.J, params.K_c))
    for pole_row, blocks in _distinct_pole_rows(params).items():
        G = generator_matrix(params, servers, np.asarray(pole_row))
        try:
            G_inv = params.field.inverse(G)
        except SingularMatrixError as e:
            raise InvariantViolation("decode-matrix-singular", str(e)) from e
        # One right-hand side per (block, coordinate) sharing this pole row
        rhs = stacked[:, blocks, :].reshape(needed, -1)
        solution = (G_inv[:params.K_c] @ rhs).reshape(params.K_c, len(blocks), params.K)
        for i in range(params.K_c):
            entries[:, blocks, i] = solution[i].T

    return Database(entries.reshape(params.K, params.L))


def check_consistency(storages: Sequence[ServerStorage], params: SystemParams) -> bool:
    """True iff every block/coordinate vector across all N servers is a codeword"""
    ordered = sorted(storages, key=lambda s: s.server_index)
    if [s.server_index for s in ordered] != list(range(1, params.N + 1)):
        raise InsufficientSharesError("Consistency check needs all N server states")

    ctx = params.field
    width = params.recovery_threshold
    if width >= params.N:
        return True

    stacked = ctx.zeros((params.N, params.J, params.K))
    for row, state in enumerate(ordered):
        stacked[row] = state.blocks

    servers = list(range(1, params.N + 1))
    for pole_row, blocks in _distinct_pole_rows(params).items():
        G = generator_matrix(params, servers, np.asarray(pole_row))
        # First K_c+X rows are invertible; the rest must follow from them.
        try:
            head_inv = ctx.inverse(G[:width])
        except SingularMatrixError as e:
            raise InvariantViolation("generator-singular", str(e)) from e
        vectors = stacked[:, blocks, :].reshape(params.N, -1)
        predicted = G[width:] @ (head_inv @ vectors[:width])
        if np.any(predicted != vectors[width:]):
            logger.debug("Consistency failure", pole_row=pole_row)
            return False
    return True
