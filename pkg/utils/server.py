"""
Server side of a round: packer, unpacker and null-shaper constants, answers
and the storage update.

All constants are diagonal, so they are kept as (N, J, K_c) arrays of scalars.
Each *_at helper evaluates a constant at an arbitrary point, which is what the
alignment checks in the audit module rely on.
"""
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from .client import Answer, ReadQuery, WriteIncrement
from .codec import ServerStorage
from .errors import DimensionError, DropoutMisuseError, InvalidInputError
from .field import FieldElement
from .params import RoundParams, SystemParams

logger = structlog.get_logger()


@dataclass(eq=False)
class PackerConstants:
    values: FieldElement


@dataclass(eq=False)
class UnpackerConstants:
    values: FieldElement


@dataclass(eq=False)
class NullShaperConstants:
    values: FieldElement
    write_dropouts: Tuple[int, ...] = ()


def packer_at(params: SystemParams, alpha: FieldElement) -> FieldElement:
    """prod_{i' != i} (alpha - f[j, i']) / (f[j, i] - f[j, i']), shape (J, K_c)"""
    ctx = params.field
    poles = params.poles
    out = ctx.ones((params.J, params.K_c))
    for i in range(params.K_c):
        for other in range(params.K_c):
            if other == i:
                continue
            out[:, i] = out[:, i] * (alpha - poles[:, other]) / (poles[:, i] - poles[:, other])
    return out


def unpacker_at(params: SystemParams, rp: RoundParams, alpha: FieldElement) -> FieldElement:
    """prod over the rest of j's write window of (alpha - f[j', i]) / (f[j, i] - f[j', i])"""
    ctx = params.field
    windows = params.poles.reshape(rp.num_w, rp.R_w, params.K_c)
    out = ctx.ones((rp.num_w, rp.R_w, params.K_c))
    for r in range(rp.R_w):
        for other in range(rp.R_w):
            if other == r:
                continue
            num = alpha - windows[:, other, :]
            den = windows[:, r, :] - windows[:, other, :]
            out[:, r, :] = out[:, r, :] * num / den
    return out.reshape(params.J, params.K_c)


def null_shaper_at(params: SystemParams, write_dropouts: Sequence[int],
                   alpha: FieldElement) -> FieldElement:
    """prod_{m in S_w} (alpha - alpha_m) / (f[j, i] - alpha_m); all ones when S_w is empty"""
    out = params.field.ones((params.J, params.K_c))
    for m in write_dropouts:
        alpha_m = params.alpha(m)
        out = out * (alpha - alpha_m) / (params.poles - alpha_m)
    return out


def build_packer(params: SystemParams, rp: RoundParams) -> PackerConstants:
    values = params.field.zeros((params.N, params.J, params.K_c))
    for n in range(1, params.N + 1):
        values[n - 1] = packer_at(params, params.alpha(n))
    return PackerConstants(values)


def build_unpacker(params: SystemParams, rp: RoundParams) -> UnpackerConstants:
    values = params.field.zeros((params.N, params.J, params.K_c))
    for n in range(1, params.N + 1):
        values[n - 1] = unpacker_at(params, rp, params.alpha(n))
    return UnpackerConstants(values)


def build_null_shaper(params: SystemParams, write_dropouts: Sequence[int]) -> NullShaperConstants:
    dropouts = tuple(sorted(int(m) for m in write_dropouts))
    values = params.field.zeros((params.N, params.J, params.K_c))
    for n in range(1, params.N + 1):
        values[n - 1] = null_shaper_at(params, dropouts, params.alpha(n))
    return NullShaperConstants(values, dropouts)


def compute_answer(storage: ServerStorage, query: ReadQuery, packer: PackerConstants,
                   rp: RoundParams) -> Answer:
    """Packed inner products of stored blocks with the expanded query"""
    n = storage.server_index
    if query.server_index != n:
        raise InvalidInputError(f"Query for server {query.server_index} given to server {n}")
    if n in rp.read_dropouts:
        raise DropoutMisuseError(f"Server {n} is a read dropout in round {rp.t}")

    J, K = storage.blocks.shape
    K_c, mu, _ = query.components.shape
    if packer.values.shape[1:] != (J, K_c):
        raise DimensionError(f"Packer shape {packer.values.shape} does not match storage")

    # Row j of the expanded query is compact row j mod mu.
    periods = storage.blocks.reshape(J // mu, mu, K)
    values = type(storage.blocks).Zeros((rp.num_r, K_c))
    for i in range(K_c):
        inner = (periods * query.components[i][np.newaxis, :, :]).sum(axis=2).reshape(J)
        weighted = inner * packer.values[n - 1, :, i]
        values[:, i] = weighted.reshape(rp.num_r, rp.R_r).sum(axis=1)
    return Answer(n, values, symbols_read=int(storage.blocks.size))


def apply_update(storage: ServerStorage, increment: WriteIncrement, query: ReadQuery,
                 unpacker: UnpackerConstants, null_shaper: NullShaperConstants,
                 rp: RoundParams) -> ServerStorage:
    """Return the updated state; the input state is left untouched"""
    n = storage.server_index
    if n in rp.write_dropouts:
        raise DropoutMisuseError(f"Server {n} is a write dropout in round {rp.t}")
    if increment.server_index != n or query.server_index != n:
        raise InvalidInputError(
            f"Update for server {n} got increment {increment.server_index} and query {query.server_index}"
        )

    J, K = storage.blocks.shape
    K_c, mu, _ = query.components.shape
    spread = increment.deltas[np.arange(J) // rp.R_w]
    coeff = null_shaper.values[n - 1] * unpacker.values[n - 1] * spread
    blocks = storage.blocks
    for i in range(K_c):
        scale = coeff[:, i].reshape(J // mu, mu)[:, :, np.newaxis]
        blocks = blocks + (scale * query.components[i][np.newaxis, :, :]).reshape(J, K)
    return ServerStorage(n, blocks)


def answer_all(states: Dict[int, ServerStorage], queries: Dict[int, ReadQuery],
               packer: PackerConstants, rp: RoundParams,
               max_workers: Optional[int] = None) -> List[Answer]:
    """Answers from every read-available server, in server order"""
    servers = rp.read_available
    results: Dict[int, Answer] = {}
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_server = {
            executor.submit(compute_answer, states[n], queries[n], packer, rp): n
            for n in servers
        }
        for future in as_completed(future_to_server):
            results[future_to_server[future]] = future.result()
    return [results[n] for n in servers]


def update_all(states: Dict[int, ServerStorage], increments: Dict[int, WriteIncrement],
               queries: Dict[int, ReadQuery], unpacker: UnpackerConstants,
               null_shaper: NullShaperConstants, rp: RoundParams,
               max_workers: Optional[int] = None) -> Dict[int, ServerStorage]:
    """New states for every write-available server; others are returned unchanged"""
    updated = dict(states)
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_server = {
            executor.submit(apply_update, states[n], increments[n], queries[n],
                            unpacker, null_shaper, rp): n
            for n in rp.write_available
        }
        for future in as_completed(future_to_server):
            updated[future_to_server[future]] = future.result()
    logger.debug("Updates applied", t=rp.t, servers=len(rp.write_available))
    return updated
