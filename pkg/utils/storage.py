"""
File formats for simulation output.
Storage snapshots are flat little-endian uint64 files; round traces are JSON lines.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import structlog

from .codec import ServerStorage
from .errors import ConfigurationError
from .field import FieldContext
from .params import SystemParams

logger = structlog.get_logger()

HEADER_FIELDS = ("q", "N", "K", "J")
_WORD = np.dtype("<u8")


@dataclass(frozen=True)
class SnapshotHeader:
    q: int
    N: int
    K: int
    J: int

    @property
    def payload_words(self) -> int:
        return self.N * self.J * self.K


def encode_snapshot(states: Sequence[ServerStorage], params: SystemParams) -> bytes:
    """Header {q, N, K, J}, then servers ascending, blocks ascending, K symbols each"""
    ordered = sorted(states, key=lambda s: s.server_index)
    if [s.server_index for s in ordered] != list(range(1, params.N + 1)):
        raise ConfigurationError("Snapshot needs exactly one state per server 1..N")
    header = np.array([params.q, params.N, params.K, params.J], dtype=_WORD)
    body = np.stack([params.field.to_ints(s.blocks) for s in ordered]).astype(_WORD)
    return header.tobytes() + body.tobytes()


def decode_snapshot(data: bytes, ctx: FieldContext = None) -> Tuple[SnapshotHeader, List[ServerStorage]]:
    """Parse a snapshot; the field context is built from the header when not given"""
    if len(data) < 4 * _WORD.itemsize or len(data) % _WORD.itemsize:
        raise ConfigurationError(f"Snapshot of {len(data)} bytes is truncated")
    words = np.frombuffer(data, dtype=_WORD)
    header = SnapshotHeader(*(int(w) for w in words[:4]))
    if words.size - 4 != header.payload_words:
        raise ConfigurationError(
            f"Snapshot body has {words.size - 4} symbols, header promises {header.payload_words}"
        )
    ctx = ctx or FieldContext(header.q)
    if ctx.q != header.q:
        raise ConfigurationError(f"Snapshot field q={header.q} does not match context q={ctx.q}")
    body = words[4:].astype(np.int64)
    if np.any(body >= header.q):
        raise ConfigurationError("Snapshot holds symbols outside the field")
    body = body.reshape(header.N, header.J, header.K)
    states = [ServerStorage(n + 1, ctx.array(body[n])) for n in range(header.N)]
    return header, states


def write_snapshot(path: Union[str, Path], states: Sequence[ServerStorage], params: SystemParams) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_snapshot(states, params))
    logger.info("Snapshot written", path=str(path), N=params.N, J=params.J, K=params.K)
    return path


def read_snapshot(path: Union[str, Path]) -> Tuple[SnapshotHeader, List[ServerStorage]]:
    return decode_snapshot(Path(path).read_bytes())


class TraceWriter:
    """Appends one JSON object per round; equal runs give byte-identical files"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "w", encoding="utf-8")
        self.lines = 0

    def write(self, record: Dict) -> None:
        self._handle.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
        self.lines += 1

    def close(self) -> None:
        if not self._handle.closed:
            self._handle.close()
            logger.debug("Trace closed", path=str(self.path), lines=self.lines)

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


def read_trace(path: Union[str, Path]) -> List[Dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
