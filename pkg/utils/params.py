"""
Scheme parameters: raw configuration, derived constants and per-round values.

Evaluation points are fixed: alpha_n = n for servers n = 1..N and the pole
candidates are ftilde_u = N + u for u = 1..max(mu, K_c). Server indices are
1-based everywhere in the public API; block and column indices are 0-based.
"""
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np
import structlog

from .errors import (
    ConfigurationError,
    FieldTooSmallError,
    InfeasibleReadError,
    InfeasibleWriteError,
    InvariantViolation,
)
from .field import FieldContext, FieldElement, smallest_prime_at_least

logger = structlog.get_logger()

CONFIG_KEYS = ("N", "K", "X", "T", "X_delta", "K_c", "xi", "q", "seed")


@dataclass(frozen=True)
class RawConfig:
    """User-facing configuration as read from a JSON document"""
    N: int
    K: int
    X: int
    T: int
    X_delta: int
    K_c: int = 1
    xi: int = 1
    q: Optional[int] = None
    seed: int = 0

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RawConfig":
        from .validators import ConfigValidator

        result = ConfigValidator().validate_config(data)
        if not result.valid:
            raise ConfigurationError("; ".join(result.errors))
        for warning in result.warnings:
            logger.warning("Configuration warning", detail=warning)
        return cls(**result.cleaned)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if data["q"] is None:
            del data["q"]
        return data


@dataclass(frozen=True, eq=False)
class SystemParams:
    """Static scheme configuration plus every derived constant"""
    N: int
    K: int
    X: int
    T: int
    X_delta: int
    K_c: int
    xi: int
    q: int
    seed: int
    field: FieldContext
    S_r_thresh: int
    S_w_thresh: int
    mu: int
    J: int
    L: int
    alphas: FieldElement
    ftilde: FieldElement
    pole_index: np.ndarray
    poles: FieldElement

    @property
    def recovery_threshold(self) -> int:
        """Servers needed to decode the whole database"""
        return self.K_c + self.X

    @property
    def eta(self) -> Fraction:
        return storage_efficiency(self)

    def alpha(self, n: int) -> FieldElement:
        return self.alphas[n - 1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "N": self.N, "K": self.K, "X": self.X, "T": self.T,
            "X_delta": self.X_delta, "K_c": self.K_c, "xi": self.xi,
            "q": self.q, "seed": self.seed,
            "S_r_thresh": self.S_r_thresh, "S_w_thresh": self.S_w_thresh,
            "mu": self.mu, "J": self.J, "L": self.L,
            "eta": str(self.eta),
            "alphas": self.field.to_ints(self.alphas).tolist(),
            "ftilde": self.field.to_ints(self.ftilde).tolist(),
        }


@dataclass(frozen=True)
class RoundParams:
    """Quantities fixed by one round's dropout sets"""
    t: int
    read_dropouts: Tuple[int, ...]
    write_dropouts: Tuple[int, ...]
    R_r: int
    R_w: int
    num_r: int
    num_w: int
    N: int = field(repr=False, default=0)

    @property
    def read_available(self) -> Tuple[int, ...]:
        dropped = set(self.read_dropouts)
        return tuple(n for n in range(1, self.N + 1) if n not in dropped)

    @property
    def write_available(self) -> Tuple[int, ...]:
        dropped = set(self.write_dropouts)
        return tuple(n for n in range(1, self.N + 1) if n not in dropped)

    def read_window(self, ell: int) -> range:
        return range(ell * self.R_r, (ell + 1) * self.R_r)

    def write_window(self, ell: int) -> range:
        return range(ell * self.R_w, (ell + 1) * self.R_w)

    def read_window_of(self, j: int) -> int:
        return j // self.R_r

    def write_window_of(self, j: int) -> int:
        return j // self.R_w


def thresholds(N: int, X: int, T: int, X_delta: int, K_c: int) -> Tuple[int, int]:
    """Read and write dropout thresholds, validated for feasibility"""
    if X < X_delta + T:
        raise InfeasibleWriteError(
            f"X={X} < X_delta+T={X_delta + T}: increments cannot be aligned"
        )
    if N < K_c + X + T:
        raise InfeasibleReadError(f"N={N} < K_c+X+T={K_c + X + T}: answers cannot be decoded")
    return N - (K_c + X + T - 1), X - (X_delta + T - 1)


def window_lcm(S_r_thresh: int, S_w_thresh: int) -> int:
    return math.lcm(*range(1, max(S_r_thresh, S_w_thresh) + 1))


def pole_assignment(mu: int, K_c: int, J: int) -> np.ndarray:
    """
    Cyclic pole table as 0-based indices into ftilde.

    With mu >= K_c the base block is the first K_c columns of the mu x mu
    left-circulant matrix; otherwise the first mu rows of the K_c x K_c
    right-circulant matrix. Row j of the table is base row j mod mu.
    """
    if mu >= K_c:
        base = np.array([[(r - c) % mu for c in range(K_c)] for r in range(mu)], dtype=np.int64)
    else:
        base = np.array([[(c - r) % K_c for c in range(K_c)] for r in range(mu)], dtype=np.int64)
    return base[np.arange(J) % mu]


def check_pole_properties(pole_index: np.ndarray, mu: int) -> None:
    """Distinct poles within every row and within every window of mu consecutive rows"""
    J = pole_index.shape[0]
    for j in range(J):
        row = pole_index[j]
        if len(set(row.tolist())) != row.size:
            raise InvariantViolation("pole-row-distinct", f"row {j} repeats a pole")
    span = min(mu, J)
    for start in range(J - span + 1):
        window = pole_index[start:start + span]
        for c in range(window.shape[1]):
            column = window[:, c].tolist()
            if len(set(column)) != len(column):
                raise InvariantViolation(
                    "pole-window-distinct", f"rows {start}..{start + span - 1} column {c}"
                )


def derive(raw: RawConfig) -> SystemParams:
    """Validate a raw configuration and derive every scheme constant"""
    for name in ("N", "K", "X", "T", "K_c", "xi"):
        if getattr(raw, name) < 1:
            raise ConfigurationError(f"{name} must be >= 1, got {getattr(raw, name)}")
    if raw.X_delta < 0:
        raise ConfigurationError(f"X_delta must be >= 0, got {raw.X_delta}")

    S_r_thresh, S_w_thresh = thresholds(raw.N, raw.X, raw.T, raw.X_delta, raw.K_c)
    mu = max(S_r_thresh, S_w_thresh)
    J = raw.xi * window_lcm(S_r_thresh, S_w_thresh)
    L = J * raw.K_c

    pole_count = max(mu, raw.K_c)
    needed = raw.N + pole_count
    q = raw.q if raw.q is not None else smallest_prime_at_least(needed)
    if q < needed:
        raise FieldTooSmallError(f"q={q} < N+max(mu,K_c)={needed}")
    ctx = FieldContext(q)

    alphas = ctx.array(np.arange(1, raw.N + 1))
    ftilde = ctx.array(np.arange(raw.N + 1, raw.N + pole_count + 1))
    pole_index = pole_assignment(mu, raw.K_c, J)
    # Table is periodic in mu, so two periods cover every window.
    check_pole_properties(pole_index[:min(J, 2 * mu)], mu)
    poles = ftilde[pole_index]

    params = SystemParams(
        N=raw.N, K=raw.K, X=raw.X, T=raw.T, X_delta=raw.X_delta, K_c=raw.K_c,
        xi=raw.xi, q=q, seed=raw.seed, field=ctx,
        S_r_thresh=S_r_thresh, S_w_thresh=S_w_thresh, mu=mu, J=J, L=L,
        alphas=alphas, ftilde=ftilde, pole_index=pole_index, poles=poles,
    )
    logger.debug("Parameters derived", N=raw.N, q=q, mu=mu, J=J, L=L,
                 S_r_thresh=S_r_thresh, S_w_thresh=S_w_thresh)
    return params


def nearest_valid_length(L: int, base: int) -> int:
    return max(base, ((2 * L + base) // (2 * base)) * base)


def from_target_length(raw: RawConfig, L: int) -> SystemParams:
    """Derive parameters for a requested submodel length L, choosing xi"""
    S_r_thresh, S_w_thresh = thresholds(raw.N, raw.X, raw.T, raw.X_delta, raw.K_c)
    base = raw.K_c * window_lcm(S_r_thresh, S_w_thresh)
    if L < 1 or L % base:
        raise ConfigurationError(
            f"L={L} is not a positive multiple of K_c*lcm={base}; "
            f"nearest valid L is {nearest_valid_length(L, base)}"
        )
    return derive(replace(raw, xi=L // base))


def round_params(params: SystemParams, t: int,
                 read_dropouts: Iterable[int] = (),
                 write_dropouts: Iterable[int] = ()) -> RoundParams:
    """Per-round window sizes and counts for the given dropout sets"""
    read = _server_set(params, read_dropouts, "read")
    write = _server_set(params, write_dropouts, "write")
    if len(read) >= params.S_r_thresh:
        raise InfeasibleReadError(
            f"|S_r|={len(read)} >= read-dropout threshold {params.S_r_thresh}"
        )
    if len(write) >= params.S_w_thresh:
        raise InfeasibleWriteError(
            f"|S_w|={len(write)} >= write-dropout threshold {params.S_w_thresh}"
        )
    R_r = params.S_r_thresh - len(read)
    R_w = params.S_w_thresh - len(write)
    return RoundParams(
        t=t, read_dropouts=read, write_dropouts=write,
        R_r=R_r, R_w=R_w, num_r=params.J // R_r, num_w=params.J // R_w, N=params.N,
    )


def storage_efficiency(params: SystemParams) -> Fraction:
    return Fraction(params.K_c, params.N)


def _server_set(params: SystemParams, servers: Iterable[int], phase: str) -> Tuple[int, ...]:
    servers = [int(n) for n in servers]
    if len(set(servers)) != len(servers):
        raise ConfigurationError(f"Duplicate server in {phase} dropouts: {servers}")
    bad = [n for n in servers if not 1 <= n <= params.N]
    if bad:
        raise ConfigurationError(f"{phase} dropouts {bad} outside servers 1..{params.N}")
    return tuple(sorted(servers))
