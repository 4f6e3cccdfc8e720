"""
Prime field arithmetic on top of galois.

Every protocol value is an element (or array of elements) of GF(q). The
FieldContext hands out galois FieldArrays for one fixed q and refuses to mix
them with arrays from another field.
"""
from typing import Iterable, Sequence, Union

import galois
import numpy as np
import structlog

from .errors import (
    ConfigurationError,
    DimensionError,
    FieldContextError,
    FieldDivisionError,
    SingularMatrixError,
)

logger = structlog.get_logger()

# Desk-scale bound; keeps products inside int64 lookups.
MAX_MODULUS = 2 ** 31

FieldElement = galois.FieldArray
Operand = Union[galois.FieldArray, int, Sequence[int], np.ndarray]


class FieldContext:
    """Arithmetic context for the prime field GF(q)"""

    def __init__(self, q: int):
        if isinstance(q, bool) or not isinstance(q, (int, np.integer)):
            raise ConfigurationError(f"Field modulus must be an integer, got {q!r}")
        q = int(q)
        if q < 2 or q > MAX_MODULUS:
            raise ConfigurationError(f"Field modulus {q} outside [2, 2^31]")
        if not galois.is_prime(q):
            raise ConfigurationError(f"Field modulus {q} is not prime")

        self.q = q
        self.GF = galois.GF(q)
        logger.debug("Field context ready", q=q)

    def __repr__(self) -> str:
        return f"FieldContext(q={self.q})"

    def __eq__(self, other) -> bool:
        return isinstance(other, FieldContext) and other.q == self.q

    def __hash__(self) -> int:
        return hash(("FieldContext", self.q))

    # Construction

    def element(self, value: int) -> FieldElement:
        return self.GF(int(value) % self.q)

    def array(self, values: Operand) -> FieldElement:
        """Reduce integers mod q and wrap them; field arrays pass through after a context check"""
        if isinstance(values, galois.FieldArray):
            return self._check(values)
        raw = np.asarray(values, dtype=np.int64)
        return self.GF(np.mod(raw, self.q))

    def zeros(self, shape) -> FieldElement:
        return self.GF.Zeros(shape)

    def ones(self, shape) -> FieldElement:
        return self.GF.Ones(shape)

    def random(self, shape, rng: np.random.Generator) -> FieldElement:
        """Uniform i.i.d. elements drawn from a seeded numpy Generator"""
        return self.GF(rng.integers(0, self.q, size=shape, dtype=np.int64))

    def to_ints(self, values: FieldElement) -> np.ndarray:
        return np.asarray(self._check(values).view(np.ndarray), dtype=np.int64)

    # Scalar and elementwise operations

    def add(self, a: Operand, b: Operand) -> FieldElement:
        return self._coerce(a) + self._coerce(b)

    def sub(self, a: Operand, b: Operand) -> FieldElement:
        return self._coerce(a) - self._coerce(b)

    def mul(self, a: Operand, b: Operand) -> FieldElement:
        return self._coerce(a) * self._coerce(b)

    def neg(self, a: Operand) -> FieldElement:
        return -self._coerce(a)

    def inv(self, a: Operand) -> FieldElement:
        a = self._coerce(a)
        if np.any(a.view(np.ndarray) == 0):
            raise FieldDivisionError(f"Zero has no inverse in GF({self.q})")
        return np.reciprocal(a)

    def powers(self, x: Operand, count: int) -> FieldElement:
        """Return x^0 .. x^(count-1) stacked on a new trailing axis"""
        x = self._coerce(x)
        out = self.GF.Ones(x.shape + (count,))
        for m in range(1, count):
            out[..., m] = out[..., m - 1] * x
        return out

    # Linear algebra

    def rank(self, A: Operand) -> int:
        A = self._coerce(A)
        if A.ndim != 2:
            raise DimensionError(f"Rank needs a matrix, got shape {A.shape}")
        return int(np.linalg.matrix_rank(A))

    def inverse(self, A: Operand) -> FieldElement:
        A = self._coerce(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"Inverse needs a square matrix, got shape {A.shape}")
        try:
            return np.linalg.inv(A)
        except np.linalg.LinAlgError as e:
            raise SingularMatrixError(f"Singular {A.shape[0]}x{A.shape[0]} matrix over GF({self.q})") from e

    def solve_linear(self, A: Operand, b: Operand) -> FieldElement:
        """Exact solution of A x = b; b may be a vector or a matrix of right-hand sides"""
        A = self._coerce(A)
        b = self._coerce(b)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"solve_linear needs a square matrix, got shape {A.shape}")
        if b.shape[0] != A.shape[0]:
            raise DimensionError(f"Right-hand side has {b.shape[0]} rows, matrix has {A.shape[0]}")
        if self.rank(A) < A.shape[0]:
            raise SingularMatrixError(f"Singular {A.shape[0]}x{A.shape[0]} matrix over GF({self.q})")
        return np.linalg.solve(A, b)

    # Helpers

    def _check(self, values: FieldElement) -> FieldElement:
        if type(values) is not self.GF:
            raise FieldContextError(
                f"Operand from {type(values).__name__} used in GF({self.q}) context"
            )
        return values

    def _coerce(self, value: Operand) -> FieldElement:
        if isinstance(value, galois.FieldArray):
            return self._check(value)
        return self.array(value)


def smallest_prime_at_least(m: int) -> int:
    """Smallest prime >= m"""
    if m <= 2:
        return 2
    return int(galois.next_prime(m - 1))


def distinct(values: Iterable[int]) -> bool:
    values = list(values)
    return len(set(values)) == len(values)
