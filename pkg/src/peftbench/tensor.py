"""Dense matrix primitives and the deterministic random source.

Every other module moves numbers through these types. Matrices are
immutable, double precision, row-major. All operations are pure; a
SeededRng instance is single-owner and must not be shared across threads.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

# Kronecker results larger than this are almost certainly a misconfiguration.
KRON_ENTRY_CAP = 1 << 24


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class Matrix:
    """Immutable dense float64 matrix, row-major."""

    __slots__ = ("_a",)

    def __init__(self, rows: int, cols: int, data: Iterable[float]):
        if rows <= 0 or cols <= 0:
            raise ShapeError(f"matrix dimensions must be positive, got {rows}x{cols}")
        arr = np.asarray(data, dtype=np.float64).reshape(-1)
        if arr.size != rows * cols:
            raise ShapeError(
                f"data length {arr.size} does not match {rows}x{cols}={rows * cols}"
            )
        arr = arr.reshape(rows, cols).copy()
        arr.setflags(write=False)
        self._a = arr

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Matrix":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.ndim != 2:
            raise ShapeError(f"expected 2-d array, got ndim={a.ndim}")
        m = object.__new__(cls)
        a = a.copy()
        a.setflags(write=False)
        m._a = a
        return m

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "Matrix":
        return cls.from_array(np.asarray(rows, dtype=np.float64))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls.from_array(np.zeros((rows, cols)))

    @classmethod
    def identity(cls, n: int) -> "Matrix":
        return cls.from_array(np.eye(n))

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape

    @property
    def array(self) -> np.ndarray:
        """Read-only 2-d view of the entries."""
        return self._a

    @property
    def data(self) -> np.ndarray:
        """Read-only flat row-major view of the entries."""
        return self._a.reshape(-1)

    def at(self, i: int, j: int) -> float:
        return float(self._a[i, j])

    def to_lists(self) -> list[list[float]]:
        return self._a.tolist()

    def equals(self, other: "Matrix") -> bool:
        return self.shape == other.shape and bool(np.array_equal(self._a, other._a))

    def allclose(self, other: "Matrix", tol: float = 1e-12) -> bool:
        return self.shape == other.shape and bool(
            np.all(np.abs(self._a - other._a) <= tol)
        )

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard matrix product."""
    if a.cols != b.rows:
        raise ShapeError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    return Matrix.from_array(a.array @ b.array)


def kron(a: Matrix, b: Matrix) -> Matrix:
    """Kronecker product: block (i, j) of the result is a[i,j] * b."""
    out_rows = a.rows * b.rows
    out_cols = a.cols * b.cols
    if out_rows * out_cols > KRON_ENTRY_CAP:
        raise ShapeError(
            f"kron result {out_rows}x{out_cols} exceeds the "
            f"{KRON_ENTRY_CAP}-entry cap"
        )
    # a[i,j]*b laid out block-wise via broadcasting.
    blocks = a.array[:, None, :, None] * b.array[None, :, None, :]
    return Matrix.from_array(blocks.reshape(out_rows, out_cols))


def low_rank_product(w_a: Matrix, w_b: Matrix) -> Matrix:
    """Compose two low-rank factors into their (in x out) product.

    The result has rank at most the shared inner dimension.
    """
    return matmul(w_a, w_b)


def add(a: Matrix, b: Matrix) -> Matrix:
    if a.shape != b.shape:
        raise ShapeError(f"cannot add {a.rows}x{a.cols} and {b.rows}x{b.cols}")
    return Matrix.from_array(a.array + b.array)


def scale(a: Matrix, s: float) -> Matrix:
    return Matrix.from_array(a.array * float(s))


def frobenius_distance(a: Matrix, b: Matrix) -> float:
    if a.shape != b.shape:
        raise ShapeError(
            f"cannot compare {a.rows}x{a.cols} and {b.rows}x{b.cols}"
        )
    d = a.array - b.array
    return float(math.sqrt(float(np.sum(d * d))))


_MASK64 = (1 << 64) - 1


class SeededRng:
    """Deterministic 64-bit generator (splitmix64 mixing).

    The mixing constants below are the splitmix64 reference constants and
    are frozen: test fixtures and experiment reproducibility depend on the
    exact draw sequence, so they must never change.
    """

    __slots__ = ("seed", "_state")

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._state = self.seed

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform draw in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Gaussian draw via Box-Muller; consumes exactly two u64 draws."""
        u1 = 1.0 - self.uniform()  # (0, 1], keeps the log finite
        u2 = self.uniform()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def randint(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is negligible for desk-scale n."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return self.next_u64() % n

    def shuffle(self, xs: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(xs) - 1, 0, -1):
            j = self.randint(i + 1)
            xs[i], xs[j] = xs[j], xs[i]

    def choice_index(self, weights: Sequence[float]) -> int:
        """Index drawn proportionally to non-negative weights."""
        total = float(sum(weights))
        if total <= 0.0:
            raise ValueError("weights must have positive total")
        r = self.uniform() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if r < acc:
                return i
        return len(weights) - 1

    def normal_matrix(self, rows: int, cols: int, sigma: float = 1.0) -> Matrix:
        vals = [self.normal(0.0, sigma) for _ in range(rows * cols)]
        return Matrix(rows, cols, vals)
