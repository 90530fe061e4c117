"""
Alphabets, the side-information channel, distortion measures and log-domain
weight arithmetic.

Symbols are the integers ``0..size-1``.  The ordered position used by the
interval-partition encoders is ``num(x) = x + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-12


class InputError(ValueError):
    """Raised on invalid arguments (bad symbols, malformed matrices, ...)."""


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if int(self.size) < 2:
            raise InputError(f"alphabet size must be >= 2, got {self.size}")

    def num(self, x: int) -> int:
        check_symbol(x, self.size)
        return x + 1

    def __iter__(self):
        return iter(range(self.size))

    def __len__(self):
        return self.size


def check_symbol(x: int, size: int) -> None:
    if not (0 <= int(x) < size):
        raise InputError(f"symbol {x} outside alphabet of size {size}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Discrete memoryless channel ``P(y|x)``; ``matrix[x, y]``.

    Square in the usual case.  A single-column matrix models the absence of
    side information (the decoder's side alphabet has one letter).
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise InputError("channel must be a 2-D matrix")
        if np.any(m < 0) or np.any(m > 1):
            raise InputError("channel entries must lie in [0, 1]")
        rows = m.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > ROW_SUM_TOL):
            raise InputError(f"channel rows must sum to 1, got {rows}")
        object.__setattr__(self, "matrix", _readonly(m))
        object.__setattr__(self, "_cdf", np.cumsum(m, axis=1))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def side_size(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def identity(cls, size: int) -> "ChannelModel":
        return cls(np.eye(size))

    @classmethod
    def uniform(cls, size: int) -> "ChannelModel":
        return cls(np.full((size, size), 1.0 / size))

    @classmethod
    def symmetric(cls, size: int, eps: float) -> "ChannelModel":
        """Keep the symbol w.p. ``1-eps``, else move uniformly to another one.

        For ``size == 2`` this is the binary symmetric channel.
        """
        if not 0.0 <= eps <= 1.0:
            raise InputError(f"crossover must lie in [0, 1], got {eps}")
        m = np.full((size, size), eps / (size - 1))
        np.fill_diagonal(m, 1.0 - eps)
        return cls(m)

    @classmethod
    def no_side_info(cls, size: int) -> "ChannelModel":
        return cls(np.ones((size, 1)))


@dataclass(frozen=True, eq=False)
class DistortionMeasure:
    """Distortion table ``rho[x, xhat]`` with all entries in ``[0, bound]``."""

    table: np.ndarray
    bound: float | None = None
    name: str = field(default="custom")

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise InputError("distortion table must be square")
        if np.any(t < 0):
            raise InputError("distortion must be nonnegative")
        bound = float(t.max()) if self.bound is None else float(self.bound)
        if np.any(t > bound):
            raise InputError(f"distortion entries exceed the bound {bound}")
        object.__setattr__(self, "table", _readonly(t))
        object.__setattr__(self, "bound", bound)

    @property
    def size(self) -> int:
        return self.table.shape[0]

    @property
    def is_hamming(self) -> bool:
        n = self.size
        return bool(np.array_equal(self.table, 1.0 - np.eye(n)))

    def __call__(self, x: int, xhat: int) -> float:
        check_symbol(x, self.size)
        check_symbol(xhat, self.size)
        return float(self.table[x, xhat])

    @classmethod
    def hamming(cls, size: int) -> "DistortionMeasure":
        return cls(1.0 - np.eye(size), bound=1.0, name="hamming")

    @classmethod
    def from_difference(cls, values: Sequence[float], fn: Callable[[float], float],
                        name: str = "difference") -> "DistortionMeasure":
        """``rho(x, xhat) = fn(|v[x] - v[xhat]|)`` over reproduction values ``v``."""
        v = np.asarray(values, dtype=float)
        table = np.vectorize(fn)(np.abs(v[:, None] - v[None, :]))
        return cls(table, name=name)

    def depends_on_difference_only(self) -> bool:
        """True iff ``rho[i, j]`` is a function of ``|i - j|`` alone."""
        n = self.size
        for k in range(n):
            vals = [self.table[i, i + k] for i in range(n - k)]
            vals += [self.table[i + k, i] for i in range(n - k)]
            if not np.allclose(vals, vals[0], rtol=0, atol=1e-15):
                return False
        return True


def hamming(x: int, xhat: int, size: int | None = None) -> float:
    if size is not None:
        check_symbol(x, size)
        check_symbol(xhat, size)
    elif x < 0 or xhat < 0:
        raise InputError("symbols must be nonnegative")
    return 0.0 if x == xhat else 1.0


def expected_symbol_distortion(x: int, reconstruct, channel: ChannelModel,
                               rho: DistortionMeasure) -> float:
    """Expected distortion of source symbol ``x`` over the side information.

    ``reconstruct`` maps a side symbol ``y`` to the reconstruction; it may be a
    callable or a sequence indexed by ``y``.
    """
    check_symbol(x, channel.size)
    row = channel.matrix[x]
    get = reconstruct if callable(reconstruct) else reconstruct.__getitem__
    total = 0.0
    for y, p in enumerate(row):
        if p:
            total += p * rho.table[x, int(get(y))]
    return total


def sample_side_info(x: int, channel: ChannelModel, rng: np.random.Generator) -> int:
    check_symbol(x, channel.size)
    cdf = channel._cdf[x]
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), channel.side_size - 1)


def sample_side_info_seq(xs: np.ndarray, channel: ChannelModel,
                         rng: np.random.Generator) -> np.ndarray:
    """Vectorised ``sample_side_info``; consumes one uniform per symbol, in order."""
    xs = np.asarray(xs, dtype=np.int64)
    u = rng.random(len(xs))
    cdf = channel._cdf[xs]
    ys = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(ys, channel.side_size - 1)


def log_sum_exp(values: Iterable[float]) -> float:
    v = np.fromiter(values, dtype=float)
    if v.size == 0:
        raise InputError("log_sum_exp of an empty sequence")
    if v.size == 1:
        return float(v[0])
    m = v.max()
    if m == -math.inf:
        return -math.inf
    if m == math.inf:
        return math.inf
    return float(m + math.log(np.exp(v - m).sum()))


def log_normalize(logw: np.ndarray) -> np.ndarray:
    """Probabilities ``exp(w - LSE(w))``."""
    logw = np.asarray(logw, dtype=float)
    m = logw.max()
    if m == -math.inf:
        raise InputError("all weights are zero")
    p = np.exp(logw - m)
    return p / p.sum()


def draw_index(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw with a single uniform; never lands on a zero-probability entry."""
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    if i >= len(probs):
        i = int(np.flatnonzero(probs)[-1])
    return i


def load_matrix(path: str | Path) -> np.ndarray:
    """Read the plain-text matrix format: first line ``|X|``, then rows."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise InputError(f"{path}: empty matrix file")
    try:
        size = int(lines[0][0])
        rows = [[float(v) for v in ln] for ln in lines[1:]]
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if len(rows) != size:
        raise InputError(f"{path}: expected {size} rows, found {len(rows)}")
    m = np.array(rows, dtype=float)
    if m.ndim != 2 or m.shape[0] != size:
        raise InputError(f"{path}: ragged rows")
    return m


def save_matrix(path: str | Path, m: np.ndarray) -> None:
    m = np.asarray(m, dtype=float)
    body = "\n".join(" ".join(repr(float(v)) for v in row) for row in m)
    Path(path).write_text(f"{m.shape[0]}\n{body}\n")
