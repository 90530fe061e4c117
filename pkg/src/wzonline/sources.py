"""Test sequence generators.  The coding schemes never see these models, only the symbols."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .core import InputError


def iid_source(n: int, probs: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1) > 1e-9:
        raise InputError("iid source needs a probability vector")
    return rng.choice(len(p), size=n, p=p / p.sum())


def markov_source(n: int, transition, rng: np.random.Generator, start: int = 0) -> np.ndarray:
    """First-order Markov chain; ``transition[a][b] = P(next = b | current = a)``."""
    T = np.asarray(transition, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1] or not np.allclose(T.sum(axis=1), 1):
        raise InputError("Markov source needs a square row-stochastic matrix")
    cdf = np.cumsum(T, axis=1)
    u = rng.random(n)
    out = np.empty(n, dtype=np.int64)
    s = start
    for i in range(n):
        s = min(int(np.searchsorted(cdf[s], u[i] * cdf[s, -1], side="right")), T.shape[0] - 1)
        out[i] = s
    return out


def switching_source(n: int, size: int, segments: int, rng: np.random.Generator,
                     dominance: float = 0.8) -> np.ndarray:
    """Piecewise-iid sequence: ``segments`` equal pieces, each dominated by one symbol.

    Within a piece the dominant symbol appears with probability ``dominance``;
    the rest is uniform over the other symbols.  The dominant symbol changes at
    every switch.
    """
    if segments < 1 or size < 2:
        raise InputError("need at least one segment and two symbols")
    bounds = np.linspace(0, n, segments + 1).astype(np.int64)
    out = np.empty(n, dtype=np.int64)
    prev = -1
    for s in range(segments):
        dom = int(rng.integers(size - 1))
        if prev >= 0 and dom >= prev:
            dom += 1
        elif prev < 0:
            dom = int(rng.integers(size))
        prev = dom
        a, b = bounds[s], bounds[s + 1]
        other = rng.integers(size - 1, size=b - a)
        other = other + (other >= dom)
        out[a:b] = np.where(rng.random(b - a) < dominance, dom, other)
    return out


def file_source(path: str | Path, size: int | None = None) -> np.ndarray:
    """Whitespace-separated integer symbols."""
    text = Path(path).read_text().split()
    try:
        x = np.array([int(t) for t in text], dtype=np.int64)
    except ValueError as exc:
        raise InputError(f"{path}: not a list of integer symbols") from exc
    if size is not None and x.size and (x.min() < 0 or x.max() >= size):
        raise InputError(f"{path}: symbol outside 0..{size - 1}")
    return x


def parse_source(spec: str, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``iid[:p0,p1,...]``, ``markov:<matrix file>``, ``switching[:segments]`` or ``file:<path>``."""
    kind, _, arg = spec.partition(":")
    if kind == "iid":
        probs = [float(v) for v in arg.split(",")] if arg else [1 / size] * size
        if len(probs) != size:
            raise InputError("iid probabilities must list one value per symbol")
        return iid_source(n, probs, rng)
    if kind == "markov":
        from .core import load_matrix
        if not arg:
            raise InputError("markov source needs a matrix file")
        return markov_source(n, load_matrix(arg), rng)
    if kind == "switching":
        return switching_source(n, size, int(arg) if arg else 4, rng)
    if kind == "file":
        return file_source(arg, size)[:n] if n else file_source(arg, size)
    raise InputError(f"unknown source {spec!r}")
