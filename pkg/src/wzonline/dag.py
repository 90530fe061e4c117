"""
Layered acyclic graphs whose source-to-sink paths enumerate structured
encoder sets, with backward weight pushing and sequential path sampling.

Three builders share one representation:

* ``build_interval_graph``: paths are cut sequences ``0 < z_1 < ... < |X|``;
  an edge ``(z, zh]`` is one cell of an interval partition.
* ``build_huffman_graph``: paths are complete length sets with lengths at most
  ``log2(lam)``; an edge spans a dyadic step ``qh - q = 2^-l`` of [0, 1],
  stored as integer numerators over ``lam``.
* ``build_lc_graph``: both axes at once.

Vertices are ordered by level, edges by source vertex and then label, so the
out-edges of a vertex form one contiguous slice.  Edge log-weights live
outside the graph in a flat array aligned with the edge order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import DistortionMeasure, InputError
from .experts import PartitionEncoder, encoder_from_cuts
from .weighting import WeightState, cell_log_weights

NEG_INF = -math.inf


@dataclass(frozen=True, eq=False)
class LayeredDag:
    kind: str
    M: int
    vertices: tuple            # (coords, level) per vertex id
    src: np.ndarray
    dst: np.ndarray
    out_ptr: np.ndarray        # out-edges of v are out_ptr[v]:out_ptr[v + 1]
    labels: dict
    size: int | None = None    # alphabet size for interval / lc graphs
    lam: int | None = None     # probability-axis resolution for huffman / lc graphs

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return len(self.vertices) - 1

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def out_edges(self, v: int) -> range:
        return range(int(self.out_ptr[v]), int(self.out_ptr[v + 1]))

    def level_edge_range(self, j: int) -> tuple[int, int]:
        """Edges leaving level ``j``."""
        lo, hi = self._level_vertex_range[j]
        return int(self.out_ptr[lo]), int(self.out_ptr[hi])

    @property
    def _level_vertex_range(self) -> list[tuple[int, int]]:
        cached = self.__dict__.get("_lvr")
        if cached is None:
            levels = [lvl for _, lvl in self.vertices]
            cached = []
            for j in range(self.M + 1):
                lo = levels.index(j)
                hi = len(levels) - levels[::-1].index(j)
                cached.append((lo, hi))
            self.__dict__["_lvr"] = cached
        return cached

    @property
    def src_level(self) -> np.ndarray:
        cached = self.__dict__.get("_src_level")
        if cached is None:
            levels = np.array([lvl for _, lvl in self.vertices], dtype=np.int64)
            cached = levels[self.src]
            self.__dict__["_src_level"] = cached
        return cached

    def count_paths(self) -> int:
        cnt = [0] * self.num_vertices
        cnt[self.sink] = 1
        for v in range(self.sink - 1, -1, -1):
            cnt[v] = sum(cnt[int(self.dst[e])] for e in self.out_edges(v))
        return cnt[self.source]

    def paths(self) -> Iterator[tuple[int, ...]]:
        """Depth-first enumeration of all source-to-sink paths as edge tuples."""
        stack: list[tuple[int, tuple[int, ...]]] = [(self.source, ())]
        while stack:
            v, prefix = stack.pop()
            if v == self.sink:
                yield prefix
                continue
            for e in reversed(self.out_edges(v)):
                stack.append((int(self.dst[e]), prefix + (e,)))

    # -- path decoding ------------------------------------------------------

    def path_cuts(self, path: Sequence[int]) -> tuple[int, ...]:
        zh = self.labels["zh"]
        return tuple(int(zh[e]) for e in path[:-1])

    def path_lengths(self, path: Sequence[int]) -> tuple[int, ...]:
        ln = self.labels["length"]
        return tuple(int(ln[e]) for e in path)

    def path_encoder(self, path: Sequence[int]) -> PartitionEncoder:
        return encoder_from_cuts(self.size, self.path_cuts(path))

    def export(self, log_weights: np.ndarray | None = None) -> str:
        """Line-oriented dump: ``V id level coords`` then ``E id src dst labels logw``."""
        lines = [f"# kind={self.kind} M={self.M} size={self.size} lam={self.lam} "
                 f"vertices={self.num_vertices} edges={self.num_edges}"]
        for i, (coords, lvl) in enumerate(self.vertices):
            lines.append(f"V {i} {lvl} {' '.join(map(str, coords))}")
        names = sorted(self.labels)
        for e in range(self.num_edges):
            lab = " ".join(f"{k}={int(self.labels[k][e])}" for k in names)
            w = "" if log_weights is None else f" logw={float(log_weights[e])!r}"
            lines.append(f"E {e} {int(self.src[e])} {int(self.dst[e])} {lab}{w}")
        return "\n".join(lines) + "\n"


def _assemble(kind: str, M: int, succ, start, end, label_names, **meta) -> LayeredDag:
    """Forward expansion from the source, then pruning of dead ends."""
    levels: list[list] = [[start]]
    raw_edges: list[tuple] = []     # (level, src_coords, dst_coords, labels)
    for j in range(M):
        nxt: dict = {}
        for c in levels[j]:
            for d, lab in succ(c, j):
                if j + 1 == M and d != end:
                    continue
                if j + 1 < M and d == end:
                    continue
                nxt[d] = None
                raw_edges.append((j, c, d, lab))
        levels.append(sorted(nxt))
    if end not in levels[M]:
        raise InputError(f"{kind} graph has no complete path for these parameters")
    levels[M] = [end]

    alive = [set() for _ in range(M + 1)]
    alive[M].add(end)
    for j in range(M - 1, -1, -1):
        for lvl, c, d, _ in raw_edges:
            if lvl == j and d in alive[j + 1]:
                alive[j].add(c)
    vertices = [(c, j) for j in range(M + 1) for c in sorted(alive[j])]
    vid = {v: i for i, v in enumerate(vertices)}
    kept = [(vid[(c, lvl)], vid[(d, lvl + 1)], lab) for lvl, c, d, lab in raw_edges
            if c in alive[lvl] and d in alive[lvl + 1]]
    kept.sort(key=lambda t: (t[0], t[2]))
    src = np.array([k[0] for k in kept], dtype=np.int64)
    dst = np.array([k[1] for k in kept], dtype=np.int64)
    labels = {name: np.array([k[2][i] for k in kept], dtype=np.int64)
              for i, name in enumerate(label_names)}
    out_ptr = np.searchsorted(src, np.arange(len(vertices) + 1)).astype(np.int64)
    for a in (src, dst, out_ptr, *labels.values()):
        a.setflags(write=False)
    return LayeredDag(kind=kind, M=M, vertices=tuple(vertices), src=src, dst=dst,
                      out_ptr=out_ptr, labels=labels, **meta)


def _check_lambda(lam: int) -> int:
    lam = int(lam)
    if lam < 2 or lam & (lam - 1):
        raise InputError(f"lambda must be a power of two >= 2, got {lam}")
    return lam.bit_length() - 1


def build_interval_graph(size: int, M: int) -> LayeredDag:
    if not 2 <= M <= size:
        raise InputError(f"need 2 <= M <= |X|, got M={M}, |X|={size}")

    def succ(c, j):
        (z,) = c
        return [((zh,), (z, zh)) for zh in range(z + 1, size + 1)]

    return _assemble("interval", M, succ, (0,), (size,), ("z", "zh"), size=size)


def build_huffman_graph(M: int, lam: int) -> LayeredDag:
    """Length-set graph; ``lam = 2^L`` caps lengths at ``L``.

    Any ``L >= M`` gives the same cleaned path set, since a complete code on
    ``M`` words never needs a codeword longer than ``M - 1``.
    """
    if M < 2:
        raise InputError("need M >= 2")
    L = _check_lambda(lam)
    steps = [(lam >> ell, ell) for ell in range(1, L + 1)]

    def succ(c, j):
        (q,) = c
        return [((q + w,), (q, q + w, ell)) for w, ell in steps if q + w <= lam]

    return _assemble("huffman", M, succ, (0,), (lam,), ("q", "qh", "length"), lam=lam)


def build_lc_graph(size: int, M: int, lam: int) -> LayeredDag:
    if not 2 <= M <= size:
        raise InputError(f"need 2 <= M <= |X|, got M={M}, |X|={size}")
    L = _check_lambda(lam)
    steps = [(lam >> ell, ell) for ell in range(1, L + 1)]

    def succ(c, j):
        z, q = c
        return [((zh, q + w), (z, zh, q, q + w, ell))
                for zh in range(z + 1, size + 1) for w, ell in steps if q + w <= lam]

    return _assemble("lc", M, succ, (0, 0), (size, lam), ("z", "zh", "q", "qh", "length"),
                     size=size, lam=lam)


# -- weight pushing -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WpaValues:
    G: np.ndarray     # log G per vertex

    def __getitem__(self, v: int) -> float:
        return float(self.G[v])

    @property
    def total(self) -> float:
        return float(self.G[0])


def wpa_backward(dag: LayeredDag, log_weights: np.ndarray) -> WpaValues:
    """``G(u) = 1``, ``G(v) = sum_{(v, w)} delta_(v, w) G(w)``, one pass over the edges."""
    w = np.asarray(log_weights, dtype=float)
    if w.shape != (dag.num_edges,):
        raise InputError("need one log-weight per edge")
    G = np.full(dag.num_vertices, NEG_INF)
    G[dag.sink] = 0.0
    for j in range(dag.M - 1, -1, -1):
        a, b = dag.level_edge_range(j)
        lo, hi = dag._level_vertex_range[j]
        vals = w[a:b] + G[dag.dst[a:b]]
        starts = dag.out_ptr[lo:hi] - a
        if np.any(np.diff(np.append(starts, b - a)) <= 0):
            raise InputError("vertex without outgoing edges")
        mx = np.maximum.reduceat(vals, starts)
        safe = np.where(np.isfinite(mx), mx, 0.0)
        s = np.add.reduceat(np.exp(vals - np.repeat(safe, np.diff(np.append(starts, b - a)))),
                            starts)
        with np.errstate(divide="ignore"):
            G[lo:hi] = np.where(np.isfinite(mx), safe + np.log(s), mx)
    return WpaValues(G)


def step_probs(dag: LayeredDag, log_weights: np.ndarray, values: WpaValues, v: int) -> np.ndarray:
    """``P(w | v) = delta_(v, w) G(w) / G(v)`` over the out-edges of ``v``."""
    es = slice(int(dag.out_ptr[v]), int(dag.out_ptr[v + 1]))
    lp = log_weights[es] + values.G[dag.dst[es]] - values.G[v]
    return np.exp(lp)


def sample_path(dag: LayeredDag, log_weights: np.ndarray, values: WpaValues,
                rng: np.random.Generator) -> tuple[int, ...]:
    """Walk from the source choosing each next vertex w.p. ``P(w | v)``; one uniform per step."""
    if not np.isfinite(values.G[dag.source]):
        raise InputError("total path weight is zero")
    v = dag.source
    path = []
    while v != dag.sink:
        p = step_probs(dag, log_weights, values, v)
        cdf = np.cumsum(p)
        k = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(p) - 1)
        while p[k] == 0.0:
            k -= 1
        e = int(dag.out_ptr[v]) + k
        path.append(e)
        v = int(dag.dst[e])
    return tuple(path)


def path_log_weight(log_weights: np.ndarray, path: Sequence[int]) -> float:
    return float(np.sum(np.asarray(log_weights)[list(path)]))


def path_log_prob(dag: LayeredDag, log_weights: np.ndarray, values: WpaValues,
                  path: Sequence[int]) -> float:
    """Product of the sequential step probabilities along ``path``."""
    total = 0.0
    for e in path:
        v = int(dag.src[e])
        total += float(log_weights[e] + values.G[dag.dst[e]] - values.G[v])
    return total


# -- edge weights ---------------------------------------------------------------

def segment_log_weights(state: WeightState, rho: DistortionMeasure | None = None) -> np.ndarray:
    """``D[z, zh] = sum_y log sum_{x in (z, zh]} lambda[x, y]`` for ``0 <= z < zh <= |X|``.

    Entries with ``zh <= z`` are ``nan``.
    """
    n = state.size
    D = np.full((n + 1, n + 1), np.nan)
    general = (state.rho if rho is None else (None if rho.is_hamming else rho)) is not None
    if not general:
        for z in range(n):
            acc = np.logaddexp.accumulate(state.log_lambda[z:], axis=0)
            D[z, z + 1:] = acc.sum(axis=1)
        return D
    for z in range(n):
        for zh in range(z + 1, n + 1):
            w = cell_log_weights(range(z, zh), state, rho)
            D[z, zh] = float(logsumexp(w, axis=0).sum())
    return D


def interval_edge_weight(z: int, zh: int, state: WeightState,
                         rho: DistortionMeasure | None = None) -> float:
    """``log delta = sum_y log sum_{x in (z, zh]} lambda[x, y]`` (1-based cut points)."""
    if not 0 <= z < zh <= state.size:
        raise InputError(f"need 0 <= z < zh <= |X|, got ({z}, {zh})")
    w = cell_log_weights(range(z, zh), state, rho)
    return float(logsumexp(w, axis=0).sum())


def interval_edge_log_weights(dag: LayeredDag, state: WeightState,
                              rho: DistortionMeasure | None = None) -> np.ndarray:
    D = segment_log_weights(state, rho)
    return D[dag.labels["z"], dag.labels["zh"]]


def _dyadic_length(q, qh) -> int:
    step = Fraction(qh) - Fraction(q)
    if step <= 0 or step.numerator != 1 or step.denominator & (step.denominator - 1) \
            or step.denominator < 2:
        raise InputError(f"step {step} is not a negative integer power of two")
    return step.denominator.bit_length() - 1


def huffman_edge_weight(j: int, q, qh, freqs: Sequence[int], eta: float) -> float:
    """``log delta = -eta * f_t(j) * log2(1 / (qh - q))`` for an edge into level ``j``."""
    return -eta * float(freqs[j - 1]) * _dyadic_length(q, qh)


def huffman_edge_log_weights(dag: LayeredDag, counts: Sequence[int], eta: float) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if len(counts) != dag.M:
        raise InputError("need one frequency per codeword")
    return -eta * counts[dag.src_level] * dag.labels["length"]


def subset_frequencies(counts: Sequence[int]) -> np.ndarray:
    """``F[z, zh] = #{i : x_i in (z, zh]}`` from per-symbol counts."""
    cum = np.concatenate(([0], np.cumsum(np.asarray(counts, dtype=np.int64))))
    return cum[None, :] - cum[:, None]


def lc_edge_weight(z: int, zh: int, q, qh, state: WeightState, delta: float,
                   rho: DistortionMeasure | None = None) -> float:
    """``log delta = log delta_(z, zh) - eta * delta * f_t(z, zh) * l(q, qh)``."""
    f = int(state.counts[z:zh].sum())
    return interval_edge_weight(z, zh, state, rho) - state.eta * delta * f * _dyadic_length(q, qh)


def lc_edge_log_weights(dag: LayeredDag, state: WeightState, delta: float,
                        rho: DistortionMeasure | None = None) -> np.ndarray:
    D = segment_log_weights(state, rho)
    F = subset_frequencies(state.counts)
    z, zh = dag.labels["z"], dag.labels["zh"]
    return D[z, zh] - state.eta * delta * F[z, zh] * dag.labels["length"]
