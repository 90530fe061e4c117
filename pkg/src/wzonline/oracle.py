"""
Best expert in hindsight.

For a fixed encoder the cumulative cost separates over the pairs ``(z, y)``,
so the optimal admissible decoder picks, independently per pair, the
reconstruction minimising ``sum_{x in cell z} n(x) P(y|x) rho(x, xhat)``.
Encoders are then compared directly (explicit sets) or by a min-sum pass over
the encoder graph (structured sets).  ``exhaustive_best`` enumerates every
``(e, d)`` pair and is the independent check of both.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import ChannelModel, DistortionMeasure, InputError
from .dag import LayeredDag, subset_frequencies
from .experts import (DecoderTable, PartitionEncoder, code_lengths_per_symbol,
                      count_decoders, iter_decoders, symbol_distortions)

EXHAUSTIVE_LIMIT = 10 ** 6


def cell_costs(members: Sequence[int], counts: np.ndarray, channel: ChannelModel,
               rho: DistortionMeasure) -> np.ndarray:
    """``cost[i, y]`` of reconstructing ``members[i]`` for every source in the cell."""
    m = np.asarray(members, dtype=np.int64)
    c = counts[m, None] * channel.matrix[m]
    return rho.table[np.ix_(m, m)].T @ c


def best_decoder(e: PartitionEncoder, counts: Sequence[int], channel: ChannelModel,
                 rho: DistortionMeasure) -> tuple[DecoderTable, float]:
    counts = np.asarray(counts, dtype=float)
    table = np.empty((e.M, channel.side_size), dtype=np.int64)
    total = 0.0
    for z, m in enumerate(e.members):
        cost = cell_costs(m, counts, channel, rho)
        pick = np.argmin(cost, axis=0)
        table[z] = np.asarray(m)[pick]
        total += float(cost[pick, np.arange(cost.shape[1])].sum())
    return DecoderTable(table), total


def best_in_list(entries: Sequence[tuple[PartitionEncoder, Sequence[int] | None]],
                 counts: Sequence[int], channel: ChannelModel, rho: DistortionMeasure,
                 delta: float = 0.0) -> tuple[int, DecoderTable, float]:
    """Index of the best ``(encoder, lengths)`` entry, its decoder and its cost."""
    counts = np.asarray(counts, dtype=float)
    best = (-1, None, math.inf)
    dec_cache: dict = {}
    for i, (e, lengths) in enumerate(entries):
        if e not in dec_cache:
            dec_cache[e] = best_decoder(e, counts, channel, rho)
        d, cost = dec_cache[e]
        if lengths is not None:
            cost += delta * float(counts @ code_lengths_per_symbol(e, lengths))
        if cost < best[2]:
            best = (i, d, cost)
    return best


def segment_best_costs(counts: Sequence[int], channel: ChannelModel,
                       rho: DistortionMeasure) -> tuple[np.ndarray, dict]:
    """Optimal cost of every interval cell ``(z, zh]`` and its best reconstructions."""
    counts = np.asarray(counts, dtype=float)
    n = len(counts)
    S = np.full((n + 1, n + 1), np.nan)
    picks = {}
    for z in range(n):
        for zh in range(z + 1, n + 1):
            m = list(range(z, zh))
            cost = cell_costs(m, counts, channel, rho)
            pick = np.argmin(cost, axis=0)
            S[z, zh] = float(cost[pick, np.arange(cost.shape[1])].sum())
            picks[(z, zh)] = np.asarray(m)[pick]
    return S, picks


def best_on_graph(dag: LayeredDag, counts: Sequence[int], channel: ChannelModel,
                  rho: DistortionMeasure, delta: float = 0.0):
    """Min-sum over an interval or Lagrangian-cost graph.

    Returns ``(path, decoder, cost)``; ties go to the lowest edge index.
    """
    counts = np.asarray(counts, dtype=float)
    S, picks = segment_best_costs(counts, channel, rho)
    z, zh = dag.labels["z"], dag.labels["zh"]
    edge_cost = S[z, zh]
    if dag.kind == "lc":
        F = subset_frequencies(counts)
        edge_cost = edge_cost + delta * F[z, zh] * dag.labels["length"]
    elif dag.kind != "interval":
        raise InputError(f"cannot search a {dag.kind} graph for WZ experts")
    path = _min_sum_path(dag, edge_cost)
    table = np.stack([picks[(int(z[e]), int(zh[e]))] for e in path])
    return path, DecoderTable(table), float(sum(edge_cost[e] for e in path))


def best_length_set(dag: LayeredDag, counts: Sequence[int]) -> tuple[tuple[int, ...], float]:
    """Shortest total encoded length over a length-set graph."""
    counts = np.asarray(counts, dtype=float)
    edge_cost = counts[dag.src_level] * dag.labels["length"]
    path = _min_sum_path(dag, edge_cost)
    return dag.path_lengths(path), float(sum(edge_cost[e] for e in path))


def _min_sum_path(dag: LayeredDag, edge_cost: np.ndarray) -> tuple[int, ...]:
    C = np.full(dag.num_vertices, math.inf)
    C[dag.sink] = 0.0
    choice = [-1] * dag.num_vertices
    for v in range(dag.sink - 1, -1, -1):
        for e in dag.out_edges(v):
            c = edge_cost[e] + C[dag.dst[e]]
            if c < C[v]:
                C[v] = c
                choice[v] = e
    path = []
    v = dag.source
    while v != dag.sink:
        path.append(choice[v])
        v = int(dag.dst[choice[v]])
    return tuple(path)


def exhaustive_best(entries: Sequence[tuple[PartitionEncoder, Sequence[int] | None]],
                    counts: Sequence[int], channel: ChannelModel, rho: DistortionMeasure,
                    delta: float = 0.0, limit: int = EXHAUSTIVE_LIMIT):
    """Enumerate every admissible ``(e, d)``; refuses sets larger than ``limit``."""
    total = sum(count_decoders(e, channel.side_size) for e, _ in entries)
    if total > limit:
        raise InputError(f"{total} experts exceed the enumeration limit {limit}; "
                         "use the decomposed search instead")
    counts = np.asarray(counts, dtype=float)
    best = (None, None, math.inf)
    for i, (e, lengths) in enumerate(entries):
        rate = 0.0 if lengths is None else delta * float(counts @ code_lengths_per_symbol(e, lengths))
        for d in iter_decoders(e, channel.side_size):
            cost = float(counts @ symbol_distortions(e, d, channel, rho)) + rate
            if cost < best[2]:
                best = (i, d, cost)
    return best


def regret(scheme_cost: float, oracle_cost: float, n: int) -> float:
    """Normalised excess cost ``(scheme - oracle) / n``."""
    return (scheme_cost - oracle_cost) / n if n else 0.0
