"""
Scalar Wyner-Ziv experts: partition encoders, admissible decoders and their
exact cost evaluators.

An encoder is stored in canonical form: cell labels appear in order of first
occurrence as ``x`` scans the alphabet, so encoders inducing the same partition
are the same object.  A decoder table has one row per cell and one column per
side-information symbol; ``table[z, y]`` must be a member of cell ``z``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .core import ChannelModel, DistortionMeasure, InputError


@dataclass(frozen=True)
class PartitionEncoder:
    cells: tuple[int, ...]

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        if canonical_labels(cells) != cells:
            raise InputError(f"assignment {cells} is not canonical; use canonicalize()")

    @property
    def size(self) -> int:
        return len(self.cells)

    @property
    def M(self) -> int:
        return max(self.cells) + 1

    @cached_property
    def members(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.M)]
        for x, z in enumerate(self.cells):
            out[z].append(x)
        return tuple(tuple(m) for m in out)

    @cached_property
    def cell_array(self) -> np.ndarray:
        a = np.array(self.cells, dtype=np.int64)
        a.setflags(write=False)
        return a

    def __call__(self, x: int) -> int:
        return self.cells[x]

    def is_interval(self) -> bool:
        return all(b >= a for a, b in zip(self.cells, self.cells[1:]))

    def cuts(self) -> tuple[int, ...]:
        """Cut points ``z_1 < ... < z_{M-1}`` (1-based) of an interval encoder."""
        if not self.is_interval():
            raise InputError("encoder is not an interval partition")
        return tuple(x for x in range(1, self.size) if self.cells[x] != self.cells[x - 1])


def canonical_labels(assignment: Sequence[int]) -> tuple[int, ...]:
    relabel: dict[int, int] = {}
    out = []
    for a in assignment:
        if a not in relabel:
            relabel[a] = len(relabel)
        out.append(relabel[a])
    return tuple(out)


def canonicalize(assignment: Sequence[int]) -> PartitionEncoder:
    if len(assignment) < 1:
        raise InputError("assignment must cover the alphabet")
    return PartitionEncoder(canonical_labels(assignment))


def encoder_from_cuts(size: int, cuts: Sequence[int]) -> PartitionEncoder:
    cuts = tuple(int(c) for c in cuts)
    if any(b <= a for a, b in zip(cuts, cuts[1:])):
        raise InputError(f"cuts {cuts} must be strictly increasing")
    if cuts and (cuts[0] < 1 or cuts[-1] > size - 1):
        raise InputError(f"cuts {cuts} must lie in 1..{size - 1}")
    bounds = (0,) + cuts + (size,)
    cells = []
    for i in range(len(bounds) - 1):
        cells += [i] * (bounds[i + 1] - bounds[i])
    return PartitionEncoder(tuple(cells))


def interval_encoders(size: int, M: int) -> list[PartitionEncoder]:
    """All interval encoders with exactly ``M`` cells, in lexicographic cut order."""
    if not 1 <= M <= size:
        raise InputError(f"need 1 <= M <= |X|, got M={M}, |X|={size}")
    return [encoder_from_cuts(size, c) for c in itertools.combinations(range(1, size), M - 1)]


def all_encoders(size: int, M: int) -> list[PartitionEncoder]:
    """Every partition of the alphabet into exactly ``M`` nonempty cells."""
    if not 1 <= M <= size:
        raise InputError(f"need 1 <= M <= |X|, got M={M}, |X|={size}")
    out = []

    def grow(prefix: list[int], used: int):
        if len(prefix) == size:
            if used == M:
                out.append(PartitionEncoder(tuple(prefix)))
            return
        remaining = size - len(prefix)
        if used + remaining < M:
            return
        for c in range(min(used + 1, M)):
            grow(prefix + [c], max(used, c + 1))

    grow([0], 1)
    return out


# -- partition matrices ------------------------------------------------------

def partition_matrix(e: PartitionEncoder) -> np.ndarray:
    c = e.cell_array
    return (c[:, None] == c[None, :]).astype(np.int8)


def validate_partition_matrix(pm) -> bool:
    pm = np.asarray(pm)
    if pm.ndim != 2 or pm.shape[0] != pm.shape[1]:
        raise InputError("partition matrix must be square")
    if not np.isin(pm, (0, 1)).all():
        return False
    b = pm.astype(bool)
    if not b.diagonal().all():
        return False
    if not (b == b.T).all():
        return False
    n = len(b)
    for i in range(n):
        row = b[i]
        ones = np.flatnonzero(row)
        zeros = np.flatnonzero(~row)
        # 1 and 1 => 1 ; 1 and 0 => 0
        if not b[np.ix_(ones, ones)].all():
            return False
        if b[np.ix_(ones, zeros)].any():
            return False
    return True


def encoder_from_matrix(pm) -> PartitionEncoder:
    if not validate_partition_matrix(pm):
        raise InputError("not a valid partition matrix")
    pm = np.asarray(pm, dtype=bool)
    return canonicalize([int(np.argmax(row)) for row in pm])


# -- decoders ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DecoderTable:
    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=np.int64)
        if t.ndim != 2:
            raise InputError("decoder table must be 2-D (cells x side symbols)")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def __call__(self, z: int, y: int) -> int:
        return int(self.table[z, y])

    def __eq__(self, other):
        return isinstance(other, DecoderTable) and np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash(self.table.tobytes())

    def is_admissible(self, e: PartitionEncoder) -> bool:
        if self.table.shape[0] != e.M:
            return False
        if np.any(self.table < 0) or np.any(self.table >= e.size):
            return False
        return bool((e.cell_array[self.table] == np.arange(e.M)[:, None]).all())


def count_decoders(e: PartitionEncoder, side_size: int | None = None) -> int:
    side = e.size if side_size is None else side_size
    return math.prod(len(m) for m in e.members) ** side


def iter_decoders(e: PartitionEncoder, side_size: int | None = None) -> Iterator[DecoderTable]:
    """All admissible decoders, in the order used by ``decoder_rank``."""
    side = e.size if side_size is None else side_size
    choices = [e.members[z] for z in range(e.M) for _ in range(side)]
    for combo in itertools.product(*choices):
        yield DecoderTable(np.array(combo, dtype=np.int64).reshape(e.M, side))


def decoder_rank(e: PartitionEncoder, d: DecoderTable) -> int:
    """Mixed-radix index of ``d`` among the admissible decoders of ``e``.

    Cells ``(z, y)`` are visited row-major with the first one most significant;
    each digit is the position of ``d(z, y)`` within its sorted cell.
    """
    idx = 0
    for z in range(e.M):
        m = e.members[z]
        for y in range(d.table.shape[1]):
            idx = idx * len(m) + m.index(int(d.table[z, y]))
    return idx


def decoder_unrank(e: PartitionEncoder, index: int, side_size: int) -> DecoderTable:
    digits = []
    radices = [len(e.members[z]) for z in range(e.M) for _ in range(side_size)]
    for r in reversed(radices):
        index, dgt = divmod(index, r)
        digits.append(dgt)
    if index:
        raise InputError("decoder index out of range")
    digits.reverse()
    table = np.empty((e.M, side_size), dtype=np.int64)
    k = 0
    for z in range(e.M):
        for y in range(side_size):
            table[z, y] = e.members[z][digits[k]]
            k += 1
    return DecoderTable(table)


# -- experts -----------------------------------------------------------------

@dataclass(frozen=True)
class FixedRateExpert:
    encoder: PartitionEncoder
    decoder: DecoderTable

    def __post_init__(self):
        if not self.decoder.is_admissible(self.encoder):
            raise InputError("decoder is not admissible for the encoder")


@dataclass(frozen=True)
class VariableRateExpert:
    encoder: PartitionEncoder
    lengths: tuple[int, ...]
    decoder: DecoderTable

    def __post_init__(self):
        from .huffman import is_complete

        object.__setattr__(self, "lengths", tuple(int(v) for v in self.lengths))
        if len(self.lengths) != self.encoder.M:
            raise InputError("need one codeword length per cell")
        if not is_complete(self.lengths):
            raise InputError(f"lengths {self.lengths} violate Kraft equality")
        if not self.decoder.is_admissible(self.encoder):
            raise InputError("decoder is not admissible for the encoder")


def symbol_distortions(e: PartitionEncoder, d: DecoderTable, channel: ChannelModel,
                       rho: DistortionMeasure) -> np.ndarray:
    """Per source symbol expected distortion ``sum_y P(y|x) rho(x, d(e(x), y))``."""
    xs = np.arange(e.size)
    recon = d.table[e.cell_array]          # (|X|, |Y|)
    return (channel.matrix * rho.table[xs[:, None], recon]).sum(axis=1)


def cumulative_distortion(expert, x: Sequence[int], channel: ChannelModel,
                          rho: DistortionMeasure) -> float:
    x = np.asarray(x, dtype=np.int64)
    if x.size == 0:
        return 0.0
    per = symbol_distortions(expert.encoder, expert.decoder, channel, rho)
    return float(per[x].sum())


def cumulative_distortion_counts(expert, counts: Sequence[int], channel: ChannelModel,
                                 rho: DistortionMeasure) -> float:
    """Count form: ``sum_x n(x) sum_y P(y|x) rho(x, d(e(x), y))``."""
    counts = np.asarray(counts, dtype=float)
    per = symbol_distortions(expert.encoder, expert.decoder, channel, rho)
    return float(counts @ per)


def code_lengths_per_symbol(e: PartitionEncoder, lengths: Sequence[int]) -> np.ndarray:
    return np.asarray(lengths, dtype=np.int64)[e.cell_array]


def lagrangian_cost(expert: VariableRateExpert, x: Sequence[int], channel: ChannelModel,
                    rho: DistortionMeasure, delta: float) -> float:
    x = np.asarray(x, dtype=np.int64)
    if x.size == 0:
        return 0.0
    bits = code_lengths_per_symbol(expert.encoder, expert.lengths)[x].sum()
    return cumulative_distortion(expert, x, channel, rho) + delta * float(bits)


# -- plain-text form ---------------------------------------------------------

def expert_to_text(encoder: PartitionEncoder, decoder: DecoderTable,
                   lengths: Sequence[int] | None = None) -> str:
    lines = [" ".join(map(str, encoder.cells)),
             "-" if lengths is None else " ".join(map(str, lengths))]
    lines += [" ".join(map(str, row)) for row in decoder.table]
    return "\n".join(lines) + "\n"


def expert_from_text(text: str):
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if len(lines) < 3:
        raise InputError("expert text needs an assignment, a length line and decoder rows")
    enc = PartitionEncoder(tuple(int(v) for v in lines[0].split()))
    dec = DecoderTable(np.array([[int(v) for v in ln.split()] for ln in lines[2:]]))
    if lines[1] == "-":
        return FixedRateExpert(enc, dec)
    return VariableRateExpert(enc, tuple(int(v) for v in lines[1].split()), dec)
