"""
Length sets, Kraft sums, canonical prefix codebooks and the packed bitstream.

Bits are ``uint8`` arrays of zeros and ones, most significant bit of each
codeword first.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import InputError

MAGIC = b"WZVR"


class DecodeError(ValueError):
    def __init__(self, msg: str, position: int):
        super().__init__(f"{msg} at bit {position}")
        self.position = position


def kraft_sum(lengths: Sequence[int]) -> Fraction:
    if any(int(v) < 1 for v in lengths):
        raise InputError(f"codeword lengths must be positive, got {tuple(lengths)}")
    return sum((Fraction(1, 2 ** int(v)) for v in lengths), Fraction(0))


def is_complete(lengths: Sequence[int]) -> bool:
    return len(lengths) > 0 and kraft_sum(lengths) == 1


def is_huffman_valid(lengths: Sequence[int], max_length: int | None = None) -> bool:
    if not is_complete(lengths):
        return False
    return max_length is None or max(lengths) <= max_length


def enumerate_length_sets(M: int, max_length: int) -> list[tuple[int, ...]]:
    """Brute force: all ordered ``(l_1..l_M)`` in ``{1..max_length}^M`` with Kraft sum 1."""
    return [ls for ls in itertools.product(range(1, max_length + 1), repeat=M)
            if sum(2.0 ** (max_length - v) for v in ls) == 2.0 ** max_length]


@dataclass(frozen=True)
class Codebook:
    codewords: tuple[str, ...]

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.codewords)

    @cached_property
    def _values(self) -> np.ndarray:
        return np.array([int(c, 2) for c in self.codewords], dtype=np.int64)

    @cached_property
    def _lookup(self) -> dict[tuple[int, int], int]:
        return {(len(c), int(c, 2)): i for i, c in enumerate(self.codewords)}

    def is_prefix_free(self) -> bool:
        words = sorted(self.codewords)
        return all(not b.startswith(a) for a, b in zip(words, words[1:]))


def canonical_codebook(lengths: Sequence[int]) -> Codebook:
    lengths = [int(v) for v in lengths]
    if kraft_sum(lengths) > 1:
        raise InputError(f"Kraft sum of {tuple(lengths)} exceeds 1")
    order = sorted(range(len(lengths)), key=lambda i: (lengths[i], i))
    words = [""] * len(lengths)
    code = 0
    prev = lengths[order[0]]
    for rank, i in enumerate(order):
        if rank:
            code = (code + 1) << (lengths[i] - prev)
        prev = lengths[i]
        words[i] = format(code, f"0{lengths[i]}b")
    return Codebook(tuple(words))


def encode_stream(symbols: Sequence[int], book: Codebook) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size == 0:
        return np.zeros(0, dtype=np.uint8)
    if symbols.min() < 0 or symbols.max() >= len(book.codewords):
        raise InputError("symbol index outside the codebook")
    lens = np.asarray(book.lengths, dtype=np.int64)[symbols]
    vals = book._values[symbols]
    width = int(lens.max())
    k = np.arange(width)
    shift = lens[:, None] - 1 - k[None, :]
    bits = (vals[:, None] >> np.maximum(shift, 0)) & 1
    return bits[shift >= 0].astype(np.uint8)


def decode_stream(bits: Sequence[int], book: Codebook, count: int | None = None) -> list[int]:
    """Instantaneous prefix decoding.

    With ``count`` given, stop after that many codewords and ignore the rest;
    ``decode_prefix`` also reports how many bits were read.
    """
    return decode_prefix(bits, book, count)[0]


def decode_prefix(bits: Sequence[int], book: Codebook,
                  count: int | None = None) -> tuple[list[int], int]:
    lookup = book._lookup
    maxlen = max(book.lengths)
    bits = bits.tolist() if isinstance(bits, np.ndarray) else list(bits)
    out: list[int] = []
    pos = 0
    n = len(bits)
    while pos < n and (count is None or len(out) < count):
        code = 0
        start = pos
        for length in range(1, maxlen + 1):
            if pos >= n:
                raise DecodeError("truncated final codeword", start)
            code = (code << 1) | bits[pos]
            pos += 1
            sym = lookup.get((length, code))
            if sym is not None:
                out.append(sym)
                break
        else:
            raise DecodeError("no codeword matches", start)
    return out, pos


def write_bitstream(path: str | Path, bits: np.ndarray) -> None:
    bits = np.asarray(bits, dtype=np.uint8)
    Path(path).write_bytes(MAGIC + struct.pack("<Q", len(bits)) + np.packbits(bits).tobytes())


def read_bitstream(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise InputError(f"{path}: bad magic {raw[:4]!r}")
    (nbits,) = struct.unpack("<Q", raw[4:12])
    packed = np.frombuffer(raw[12:], dtype=np.uint8)
    if len(packed) * 8 < nbits:
        raise InputError(f"{path}: stream holds fewer than {nbits} bits")
    return np.unpackbits(packed)[:nbits]

