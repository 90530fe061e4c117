"""
Scheme parameters, the running weight state and the two-step expert sampler.

All weights are kept as natural logarithms.  Under Hamming distortion the
per-letter weight is ``log lambda[x, y] = eta * n_t(x) * P(y|x)``; for a
general distortion measure the encoder-dependent form
``-eta * sum_{x' in cell(x)} n_t(x') P(y|x') rho(x', x)`` is used instead.
Both differ from ``exp(-eta * cost)`` only by a factor common to every
expert, so they induce the same sampling law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .core import ChannelModel, DistortionMeasure, InputError, draw_index, log_normalize
from .experts import DecoderTable, PartitionEncoder, code_lengths_per_symbol


def _log2(count) -> float:
    if isinstance(count, int):
        return math.log2(count)
    return float(np.log2(count))


def _round_block(l_raw: float, n: int) -> int:
    return int(min(max(math.floor(l_raw + 0.5), 1), n))


@dataclass(frozen=True)
class SchemeParams:
    n: int
    l: int
    eta: float
    M: int
    log2_experts: float
    B: float = 1.0
    R: float | None = None
    delta: float = 0.0
    Btilde: float | None = None
    l_raw: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.l < 1 or (self.n >= 1 and self.l > self.n):
            raise InputError(f"block length {self.l} outside [1, n={self.n}]")
        if not self.eta > 0:
            raise InputError("eta must be positive")

    @property
    def K(self) -> int:
        return -(-self.n // self.l) if self.n else 0

    def blocks(self):
        """Yield ``(start, stop)`` of every block; the last one may be short."""
        for start in range(0, self.n, self.l):
            yield start, min(start + self.l, self.n)

    def describe(self) -> dict:
        d = {"n": self.n, "l": self.l, "K": self.K, "eta": self.eta, "M": self.M,
             "log2_experts": self.log2_experts, "B": self.B}
        if self.R is not None:
            d["R"] = self.R
        if self.Btilde is not None:
            d["delta"] = self.delta
            d["Btilde"] = self.Btilde
        return d


def fixed_rate_params(num_experts, n: int, R: float, B: float = 1.0, M: int | None = None,
                      log2_experts: float | None = None) -> SchemeParams:
    """``l = 2 (log|A| n / R^2)^(1/3)``, ``eta = (8 log|A| / (l B^2 n))^(1/2)``, base-2 logs."""
    la = _log2(num_experts) if log2_experts is None else float(log2_experts)
    if la < 1.0 - 1e-12 or n < 1 or R <= 0 or B <= 0:
        raise InputError(f"degenerate parameters: |A|={num_experts}, n={n}, R={R}, B={B}")
    l_raw = 2.0 * (la * n / R ** 2) ** (1.0 / 3.0)
    l = _round_block(l_raw, n)
    eta = math.sqrt(8.0 * la / (l * B ** 2 * n))
    M = M if M is not None else max(2, round(2 ** R))
    return SchemeParams(n=n, l=l, eta=eta, M=M, log2_experts=la, B=B, R=R, l_raw=l_raw)


def variable_rate_params(num_experts, n: int, B: float, delta: float, M: int,
                         log2_experts: float | None = None) -> SchemeParams:
    """``l = 2 (log|A| n B^2 / Bt^2)^(1/3)``, ``eta = (8 log|A| / (l Bt^2 n))^(1/2)``,
    with ``Bt = B + delta (M - 1)`` the largest single-symbol Lagrangian cost."""
    la = _log2(num_experts) if log2_experts is None else float(log2_experts)
    if la < 1.0 - 1e-12 or n < 1 or B <= 0 or delta < 0 or M < 2:
        raise InputError(f"degenerate parameters: |A|={num_experts}, n={n}, B={B}, "
                         f"delta={delta}, M={M}")
    bt = B + delta * (M - 1)
    l_raw = 2.0 * (la * n * B ** 2 / bt ** 2) ** (1.0 / 3.0)
    l = _round_block(l_raw, n)
    eta = math.sqrt(8.0 * la / (l * bt ** 2 * n))
    return SchemeParams(n=n, l=l, eta=eta, M=M, log2_experts=la, B=B, delta=delta,
                        Btilde=bt, l_raw=l_raw)


def lossless_params(num_codes, n: int, M: int, l: int | None = None,
                    log2_codes: float | None = None) -> SchemeParams:
    """Block length is free here (default ``ceil(log2 n)``); eta as for the
    Lagrangian scheme with zero distortion, unit ``delta`` and ``Bt = M - 1``."""
    la = _log2(num_codes) if log2_codes is None else float(log2_codes)
    if n < 1 or M < 2:
        raise InputError(f"degenerate parameters: n={n}, M={M}")
    if l is None:
        l = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    l = min(max(int(l), 1), n)
    bt = float(M - 1)
    eta = math.sqrt(8.0 * la / (l * bt ** 2 * n)) if la > 0 else 1.0
    return SchemeParams(n=n, l=l, eta=eta, M=M, log2_experts=la, B=bt, delta=1.0,
                        Btilde=bt, l_raw=float(l))


def single_expert_params(n: int, M: int, R: float | None = None, B: float = 1.0,
                         delta: float = 0.0, Btilde: float | None = None) -> SchemeParams:
    """A one-element reference set needs no learning: one block, nominal eta."""
    return SchemeParams(n=n, l=max(n, 1), eta=1.0, M=M, log2_experts=0.0, B=B, R=R,
                        delta=delta, Btilde=Btilde, l_raw=float(max(n, 1)))


class WeightState:
    """Counts ``n_t(x)`` and the log-weights derived from them.

    ``log_lambda`` is updated incrementally and always equals
    ``eta * counts[:, None] * P`` up to rounding.  Variable-rate encoders of an
    explicit set register themselves with ``track_gamma`` so that their
    ``log gamma`` is maintained alongside.
    """

    def __init__(self, channel: ChannelModel, eta: float, rho: DistortionMeasure | None = None):
        self.channel = channel
        self.eta = float(eta)
        self.rho = None if rho is None or rho.is_hamming else rho
        self.counts = np.zeros(channel.size, dtype=np.int64)
        self.log_lambda = np.zeros((channel.size, channel.side_size))
        self.log_gamma: dict[Hashable, float] = {}
        self._gamma_lengths: dict[Hashable, tuple[np.ndarray, float]] = {}
        self.t = 0

    @property
    def size(self) -> int:
        return self.channel.size

    @property
    def side_size(self) -> int:
        return self.channel.side_size

    def track_gamma(self, key: Hashable, e: PartitionEncoder, lengths: Sequence[int],
                    delta: float) -> None:
        per = code_lengths_per_symbol(e, lengths).astype(float)
        self._gamma_lengths[key] = (per, float(delta))
        self.log_gamma[key] = -self.eta * delta * float(self.counts @ per)

    def update(self, block: Sequence[int]) -> "WeightState":
        block = np.asarray(block, dtype=np.int64)
        if block.size == 0:
            raise InputError("cannot update with an empty block")
        c = np.bincount(block, minlength=self.size)
        if len(c) > self.size:
            raise InputError("block contains symbols outside the alphabet")
        self.counts += c
        self.log_lambda += self.eta * c[:, None] * self.channel.matrix
        for key, (per, delta) in self._gamma_lengths.items():
            self.log_gamma[key] -= self.eta * delta * float(c @ per)
        self.t += int(block.size)
        return self

    def recomputed_log_lambda(self) -> np.ndarray:
        return self.eta * self.counts[:, None] * self.channel.matrix

    def copy(self) -> "WeightState":
        other = WeightState(self.channel, self.eta)
        other.rho = self.rho
        other.counts = self.counts.copy()
        other.log_lambda = self.log_lambda.copy()
        other.log_gamma = dict(self.log_gamma)
        other._gamma_lengths = dict(self._gamma_lengths)
        other.t = self.t
        return other


def update_counts(state: WeightState, block: Sequence[int]) -> WeightState:
    return state.update(block)


def _column_lse(w: np.ndarray) -> np.ndarray:
    """Column-wise log-sum-exp (weights here are always finite)."""
    m = w.max(axis=0)
    return m + np.log(np.exp(w - m).sum(axis=0))


def cell_log_weights(members: Sequence[int], state: WeightState,
                     rho: DistortionMeasure | None = None) -> np.ndarray:
    """Log-weights of every reconstruction in a cell: rows follow ``members``, columns ``y``."""
    rho = state.rho if rho is None else (None if rho.is_hamming else rho)
    m = np.asarray(members, dtype=np.int64)
    if rho is None:
        return state.log_lambda[m]
    c = state.counts[m, None] * state.channel.matrix[m]
    return -state.eta * (rho.table[np.ix_(m, m)].T @ c)


def generalized_lambda(x: int, y: int, e: PartitionEncoder, state: WeightState,
                       rho: DistortionMeasure) -> float:
    """``-eta * sum_{x' in cell(x)} n_t(x') P(y|x') rho(x', x)`` (log-domain)."""
    m = np.asarray(e.members[e.cells[x]], dtype=np.int64)
    P = state.channel.matrix
    return float(-state.eta * np.sum(state.counts[m] * P[m, y] * rho.table[m, x]))


def encoder_weight_F(e: PartitionEncoder, state: WeightState,
                     rho: DistortionMeasure | None = None) -> float:
    """``log F_e = sum_z sum_y log sum_{x: e(x)=z} lambda[x, y]``."""
    total = 0.0
    for m in e.members:
        total += float(_column_lse(cell_log_weights(m, state, rho)).sum())
    return total


def gamma(e: PartitionEncoder, lengths: Sequence[int], state: WeightState, delta: float) -> float:
    """``log gamma_e = -eta * delta * sum_x n_t(x) l(e(x))``."""
    per = code_lengths_per_symbol(e, lengths)
    return -state.eta * delta * float(state.counts @ per)


def encoder_weight_F_LC(e: PartitionEncoder, lengths: Sequence[int], state: WeightState,
                        delta: float, rho: DistortionMeasure | None = None) -> float:
    return gamma(e, lengths, state, delta) + encoder_weight_F(e, state, rho)


def sample_encoder_direct(encoders: Sequence, weights: Sequence[float],
                          rng: np.random.Generator) -> int:
    if len(encoders) == 0 or len(encoders) != len(weights):
        raise InputError("need equally long, nonempty encoder and weight lists")
    probs = log_normalize(np.asarray(weights, dtype=float))
    return draw_index(probs, rng.random())


def decoder_cell_probs(e: PartitionEncoder, state: WeightState,
                       rho: DistortionMeasure | None = None) -> list[np.ndarray]:
    """Per cell ``z``: array ``(|m_z|, |Y|)`` of ``Pr{d(z, y) = x}``."""
    out = []
    for m in e.members:
        w = cell_log_weights(m, state, rho)
        p = np.exp(w - w.max(axis=0, keepdims=True))
        out.append(p / p.sum(axis=0, keepdims=True))
    return out


def sample_decoder(e: PartitionEncoder, state: WeightState, rng: np.random.Generator,
                   rho: DistortionMeasure | None = None) -> DecoderTable:
    """Draw every ``d(z, y)`` independently; one uniform per cell, row-major in ``(z, y)``."""
    side = state.side_size
    u = rng.random(e.M * side).reshape(e.M, side)
    table = np.empty((e.M, side), dtype=np.int64)
    for z, (m, p) in enumerate(zip(e.members, decoder_cell_probs(e, state, rho))):
        if len(m) == 1:
            table[z] = m[0]
            continue
        cdf = np.cumsum(p, axis=0)
        idx = (cdf <= u[z] * cdf[-1]).sum(axis=0)
        # a zero-probability member is never selected
        idx = np.minimum(idx, len(m) - 1)
        table[z] = np.asarray(m)[idx]
    return DecoderTable(table)


def decoder_log_prob(e: PartitionEncoder, d: DecoderTable, state: WeightState,
                     rho: DistortionMeasure | None = None) -> float:
    """``log Pr{decoder = d | encoder = e}`` under the cell-wise sampler."""
    total = 0.0
    for z, (m, p) in enumerate(zip(e.members, decoder_cell_probs(e, state, rho))):
        pos = {x: i for i, x in enumerate(m)}
        rows = [pos[int(x)] for x in d.table[z]]
        total += float(np.log(p[rows, np.arange(d.table.shape[1])]).sum())
    return total


def expert_log_weight(e: PartitionEncoder, d: DecoderTable, state: WeightState,
                      lengths: Sequence[int] | None = None, delta: float = 0.0,
                      rho: DistortionMeasure | None = None) -> float:
    """``log(lambda_(e,d) * gamma_e)`` in the state's weight convention."""
    total = 0.0
    for z, m in enumerate(e.members):
        w = cell_log_weights(m, state, rho)
        pos = {x: i for i, x in enumerate(m)}
        rows = [pos[int(x)] for x in d.table[z]]
        total += float(w[rows, np.arange(d.table.shape[1])].sum())
    if lengths is not None:
        total += gamma(e, lengths, state, delta)
    return total
