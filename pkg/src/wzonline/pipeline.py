"""
Block-protocol coding sessions.

Time is cut into blocks of ``l`` symbols.  At the start of each block an
expert ``(e, d)`` is drawn from the exponential-weights law given the past,
the decoder is told which one, and the block is coded with it.  The
variants differ in the reference set and in how the expert is announced:

=====================  ===============================  =========================
variant                encoder set                      announcement
=====================  ===============================  =========================
``fixed-small``        explicit list                    base-M header symbols
``fixed-structured``   interval partitions (graph)      base-M header symbols
``variable-small``     explicit list x length sets      header bits
``variable-lc-graph``  interval x length sets (graph)   header bits
``quantizer``          as lc-graph, no side info        header bits
``lossless-huffman``   length sets (graph), M = |X|     none (shared randomness)
=====================  ===============================  =========================

Randomness is split into independent named streams of the session seed:
``source``, ``channel`` (side information) and ``scheme`` (expert draws).
Within a block the scheme stream is consumed encoder first (one uniform for
an explicit set, one per graph level otherwise) and then one uniform per
decoder cell ``(z, y)`` in row-major order.

Two distortion figures are reported.  ``distortion`` is the expectation over
the side information, which is what the regret bounds speak about;
``realized_distortion`` uses the sampled side information.  During a
fixed-rate header the decoder outputs symbol 0 and is charged its actual
distortion.  In the variable-rate protocol the header bits displace the
leading codewords of the block; every displaced symbol is charged ``B`` in
the expectation figure (its reconstruction is symbol 0 in the realized one).
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bounds import lossless_regret_bound, fixed_rate_regret_bound, variable_rate_regret_bound
from .core import (ChannelModel, DistortionMeasure, InputError, sample_side_info_seq)
from .dag import (LayeredDag, build_huffman_graph, build_interval_graph, build_lc_graph,
                  huffman_edge_log_weights, interval_edge_log_weights, lc_edge_log_weights,
                  path_log_prob, sample_path, wpa_backward)
from .experts import (DecoderTable, PartitionEncoder, all_encoders, code_lengths_per_symbol,
                      count_decoders, decoder_rank, decoder_unrank, symbol_distortions)
from .huffman import canonical_codebook, decode_prefix, decode_stream, encode_stream, is_complete
from .oracle import best_in_list, best_length_set, best_on_graph, regret
from .weighting import (SchemeParams, WeightState, encoder_weight_F, fixed_rate_params,
                        lossless_params, sample_decoder, sample_encoder_direct,
                        single_expert_params, variable_rate_params)

VARIANTS = ("fixed-small", "fixed-structured", "variable-small", "lossless-huffman",
            "variable-lc-graph", "quantizer")
FIXED_VARIANTS = ("fixed-small", "fixed-structured")

_STREAMS = {"source": 1, "channel": 2, "scheme": 3}


class ConfigError(InputError):
    pass


class ProtocolError(RuntimeError):
    pass


class DecodeDivergence(ProtocolError):
    pass


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named component of a session."""
    return np.random.default_rng([int(seed), _STREAMS[name]])


def header_symbols(num_experts: int, M: int) -> int:
    """``ceil(log|A| / log M)``: base-M digits needed to name one of ``num_experts``."""
    h, cap = 0, 1
    while cap < num_experts:
        cap *= M
        h += 1
    return h


def header_bits(num_experts: int) -> int:
    return (int(num_experts) - 1).bit_length() if num_experts > 1 else 0


def to_digits(value: int, base: int, width: int) -> list[int]:
    out = []
    for _ in range(width):
        value, r = divmod(value, base)
        out.append(r)
    if value:
        raise ProtocolError("value does not fit in the header")
    return out[::-1]


def from_digits(digits: Sequence[int], base: int) -> int:
    v = 0
    for d in digits:
        v = v * base + int(d)
    return v


@dataclass(frozen=True)
class Choice:
    key: object                      # entry index (explicit) or edge path (graph)
    encoder: PartitionEncoder
    lengths: tuple | None
    decoder: DecoderTable | None


# -- expert sets ---------------------------------------------------------------

class ExplicitExpertSet:
    """Every admissible decoder of each listed encoder (optionally times length sets)."""

    def __init__(self, encoders: Sequence[PartitionEncoder], side_size: int,
                 length_sets: Sequence[Sequence[int]] | None = None):
        if not encoders:
            raise ConfigError("empty encoder list")
        M = encoders[0].M
        if any(e.M != M for e in encoders):
            raise ConfigError("all encoders must use the same number of cells")
        if length_sets is not None:
            length_sets = [tuple(int(v) for v in ls) for ls in length_sets]
            for ls in length_sets:
                if len(ls) != M or not is_complete(ls):
                    raise ConfigError(f"length set {ls} is not a complete code for M={M}")
        self.M = M
        self.side_size = side_size
        self.variable = length_sets is not None
        self.entries = [(e, ls) for e in encoders for ls in (length_sets or [None])]
        counts = [count_decoders(e, side_size) for e, _ in self.entries]
        self.offsets = [0]
        for c in counts:
            self.offsets.append(self.offsets[-1] + c)
        self.num_experts = self.offsets[-1]
        self.delta = 0.0

    @property
    def log2_size(self) -> float:
        return math.log2(self.num_experts)

    def attach(self, state: WeightState, delta: float = 0.0) -> None:
        self.delta = delta
        if self.variable:
            for i, (e, ls) in enumerate(self.entries):
                state.track_gamma(i, e, ls, delta)

    def encoder_log_weights(self, state: WeightState) -> np.ndarray:
        cache: dict = {}
        out = np.empty(len(self.entries))
        for i, (e, _) in enumerate(self.entries):
            if e not in cache:
                cache[e] = encoder_weight_F(e, state)
            out[i] = cache[e] + (state.log_gamma[i] if self.variable else 0.0)
        return out

    def encoder_log_probs(self, state: WeightState) -> dict:
        w = self.encoder_log_weights(state)
        w = w - np.logaddexp.reduce(w)
        return {i: float(v) for i, v in enumerate(w)}

    def sample(self, state: WeightState, rng: np.random.Generator) -> Choice:
        i = sample_encoder_direct(self.entries, self.encoder_log_weights(state), rng)
        e, ls = self.entries[i]
        return Choice(i, e, ls, sample_decoder(e, state, rng))

    def rank(self, choice: Choice) -> int:
        return self.offsets[choice.key] + decoder_rank(choice.encoder, choice.decoder)

    def unrank(self, index: int) -> Choice:
        if not 0 <= index < self.num_experts:
            raise ProtocolError(f"expert index {index} out of range")
        i = int(np.searchsorted(self.offsets, index, side="right")) - 1
        e, ls = self.entries[i]
        return Choice(i, e, ls, decoder_unrank(e, index - self.offsets[i], self.side_size))

    def best(self, counts, channel, rho, delta) -> tuple[Choice, float]:
        i, d, cost = best_in_list(self.entries, counts, channel, rho, delta)
        e, ls = self.entries[i]
        return Choice(i, e, ls, d), cost


class GraphExpertSet:
    """Experts whose encoders are the source-to-sink paths of an interval or lc graph."""

    def __init__(self, dag: LayeredDag, side_size: int):
        if dag.kind not in ("interval", "lc"):
            raise ConfigError(f"{dag.kind} graph does not describe WZ encoders")
        self.dag = dag
        self.M = dag.M
        self.side_size = side_size
        self.variable = dag.kind == "lc"
        width = (dag.labels["zh"] - dag.labels["z"]).tolist()
        self.mult = [int(w) ** side_size for w in width]
        g = [0] * dag.num_vertices
        g[dag.sink] = 1
        for v in range(dag.sink - 1, -1, -1):
            g[v] = sum(self.mult[e] * g[int(dag.dst[e])] for e in dag.out_edges(v))
        self.paths_weight = g
        self.num_experts = g[dag.source]
        self.delta = 0.0

    @property
    def log2_size(self) -> float:
        return math.log2(self.num_experts)

    def attach(self, state: WeightState, delta: float = 0.0) -> None:
        self.delta = delta

    def edge_log_weights(self, state: WeightState) -> np.ndarray:
        if self.variable:
            return lc_edge_log_weights(self.dag, state, self.delta)
        return interval_edge_log_weights(self.dag, state)

    def _choice(self, path, decoder=None) -> Choice:
        lengths = self.dag.path_lengths(path) if self.variable else None
        return Choice(tuple(path), self.dag.path_encoder(path), lengths, decoder)

    def encoder_log_probs(self, state: WeightState) -> dict:
        w = self.edge_log_weights(state)
        vals = wpa_backward(self.dag, w)
        return {p: path_log_prob(self.dag, w, vals, p) for p in self.dag.paths()}

    def sample(self, state: WeightState, rng: np.random.Generator) -> Choice:
        w = self.edge_log_weights(state)
        path = sample_path(self.dag, w, wpa_backward(self.dag, w), rng)
        c = self._choice(path)
        return Choice(c.key, c.encoder, c.lengths, sample_decoder(c.encoder, state, rng))

    def rank(self, choice: Choice) -> int:
        dag, g = self.dag, self.paths_weight
        idx, pre = 0, 1
        for e in choice.key:
            for e2 in dag.out_edges(int(dag.src[e])):
                if e2 == e:
                    break
                idx += pre * self.mult[e2] * g[int(dag.dst[e2])]
            pre *= self.mult[e]
        return idx + decoder_rank(choice.encoder, choice.decoder)

    def unrank(self, index: int) -> Choice:
        if not 0 <= index < self.num_experts:
            raise ProtocolError(f"expert index {index} out of range")
        dag, g = self.dag, self.paths_weight
        v, pre, path = dag.source, 1, []
        while v != dag.sink:
            for e in dag.out_edges(v):
                size = pre * self.mult[e] * g[int(dag.dst[e])]
                if index < size:
                    break
                index -= size
            path.append(e)
            pre *= self.mult[e]
            v = int(dag.dst[e])
        c = self._choice(path)
        return Choice(c.key, c.encoder, c.lengths,
                      decoder_unrank(c.encoder, index, self.side_size))

    def best(self, counts, channel, rho, delta) -> tuple[Choice, float]:
        path, d, cost = best_on_graph(self.dag, counts, channel, rho, delta)
        c = self._choice(path)
        return Choice(c.key, c.encoder, c.lengths, d), cost


# -- configuration ---------------------------------------------------------------

@dataclass
class SessionConfig:
    variant: str
    channel: ChannelModel
    M: int
    rho: DistortionMeasure | None = None
    encoders: Sequence[PartitionEncoder] | None = None
    length_sets: Sequence[Sequence[int]] | None = None
    lam: int | None = None
    delta: float = 0.0
    seed: int = 0
    block_length: int | None = None
    eta: float | None = None
    verify_decoder: bool = False
    with_oracle: bool = False
    keep_reconstruction: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.rho is None:
            self.rho = DistortionMeasure.hamming(self.size)
        if self.rho.size != self.size:
            raise ConfigError("distortion table and channel disagree on |X|")
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        v = self.variant
        if v in ("fixed-structured", "variable-lc-graph", "quantizer") and not 2 <= self.M <= self.size:
            raise ConfigError(f"need 2 <= M <= |X| for {v}")
        if v == "variable-small" and not self.length_sets:
            raise ConfigError("variable-small needs length sets")
        if v == "lossless-huffman" and self.M != self.size:
            raise ConfigError("lossless coding needs M = |X|")
        if v == "quantizer":
            if self.channel.side_size != 1:
                raise ConfigError("the quantizer variant takes a single-output channel")
            if not self.rho.depends_on_difference_only():
                raise ConfigError("the quantizer variant needs rho(x, xhat) = f(|x - xhat|)")
        if v in ("variable-lc-graph", "quantizer") and self.lam is None:
            self.lam = 2 ** (self.M - 1)

    @property
    def size(self) -> int:
        return self.channel.size

    @property
    def is_fixed_rate(self) -> bool:
        return self.variant in FIXED_VARIANTS

    def describe(self) -> dict:
        d = {"variant": self.variant, "alphabet": self.size, "side_alphabet": self.channel.side_size,
             "M": self.M, "rho": self.rho.name, "delta": self.delta, "seed": self.seed}
        if self.lam is not None:
            d["lambda"] = self.lam
        if self.encoders is not None:
            d["encoders"] = ";".join(",".join(map(str, e.cells)) for e in self.encoders)
        if self.length_sets is not None:
            d["length_sets"] = ";".join(",".join(map(str, ls)) for ls in self.length_sets)
        return d


def build_expert_set(cfg: SessionConfig):
    v, side = cfg.variant, cfg.channel.side_size
    if v in ("fixed-small", "variable-small"):
        encs = cfg.encoders if cfg.encoders is not None else all_encoders(cfg.size, cfg.M)
        for e in encs:
            if e.size != cfg.size or e.M != cfg.M:
                raise ConfigError(f"encoder {e.cells} does not map |X|={cfg.size} onto M={cfg.M}")
        return ExplicitExpertSet(list(encs), side, cfg.length_sets if v == "variable-small" else None)
    if v == "fixed-structured":
        return GraphExpertSet(build_interval_graph(cfg.size, cfg.M), side)
    if v in ("variable-lc-graph", "quantizer"):
        return GraphExpertSet(build_lc_graph(cfg.size, cfg.M, cfg.lam), side)
    raise ConfigError(f"{v} has no WZ expert set")


def default_huffman_lambda(M: int, n: int) -> int:
    """``min(2^(M-1), n)``, rounded down to a power of two and at least 2."""
    cap = min(2 ** (M - 1), max(n, 2))
    return max(2, 1 << (int(cap).bit_length() - 1))


def scheme_params(cfg: SessionConfig, n: int, num_experts: int) -> SchemeParams:
    B = cfg.rho.bound
    if cfg.variant == "lossless-huffman":
        p = lossless_params(num_experts, max(n, 1), cfg.M, l=cfg.block_length)
    elif num_experts <= 1:
        R = math.log2(cfg.M) if cfg.is_fixed_rate else None
        bt = None if cfg.is_fixed_rate else B + cfg.delta * (cfg.M - 1)
        p = single_expert_params(max(n, 1), cfg.M, R=R, B=B, delta=cfg.delta, Btilde=bt)
    elif cfg.is_fixed_rate:
        p = fixed_rate_params(num_experts, max(n, 1), math.log2(cfg.M), B, M=cfg.M)
    else:
        p = variable_rate_params(num_experts, max(n, 1), B, cfg.delta, cfg.M)
    changes = {}
    if cfg.block_length is not None and cfg.variant != "lossless-huffman":
        changes["l"] = min(max(int(cfg.block_length), 1), max(n, 1))
    if cfg.eta is not None:
        changes["eta"] = float(cfg.eta)
    changes["n"] = n
    if n == 0:
        changes["l"] = 1
    fields = {**p.__dict__, **changes}
    return SchemeParams(**fields)


# -- metrics -----------------------------------------------------------------------

@dataclass
class BlockRecord:
    k: int
    start: int
    stop: int
    index: int | None
    key: object
    encoder: tuple
    lengths: tuple | None
    decoder: np.ndarray | None
    overhead: int              # header symbols (fixed rate) or displaced symbols
    bits: int
    distortion: float
    realized: float


@dataclass
class RunMetrics:
    variant: str
    n: int
    seed: int
    params: SchemeParams
    num_experts: int
    delta: float = 0.0
    distortion: float = 0.0
    realized_distortion: float = 0.0
    bits: float = 0.0
    header_symbols: int = 0
    header_bits: int = 0
    lost_symbols: int = 0
    blocks: list = field(default_factory=list)
    oracle_cost: float | None = None
    oracle_expert: Choice | None = None
    regret: float | None = None
    bound: float | None = None
    runtime_ms: float = 0.0
    reconstruction: np.ndarray | None = None

    @property
    def lagrangian_cost(self) -> float:
        return self.distortion + self.delta * self.bits

    @property
    def cost(self) -> float:
        """The functional the scheme competes on."""
        return self.distortion if self.variant in FIXED_VARIANTS else self.lagrangian_cost

    def csv_row(self) -> dict:
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        return {"seed": self.seed, "n": self.n, "variant": self.variant,
                "distortion": fmt(self.distortion), "bits": fmt(self.bits),
                "lc": fmt(self.lagrangian_cost), "oracle": fmt(self.oracle_cost),
                "regret": fmt(self.regret), "bound": fmt(self.bound),
                "runtime_ms": f"{self.runtime_ms:.3f}"}


CSV_COLUMNS = ("seed", "n", "variant", "distortion", "bits", "lc", "oracle", "regret",
               "bound", "runtime_ms")


def scheme_bound(metrics: RunMetrics) -> float | None:
    p = metrics.params
    if metrics.n == 0 or metrics.num_experts <= 1:
        return None
    if metrics.variant in FIXED_VARIANTS:
        return fixed_rate_regret_bound(p.log2_experts, p.n, p.R, p.B)
    if metrics.variant == "lossless-huffman":
        return lossless_regret_bound(p.M, p.log2_experts, p.n, p.l)
    return variable_rate_regret_bound(p.log2_experts, p.n, p.B, p.Btilde)


# -- decoders --------------------------------------------------------------------

class FixedRateDecoder:
    """Rebuilds reconstructions from channel symbols and side information only."""

    def __init__(self, eset, M: int):
        self.eset = eset
        self.M = M
        self.H = header_symbols(eset.num_experts, M)

    def decode_block(self, symbols: np.ndarray, y: np.ndarray) -> np.ndarray:
        recon = np.zeros(len(symbols), dtype=np.int64)
        if len(symbols) <= self.H:
            return recon
        choice = self.eset.unrank(from_digits(symbols[:self.H], self.M))
        recon[self.H:] = choice.decoder.table[symbols[self.H:], y[self.H:]]
        return recon


class VariableRateDecoder:
    """Reads the header bits, then decodes codewords until the block frame ends."""

    def __init__(self, eset):
        self.eset = eset
        self.H = header_bits(eset.num_experts)

    def decode_block(self, frame: np.ndarray, y: np.ndarray) -> np.ndarray:
        n = len(y)
        recon = np.zeros(n, dtype=np.int64)
        if len(frame) < self.H:
            raise ProtocolError("frame shorter than the header")
        choice = self.eset.unrank(from_digits(frame[:self.H], 2))
        z = decode_stream(frame[self.H:], canonical_codebook(choice.lengths))
        lost = n - len(z)
        if lost < 0:
            raise ProtocolError("frame carries more codewords than the block has symbols")
        recon[lost:] = choice.decoder.table[np.asarray(z, dtype=np.int64), y[lost:]]
        return recon


class LosslessDecoder:
    """Tracks its own counts and draws the same code from the shared randomness."""

    def __init__(self, dag: LayeredDag, eta: float, seed: int):
        self.dag = dag
        self.eta = eta
        self.rng = stream(seed, "scheme")
        self.counts = np.zeros(dag.M, dtype=np.int64)

    def decode_block(self, frame: np.ndarray, length: int) -> np.ndarray:
        lengths = _draw_code(self.dag, self.counts, self.eta, self.rng)
        out, pos = decode_prefix(frame, canonical_codebook(lengths), count=length)
        if len(out) != length or pos != len(frame):
            raise DecodeDivergence(f"block frame of {len(frame)} bits did not decode to "
                                   f"{length} symbols (got {len(out)}, read {pos} bits)")
        out = np.asarray(out, dtype=np.int64)
        self.counts += np.bincount(out, minlength=self.dag.M)
        return out


def _draw_code(dag: LayeredDag, counts: np.ndarray, eta: float,
               rng: np.random.Generator) -> tuple[int, ...]:
    w = huffman_edge_log_weights(dag, counts, eta)
    return dag.path_lengths(sample_path(dag, w, wpa_backward(dag, w), rng))


# -- sessions ----------------------------------------------------------------------

def _check_sequence(x, size: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 1:
        raise InputError("source sequence must be one-dimensional")
    if x.size and (x.min() < 0 or x.max() >= size):
        raise InputError("source symbol outside the alphabet")
    return x


def _finish(metrics: RunMetrics, x: np.ndarray, cfg: SessionConfig, eset, t0: float) -> RunMetrics:
    if cfg.with_oracle and metrics.n:
        counts = np.bincount(x, minlength=cfg.size)
        if cfg.variant == "lossless-huffman":
            lengths, cost = best_length_set(eset, counts)
            metrics.oracle_expert = Choice(lengths, None, lengths, None)
        else:
            metrics.oracle_expert, cost = eset.best(counts, cfg.channel, cfg.rho, cfg.delta)
        metrics.oracle_cost = cost
        metrics.regret = regret(metrics.cost, cost, metrics.n)
    metrics.bound = scheme_bound(metrics)
    metrics.runtime_ms = (time.perf_counter() - t0) * 1e3
    return metrics


def _run_fixed(x: np.ndarray, cfg: SessionConfig) -> RunMetrics:
    t0 = time.perf_counter()
    eset = build_expert_set(cfg)
    params = scheme_params(cfg, len(x), eset.num_experts)
    H = header_symbols(eset.num_experts, cfg.M)
    if len(x) and H > params.l:
        raise ConfigError(f"header of {H} symbols is longer than the block ({params.l})")
    channel, rho = cfg.channel, cfg.rho
    state = WeightState(channel, params.eta, rho)
    eset.attach(state)
    rng, ch_rng = stream(cfg.seed, "scheme"), stream(cfg.seed, "channel")
    decoder = FixedRateDecoder(eset, cfg.M) if cfg.verify_decoder else None
    m = RunMetrics(cfg.variant, len(x), cfg.seed, params, eset.num_experts)
    recon_all = np.zeros(len(x), dtype=np.int64) if cfg.keep_reconstruction else None
    for k, (a, b) in enumerate(params.blocks()):
        xb = x[a:b]
        yb = sample_side_info_seq(xb, channel, ch_rng)
        choice = eset.sample(state, rng)
        idx = eset.rank(choice)
        h = min(H, b - a)
        z = choice.encoder.cell_array[xb[h:]]
        sent = np.concatenate([np.asarray(to_digits(idx, cfg.M, H)[:h], dtype=np.int64), z])
        recon = np.zeros(b - a, dtype=np.int64)
        recon[h:] = choice.decoder.table[z, yb[h:]]
        per = symbol_distortions(choice.encoder, choice.decoder, channel, rho)
        dist = float(rho.table[xb[:h], 0].sum() + per[xb[h:]].sum())
        real = float(rho.table[xb, recon].sum())
        if decoder is not None:
            got = decoder.decode_block(sent, yb)
            if not np.array_equal(got, recon):
                raise ProtocolError(f"decoder diverged in block {k}")
        if recon_all is not None:
            recon_all[a:b] = recon
        m.distortion += dist
        m.realized_distortion += real
        m.header_symbols += h
        m.blocks.append(BlockRecord(k, a, b, idx, choice.key, choice.encoder.cells, None,
                                    choice.decoder.table, h, 0, dist, real))
        state.update(xb)
    m.bits = len(x) * math.log2(cfg.M)
    m.reconstruction = recon_all
    return _finish(m, x, cfg, eset, t0)


def _run_variable(x: np.ndarray, cfg: SessionConfig) -> RunMetrics:
    t0 = time.perf_counter()
    eset = build_expert_set(cfg)
    params = scheme_params(cfg, len(x), eset.num_experts)
    H = header_bits(eset.num_experts)
    if len(x) and H > params.l:
        raise ConfigError(f"header of {H} bits is longer than the block ({params.l})")
    channel, rho = cfg.channel, cfg.rho
    B = rho.bound
    state = WeightState(channel, params.eta, rho)
    eset.attach(state, cfg.delta)
    rng, ch_rng = stream(cfg.seed, "scheme"), stream(cfg.seed, "channel")
    decoder = VariableRateDecoder(eset) if cfg.verify_decoder else None
    m = RunMetrics(cfg.variant, len(x), cfg.seed, params, eset.num_experts, delta=cfg.delta)
    recon_all = np.zeros(len(x), dtype=np.int64) if cfg.keep_reconstruction else None
    for k, (a, b) in enumerate(params.blocks()):
        xb = x[a:b]
        yb = sample_side_info_seq(xb, channel, ch_rng)
        choice = eset.sample(state, rng)
        idx = eset.rank(choice)
        z_all = choice.encoder.cell_array[xb]
        lens = np.asarray(choice.lengths, dtype=np.int64)[z_all]
        before = np.concatenate(([0], np.cumsum(lens)[:-1]))
        lost = int(np.searchsorted(before, H, side="left")) if H else 0
        z = z_all[lost:]
        nbits = H + int(lens[lost:].sum())
        recon = np.zeros(b - a, dtype=np.int64)
        recon[lost:] = choice.decoder.table[z, yb[lost:]]
        per = symbol_distortions(choice.encoder, choice.decoder, channel, rho)
        dist = float(lost * B + per[xb[lost:]].sum())
        real = float(rho.table[xb, recon].sum())
        if decoder is not None:
            frame = np.concatenate([np.asarray(to_digits(idx, 2, H), dtype=np.uint8),
                                    encode_stream(z, canonical_codebook(choice.lengths))])
            if len(frame) != nbits:
                raise ProtocolError("frame length disagrees with the bit count")
            got = decoder.decode_block(frame, yb)
            if not np.array_equal(got, recon):
                raise ProtocolError(f"decoder diverged in block {k}")
        if recon_all is not None:
            recon_all[a:b] = recon
        m.distortion += dist
        m.realized_distortion += real
        m.bits += nbits
        m.header_bits += H
        m.lost_symbols += lost
        m.blocks.append(BlockRecord(k, a, b, idx, choice.key, choice.encoder.cells,
                                    choice.lengths, choice.decoder.table, lost, nbits, dist, real))
        state.update(xb)
    m.reconstruction = recon_all
    return _finish(m, x, cfg, eset, t0)


def _run_lossless(x: np.ndarray, cfg: SessionConfig, decoder_seed: int | None = None) -> RunMetrics:
    t0 = time.perf_counter()
    lam = cfg.lam if cfg.lam is not None else default_huffman_lambda(cfg.M, len(x))
    dag = build_huffman_graph(cfg.M, lam)
    num = dag.count_paths()
    params = scheme_params(cfg, len(x), num)
    rng = stream(cfg.seed, "scheme")
    counts = np.zeros(cfg.M, dtype=np.int64)
    decoder = None
    if cfg.verify_decoder:
        decoder = LosslessDecoder(dag, params.eta, cfg.seed if decoder_seed is None else decoder_seed)
    m = RunMetrics(cfg.variant, len(x), cfg.seed, params, num, delta=1.0)
    recon_all = np.zeros(len(x), dtype=np.int64) if (cfg.keep_reconstruction or decoder) else None
    identity = tuple(range(cfg.M))
    for k, (a, b) in enumerate(params.blocks()):
        xb = x[a:b]
        lengths = _draw_code(dag, counts, params.eta, rng) if num > 1 else dag.path_lengths(
            next(dag.paths()))
        nbits = int(np.asarray(lengths)[xb].sum())
        if decoder is not None:
            frame = encode_stream(xb, canonical_codebook(lengths))
            if num <= 1:
                decoder.rng = stream(0, "scheme")  # nothing to draw either side
            got = decoder.decode_block(frame, b - a)
            recon_all[a:b] = got
            if not np.array_equal(got, xb):
                raise DecodeDivergence(f"lossless reconstruction differs in block {k}")
        elif recon_all is not None:
            recon_all[a:b] = xb
        m.bits += nbits
        m.blocks.append(BlockRecord(k, a, b, None, lengths, identity, lengths, None, 0, nbits,
                                    0.0, 0.0))
        counts += np.bincount(xb, minlength=cfg.M)
    m.reconstruction = recon_all
    return _finish(m, x, cfg, dag, t0)


def run_session(x, cfg: SessionConfig) -> RunMetrics:
    x = _check_sequence(x, cfg.size)
    if cfg.is_fixed_rate:
        return _run_fixed(x, cfg)
    if cfg.variant == "lossless-huffman":
        return _run_lossless(x, cfg)
    return _run_variable(x, cfg)


def _expect(cfg: SessionConfig, *variants: str) -> None:
    if cfg.variant not in variants:
        raise ConfigError(f"this session runs {variants}, not {cfg.variant!r}")


def run_fixed_rate_session(x, cfg: SessionConfig) -> RunMetrics:
    _expect(cfg, "fixed-small")
    return run_session(x, cfg)


def run_structured_session(x, cfg: SessionConfig) -> RunMetrics:
    _expect(cfg, "fixed-structured")
    return run_session(x, cfg)


def run_variable_rate_session(x, cfg: SessionConfig) -> RunMetrics:
    _expect(cfg, "variable-small")
    return run_session(x, cfg)


def run_lossless_session(x, cfg: SessionConfig, decoder_seed: int | None = None) -> RunMetrics:
    """``decoder_seed`` lets tests hand the decoder a different randomisation sequence."""
    _expect(cfg, "lossless-huffman")
    return _run_lossless(_check_sequence(x, cfg.size), cfg, decoder_seed)


def run_lc_graph_session(x, cfg: SessionConfig) -> RunMetrics:
    _expect(cfg, "variable-lc-graph")
    return run_session(x, cfg)


def run_quantizer_session(x, cfg: SessionConfig) -> RunMetrics:
    _expect(cfg, "quantizer")
    return run_session(x, cfg)


def best_expert_in_hindsight(x, cfg: SessionConfig) -> tuple[Choice, float]:
    x = _check_sequence(x, cfg.size)
    counts = np.bincount(x, minlength=cfg.size)
    if cfg.variant == "lossless-huffman":
        lam = cfg.lam if cfg.lam is not None else default_huffman_lambda(cfg.M, len(x))
        lengths, cost = best_length_set(build_huffman_graph(cfg.M, lam), counts)
        return Choice(lengths, None, lengths, None), cost
    return build_expert_set(cfg).best(counts, cfg.channel, cfg.rho, cfg.delta)


# -- accounting checks and reports --------------------------------------------------

def recompute_distortion(x, metrics: RunMetrics, channel: ChannelModel,
                         rho: DistortionMeasure) -> float:
    """Re-derive the expectation-form distortion from the logged per-block experts."""
    x = np.asarray(x, dtype=np.int64)
    total = 0.0
    for r in metrics.blocks:
        if r.decoder is None:
            continue
        e = PartitionEncoder(r.encoder)
        per = symbol_distortions(e, DecoderTable(r.decoder), channel, rho)
        xb = x[r.start:r.stop]
        head = xb[:r.overhead]
        if metrics.variant in FIXED_VARIANTS:
            total += float(rho.table[head, 0].sum())
        else:
            total += len(head) * rho.bound
        total += float(per[xb[r.overhead:]].sum())
    return total


def recompute_bits(x, metrics: RunMetrics) -> int:
    x = np.asarray(x, dtype=np.int64)
    total = 0
    for r in metrics.blocks:
        if r.lengths is None:
            continue
        per = code_lengths_per_symbol(PartitionEncoder(r.encoder), r.lengths)
        head = header_bits(metrics.num_experts) if metrics.variant != "lossless-huffman" else 0
        total += head + int(per[x[r.start + r.overhead:r.stop]].sum())
    return total


def manifest_text(metrics: RunMetrics, cfg: SessionConfig | None = None) -> str:
    buf = io.StringIO()
    if cfg is not None:
        for k, v in cfg.describe().items():
            buf.write(f"config.{k}={v}\n")
    for k, v in metrics.params.describe().items():
        buf.write(f"param.{k}={v}\n")
    buf.write(f"num_experts={metrics.num_experts}\n")
    for k, v in metrics.csv_row().items():
        buf.write(f"metric.{k}={v}\n")
    if metrics.oracle_expert is not None:
        o = metrics.oracle_expert
        buf.write(f"oracle.encoder={'' if o.encoder is None else ','.join(map(str, o.encoder.cells))}"
                  f" lengths={'' if o.lengths is None else ','.join(map(str, o.lengths))}\n")
    for r in metrics.blocks:
        dec = "" if r.decoder is None else "|".join(",".join(map(str, row)) for row in r.decoder)
        lens = "-" if r.lengths is None else ",".join(map(str, r.lengths))
        buf.write(f"block k={r.k} start={r.start} stop={r.stop} index={r.index} "
                  f"encoder={','.join(map(str, r.encoder))} lengths={lens} decoder={dec} "
                  f"overhead={r.overhead} bits={r.bits} cost={r.distortion!r}\n")
    return buf.getvalue()


def write_manifest(path: str | Path, metrics: RunMetrics, cfg: SessionConfig | None = None) -> None:
    Path(path).write_text(manifest_text(metrics, cfg))
