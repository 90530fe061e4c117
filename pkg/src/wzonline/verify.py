"""
Self-check suites: each compares a fast factored computation with a slow
independent one on random small instances.

=============  ==================================================================
suite          identity checked
=============  ==================================================================
factorization  encoder weight F equals the sum of expert weights over all decoders
decoder        encoder law times cell-wise decoder law equals the joint law
interval       interval-graph path weight equals F of the path's encoder
lc             lc-graph path weight equals gamma * F
general        product of generalized lambdas equals exp(-eta * cumulative cost)
wpa            WPA totals equal path enumeration; sampled paths pass chi-square
=============  ==================================================================

``fault=True`` perturbs one incremental weight update so that tests can
confirm the suites notice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import chisquare

from .core import ChannelModel, DistortionMeasure
from .dag import (build_huffman_graph, build_interval_graph, build_lc_graph,
                  huffman_edge_log_weights, interval_edge_log_weights, lc_edge_log_weights,
                  path_log_weight, sample_path, wpa_backward)
from .experts import (all_encoders, code_lengths_per_symbol, iter_decoders, symbol_distortions)
from .weighting import (WeightState, decoder_log_prob, encoder_weight_F, encoder_weight_F_LC,
                        generalized_lambda)

SUITES = ("factorization", "decoder", "interval", "lc", "general", "wpa")


@dataclass
class SuiteResult:
    name: str
    ok: bool
    checked: int
    worst: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name}: {self.checked} checks, worst {self.worst:.3g} {self.detail}".rstrip()


class _FaultyState(WeightState):
    """Adds a spurious increment to one weight on every update."""

    def update(self, block):
        super().update(block)
        self.log_lambda[0, 0] += 0.25
        return self


def random_channel(size: int, rng: np.random.Generator) -> ChannelModel:
    m = rng.dirichlet(np.ones(size), size=size)
    m /= m.sum(axis=1, keepdims=True)
    return ChannelModel(m)


def random_state(size: int, rng: np.random.Generator, fault: bool = False,
                 channel: ChannelModel | None = None, rho=None) -> WeightState:
    channel = channel or random_channel(size, rng)
    cls = _FaultyState if fault else WeightState
    st = cls(channel, float(rng.uniform(0.01, 0.5)), rho)
    for _ in range(int(rng.integers(1, 4))):
        st.update(rng.integers(0, size, size=int(rng.integers(1, 12))))
    return st


def brute_log_sum(e, st: WeightState) -> float:
    """``log sum_d prod_{z,y} lambda[d(z,y), y]`` rebuilt from the raw counts."""
    lam = st.eta * st.counts[:, None] * st.channel.matrix
    cols = np.arange(st.side_size)
    return float(logsumexp([lam[d.table, cols].sum() for d in iter_decoders(e, st.side_size)]))


def _rel(a: float, b: float) -> float:
    """Relative error between two log-domain weights, measured on the linear scale."""
    return abs(math.expm1(a - b))


def suite_factorization(rng, instances=100, fault=False, tol=1e-9) -> SuiteResult:
    worst, n = 0.0, 0
    for _ in range(instances):
        size = int(rng.integers(2, 5))
        st = random_state(size, rng, fault)
        for e in all_encoders(size, 2):
            worst = max(worst, _rel(encoder_weight_F(e, st), brute_log_sum(e, st)))
            n += 1
    return SuiteResult("factorization", worst <= tol, n, worst)


def suite_decoder(rng, instances=30, fault=False, tol=1e-12) -> SuiteResult:
    worst, n = 0.0, 0
    for _ in range(instances):
        size = int(rng.integers(2, 5))
        st = random_state(size, rng, fault)
        encs = all_encoders(size, 2)
        logF = np.array([encoder_weight_F(e, st) for e in encs])
        logZ = logsumexp(logF)
        lam = st.eta * st.counts[:, None] * st.channel.matrix
        cols = np.arange(st.side_size)
        joint = [(i, e, d, lam[d.table, cols].sum())
                 for i, e in enumerate(encs) for d in iter_decoders(e, st.side_size)]
        total = logsumexp([w for *_, w in joint])
        for i, e, d, w in joint:
            two_step = math.exp(logF[i] - logZ + decoder_log_prob(e, d, st))
            worst = max(worst, abs(two_step - math.exp(w - total)))
            n += 1
    return SuiteResult("decoder", worst <= tol, n, worst)


def suite_interval(rng, instances=30, fault=False, tol=1e-9) -> SuiteResult:
    worst, n = 0.0, 0
    for _ in range(instances):
        size = int(rng.integers(2, 6))
        M = int(rng.integers(2, size + 1))
        st = random_state(size, rng, fault)
        dag = build_interval_graph(size, M)
        w = interval_edge_log_weights(dag, st)
        for p in dag.paths():
            worst = max(worst, _rel(path_log_weight(w, p), brute_log_sum(dag.path_encoder(p), st)))
            n += 1
    return SuiteResult("interval", worst <= tol, n, worst)


def suite_lc(rng, instances=20, fault=False, tol=1e-9) -> SuiteResult:
    worst, n = 0.0, 0
    for _ in range(instances):
        size = int(rng.integers(2, 5))
        M = int(rng.integers(2, size + 1))
        delta = float(rng.uniform(0, 2))
        st = random_state(size, rng, fault)
        dag = build_lc_graph(size, M, 2 ** (M - 1))
        w = lc_edge_log_weights(dag, st, delta)
        for p in dag.paths():
            e, ls = dag.path_encoder(p), dag.path_lengths(p)
            rate = -st.eta * delta * float(st.counts @ code_lengths_per_symbol(e, ls))
            worst = max(worst, _rel(path_log_weight(w, p), rate + brute_log_sum(e, st)),
                        _rel(path_log_weight(w, p), encoder_weight_F_LC(e, ls, st, delta)))
            n += 1
    return SuiteResult("lc", worst <= tol, n, worst)


def suite_general(rng, instances=100, fault=False, tol=1e-9) -> SuiteResult:
    worst, n = 0.0, 0
    for _ in range(instances):
        size = int(rng.integers(2, 5))
        rho = DistortionMeasure(rng.uniform(0, 1, size=(size, size)))
        st = random_state(size, rng, fault)
        e = all_encoders(size, 2)[int(rng.integers(len(all_encoders(size, 2))))]
        ds = list(iter_decoders(e, size))
        d = ds[int(rng.integers(len(ds)))]
        prod = sum(generalized_lambda(int(d.table[z, y]), y, e, st, rho)
                   for z in range(e.M) for y in range(size))
        cost = float(st.counts @ symbol_distortions(e, d, st.channel, rho))
        worst = max(worst, _rel(prod, -st.eta * cost))
        n += 1
    return SuiteResult("general", worst <= tol, n, worst)


def _graph_cases(paths_max: int):
    for size, M in itertools.product(range(2, 7), range(2, 5)):
        if M <= size:
            yield "interval", build_interval_graph(size, M)
    for M in range(2, 6):
        # fewer than log2(M) levels of depth cannot hold M codewords
        for L in range((M - 1).bit_length(), 5):
            yield "huffman", build_huffman_graph(M, 2 ** L)
    for size, M in itertools.product(range(2, 6), range(2, 4)):
        if M <= size:
            for L in range((M - 1).bit_length(), M + 1):
                yield "lc", build_lc_graph(size, M, 2 ** L)


def _graph_weights(kind, dag, st, delta):
    if kind == "interval":
        return interval_edge_log_weights(dag, st)
    if kind == "huffman":
        return huffman_edge_log_weights(dag, st.counts[:dag.M], st.eta)
    return lc_edge_log_weights(dag, st, delta)


def suite_wpa(rng, paths_max=200, draws=100_000, fault=False, tol=1e-9,
              alpha=0.01) -> SuiteResult:
    worst, n, pvals = 0.0, 0, []
    for kind, dag in _graph_cases(paths_max):
        paths = list(dag.paths())
        if len(paths) > paths_max:
            continue
        size = max(int(dag.labels["zh"].max()) if "zh" in dag.labels else dag.M, dag.M)
        st = random_state(size, rng, fault)
        w = _graph_weights(kind, dag, st, 0.5)
        vals = wpa_backward(dag, w)
        lw = np.array([path_log_weight(w, p) for p in paths])
        worst = max(worst, _rel(vals.total, float(logsumexp(lw))))
        n += 1
        if len(paths) > 1 and draws:
            probs = np.exp(lw - logsumexp(lw))
            index = {p: i for i, p in enumerate(paths)}
            k = draws
            hits = np.zeros(len(paths))
            for _ in range(k):
                hits[index[sample_path(dag, w, vals, rng)]] += 1
            keep = probs * k >= 5
            if keep.sum() >= 2:
                exp_ = probs[keep] * k
                obs = hits[keep]
                exp_ = exp_ * obs.sum() / exp_.sum()
                pvals.append((kind, len(paths), float(chisquare(obs, exp_).pvalue)))
    # Many graphs are tested; a Bonferroni threshold keeps the family-wise level at alpha.
    level = alpha / max(len(pvals), 1)
    bad = [p for p in pvals if p[2] < level]
    ok = worst <= tol and not bad
    detail = f"min chi-square p={min((p[2] for p in pvals), default=1.0):.3g} over {len(pvals)} graphs"
    return SuiteResult("wpa", ok, n, worst, detail)


def run_suites(names=SUITES, seed=0, fault=False, paths_max=200, draws=20_000) -> list[SuiteResult]:
    out = []
    for name in names:
        rng = np.random.default_rng([seed, SUITES.index(name)])
        if name == "wpa":
            out.append(suite_wpa(rng, paths_max=paths_max, draws=draws, fault=fault))
        else:
            out.append(globals()[f"suite_{name}"](rng, fault=fault))
    return out
