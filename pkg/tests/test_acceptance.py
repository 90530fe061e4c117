"""End-to-end acceptance checks.  Each test prints one PASS/FAIL line."""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

from wzonline.bounds import lossless_regret_bound, lossless_bound_example, fixed_rate_regret_bound, variable_rate_regret_bound
from wzonline.cli import bench_times
from wzonline.core import ChannelModel, DistortionMeasure, InputError
from wzonline.dag import build_huffman_graph, build_interval_graph
from wzonline.experts import all_encoders, interval_encoders, iter_decoders, symbol_distortions
from wzonline.pipeline import (DecodeDivergence, ExplicitExpertSet, GraphExpertSet, SessionConfig,
                               run_lossless_session, run_session, stream)
from wzonline.sources import iid_source, switching_source
from wzonline.verify import random_channel, random_state, suite_general, suite_factorization, suite_wpa
from wzonline.weighting import WeightState, decoder_log_prob, generalized_lambda


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def _raw_log_weight(d, st):
    lam = st.eta * st.counts[:, None] * st.channel.matrix
    return float(lam[d.table, np.arange(st.side_size)].sum())


def test_01_encoder_weight_factorization(report):
    t0 = time.perf_counter()
    r = suite_factorization(np.random.default_rng(101), instances=100)
    elapsed = time.perf_counter() - t0
    report(1, r.ok and elapsed < 10, f"F vs brute-force decoder sum: {r.checked} encoders, "
           f"worst rel err {r.worst:.2e}, {elapsed:.2f}s")


def test_02_joint_sampling_law(report):
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(5):
        st = random_state(4, rng)
        es = ExplicitExpertSet(all_encoders(4, 2), 4)
        pe = es.encoder_log_probs(st)
        experts = [es.unrank(i) for i in range(es.num_experts)]
        target = np.array([_raw_log_weight(c.decoder, st) for c in experts])
        target = np.exp(target - np.logaddexp.reduce(target))
        two_step = np.array([math.exp(pe[c.key] + decoder_log_prob(c.encoder, c.decoder, st))
                             for c in experts])
        worst = max(worst, float(np.abs(two_step - target).max()))

    st = WeightState(random_channel(4, rng), 0.04).update(rng.integers(0, 4, 60))
    es = ExplicitExpertSet(all_encoders(4, 2), 4)
    experts = [es.unrank(i) for i in range(es.num_experts)]
    lw = np.array([_raw_log_weight(c.decoder, st) for c in experts])
    probs = np.exp(lw - np.logaddexp.reduce(lw))
    draws = 100_000
    hits = np.zeros(es.num_experts)
    for _ in range(draws):
        hits[es.rank(es.sample(st, rng))] += 1
    expected = probs * draws
    keep = expected >= 5
    obs = np.append(hits[keep], hits[~keep].sum())
    exp_ = np.append(expected[keep], expected[~keep].sum())
    if exp_[-1] < 5:
        obs, exp_ = obs[:-1], exp_[:-1]
    p = chisquare(obs, exp_ * obs.sum() / exp_.sum()).pvalue
    report(2, worst <= 1e-12 and p > 0.01,
           f"{es.num_experts} experts: max |two-step - joint| {worst:.1e}, chi-square p={p:.3f}")


def test_03_wpa(report):
    r = suite_wpa(np.random.default_rng(103), paths_max=200, draws=100_000)
    report(3, r.ok, f"{r.checked} graphs: worst G rel err {r.worst:.1e}, {r.detail}")


def _kraft_brute(M, L):
    return {ls for ls in itertools.product(range(1, L + 1), repeat=M)
            if sum(Fraction(1, 2 ** v) for v in ls) == 1}


def test_04_huffman_enumeration(report):
    checked, bad = 0, []
    for M in range(2, 6):
        for L in range(1, 5):
            brute = _kraft_brute(M, L)
            if not brute:
                try:
                    build_huffman_graph(M, 2 ** L)
                    bad.append((M, L))
                except InputError:
                    pass
                continue
            g = build_huffman_graph(M, 2 ** L)
            got = [g.path_lengths(p) for p in g.paths()]
            if len(got) != len(set(got)) or set(got) != brute:
                bad.append((M, L))
            checked += 1
    g = build_huffman_graph(3, 4)
    example = {g.path_lengths(p) for p in g.paths()}
    ok = not bad and example == {(1, 2, 2), (2, 1, 2), (2, 2, 1)}
    report(4, ok, f"{checked} (M, lambda) pairs match brute force, mismatches {bad}, "
           f"M=3 lambda=4 -> {sorted(example)}")


def _mean_regret(make_cfg, size, n, seeds):
    regrets, bound = [], None
    for seed in range(seeds):
        x = switching_source(n, size, 4, stream(seed, "source"))
        m = run_session(x, make_cfg(seed))
        regrets.append(m.regret)
        bound = m.bound
    return float(np.mean(regrets)), bound, m


def test_05_regret_fixed_rate(report):
    t0 = time.perf_counter()
    ch = ChannelModel.symmetric(3, 0.1)
    mean, bound, m = _mean_regret(
        lambda s: SessionConfig("fixed-small", ch, 2, seed=s, with_oracle=True), 3, 100_000, 100)
    expect = fixed_rate_regret_bound(math.log2(m.num_experts), 100_000, 1.0, 1.0)
    elapsed = time.perf_counter() - t0
    report(5, mean <= bound and bound == pytest.approx(expect) and elapsed < 300,
           f"|A|={m.num_experts}: mean regret {mean:.4f} <= bound {bound:.4f} ({elapsed:.0f}s)")


def test_06_regret_variable_rate(report):
    t0 = time.perf_counter()
    ch = ChannelModel.symmetric(4, 0.1)
    mean, bound, m = _mean_regret(
        lambda s: SessionConfig("variable-small", ch, 3, length_sets=[(1, 2, 2), (2, 2, 1)],
                                delta=0.5, seed=s, with_oracle=True), 4, 100_000, 100)
    Bt = 1.0 + 0.5 * 2
    expect = variable_rate_regret_bound(math.log2(m.num_experts), 100_000, 1.0, Bt)
    elapsed = time.perf_counter() - t0
    report(6, mean <= bound and bound == pytest.approx(expect) and elapsed < 600,
           f"|A|={m.num_experts}: mean LC regret {mean:.4f} <= bound {bound:.4f} ({elapsed:.0f}s)")


def test_07_lossless(report):
    exact = 0
    for seed in range(10):
        x = stream(seed, "source").integers(0, 4, 20_000)
        cfg = SessionConfig("lossless-huffman", ChannelModel.identity(4), 4, lam=8, seed=seed,
                            verify_decoder=True)
        exact += bool(np.array_equal(run_lossless_session(x, cfg).reconstruction, x))
    try:
        run_lossless_session(x, cfg, decoder_seed=cfg.seed + 1)
        mismatch_caught = False
    except DecodeDivergence:
        mismatch_caught = True
    n = 100_000
    gaps = []
    for seed in range(5):
        x = iid_source(n, [0.5, 0.25, 0.25], stream(seed, "source"))
        m = run_session(x, SessionConfig("lossless-huffman", ChannelModel.identity(3), 3, lam=4,
                                         seed=seed))
        gaps.append(m.bits / n - 1.5)
    g = build_huffman_graph(3, 4)
    bound = lossless_regret_bound(3, math.log2(g.count_paths()), n, m.params.l)
    gap = float(np.mean(gaps))
    report(7, exact == 10 and mismatch_caught and gap <= bound,
           f"{exact}/10 exact, seed mismatch detected={mismatch_caught}, "
           f"rate - entropy {gap:.4f} <= bound {bound:.4f}")


def test_08_lossless_bound_example(report):
    ex = lossless_bound_example(1e10, 256)
    ok = 0.25 <= ex["bound_bits"] <= 0.45
    report(8, ok, f"base-2 value {ex['bound_bits']:.4f} bit/symbol (natural logs "
           f"{ex['bound_natural_logs']:.4f}; stated claim < {ex['claimed']})")


def test_09_general_distortion(report):
    r = suite_general(np.random.default_rng(109), instances=100)
    rng = np.random.default_rng(209)
    worst_h = 0.0
    for _ in range(50):
        size = int(rng.integers(2, 5))
        st = random_state(size, rng)
        ham = DistortionMeasure.hamming(size)
        e = all_encoders(size, 2)[int(rng.integers(len(all_encoders(size, 2))))]
        for d in iter_decoders(e, size):
            general = sum(generalized_lambda(int(d.table[z, y]), y, e, st, ham)
                          for z in range(e.M) for y in range(size))
            cost = float(st.counts @ symbol_distortions(e, d, st.channel, ham))
            # Hamming: -eta * cost = log(prod lambda) - eta * t
            worst_h = max(worst_h, abs(general - (_raw_log_weight(d, st) - st.eta * st.counts.sum())),
                          abs(general + st.eta * cost))
    report(9, r.ok and worst_h <= 1e-12,
           f"{r.checked} random measures: worst rel err {r.worst:.1e}; Hamming offset err {worst_h:.1e}")


def test_10_cross_path_parity(report):
    ch = ChannelModel.symmetric(4, 0.1)
    x = switching_source(4000, 4, 4, stream(110, "source"))
    explicit = ExplicitExpertSet(interval_encoders(4, 2), 4)
    graph = GraphExpertSet(build_interval_graph(4, 2), 4)
    st = WeightState(ch, 0.01)
    worst, blocks = 0.0, 0
    for a in range(0, len(x), 200):
        pe = explicit.encoder_log_probs(st)
        pg = {graph._choice(p).encoder: v for p, v in graph.encoder_log_probs(st).items()}
        for i, (e, _) in enumerate(explicit.entries):
            worst = max(worst, abs(math.exp(pe[i]) - math.exp(pg[e])))
        blocks += 1
        st.update(x[a:a + 200])
    report(10, worst <= 1e-12, f"{blocks} blocks: max encoder-marginal difference {worst:.1e}")


def test_11_linear_scaling(report):
    lines, ok = [], True
    for variant in ("fixed-structured", "variable-lc-graph"):
        t1, t2 = bench_times(variant, 8, 3, None, [1_000_000, 2_000_000], repeats=3)
        ok &= t2 <= 2.5 * t1
        lines.append(f"{variant} {t1:.2f}s -> {t2:.2f}s (x{t2 / t1:.2f})")
    report(11, ok, "; ".join(lines))
