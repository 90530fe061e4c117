import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from wzonline.core import ChannelModel, DistortionMeasure, InputError
from wzonline.experts import (PartitionEncoder, all_encoders, count_decoders, iter_decoders,
                              lagrangian_cost, VariableRateExpert, cumulative_distortion_counts,
                              FixedRateExpert)
from wzonline.weighting import (WeightState, decoder_log_prob, encoder_weight_F,
                                encoder_weight_F_LC, expert_log_weight, fixed_rate_params, gamma,
                                generalized_lambda, lossless_params, sample_decoder,
                                sample_encoder_direct, update_counts, variable_rate_params)


def random_state(size, r, rho=None):
    ch = ChannelModel(r.dirichlet(np.ones(size), size=size))
    st_ = WeightState(ch, float(r.uniform(0.05, 0.6)), rho)
    for _ in range(3):
        st_.update(r.integers(0, size, int(r.integers(1, 10))))
    return st_


# -- parameters ------------------------------------------------------------------

def test_fixed_rate_params_example():
    p = fixed_rate_params(2 ** 8, 10 ** 6, R=1, B=1)
    assert p.l == 400
    assert p.eta == pytest.approx(math.sqrt(64 / (400 * 1e6)), rel=1e-12)
    assert p.eta == pytest.approx(4.0e-4, rel=1e-12)


def test_fixed_rate_params_clamped_to_horizon():
    assert fixed_rate_params(2, 1, R=1).l == 1


def test_unrounded_block_length_scales_with_cube_root():
    a = fixed_rate_params(64, 1000, R=1).l_raw
    b = fixed_rate_params(64, 2000, R=1).l_raw
    assert b / a == pytest.approx(2 ** (1 / 3), rel=1e-12)


def test_variable_rate_params_examples():
    assert variable_rate_params(16, 1000, B=1, delta=0.5, M=5).Btilde == 3
    p = variable_rate_params(16, 10 ** 6, B=1, delta=1, M=4)
    assert p.l == round(2 * (4e6 / 16) ** (1 / 3)) == 126
    q = variable_rate_params(64, 5000, B=1, delta=0, M=4)
    f = fixed_rate_params(64, 5000, R=1, B=1)
    assert (q.l, q.eta) == (f.l, f.eta)


def test_params_monotone():
    etas = [fixed_rate_params(64, n, R=1).eta for n in (10 ** 3, 10 ** 4, 10 ** 5)]
    ls = [fixed_rate_params(64, n, R=1).l_raw for n in (10 ** 3, 10 ** 4, 10 ** 5)]
    assert etas[0] > etas[1] > etas[2]
    assert ls[0] < ls[1] < ls[2]


def test_params_reject_degenerate_inputs():
    with pytest.raises(InputError):
        fixed_rate_params(1, 100, R=1)
    with pytest.raises(InputError):
        fixed_rate_params(8, 0, R=1)
    with pytest.raises(InputError):
        variable_rate_params(8, 100, B=1, delta=0.1, M=1)


def test_blocks_cover_horizon_with_one_short_block():
    p = fixed_rate_params(8, 1000, R=1)
    blocks = list(p.blocks())
    assert blocks[0][0] == 0 and blocks[-1][1] == 1000
    assert all(b - a == p.l for a, b in blocks[:-1]) and 0 < blocks[-1][1] - blocks[-1][0] <= p.l
    assert len(blocks) == p.K


def test_lossless_params_default_block():
    p = lossless_params(13, 1024, 4)
    assert p.l == 10 and p.Btilde == 3


# -- weight state ------------------------------------------------------------------

def test_update_example():
    s = WeightState(ChannelModel.identity(3), eta=1.0)
    assert not s.log_lambda.any()
    update_counts(s, [0, 0, 1])
    expect = np.zeros((3, 3))
    expect[0, 0], expect[1, 1] = 2, 1
    np.testing.assert_array_equal(s.log_lambda, expect)


@given(st.integers(0, 10 ** 6))
def test_updates_are_additive_and_recomputable(seed):
    r = np.random.default_rng(seed)
    ch = ChannelModel(r.dirichlet(np.ones(4), size=4))
    a, b = r.integers(0, 4, 7), r.integers(0, 4, 5)
    s1 = WeightState(ch, 0.3).update(a).update(b)
    s2 = WeightState(ch, 0.3).update(np.concatenate([a, b]))
    np.testing.assert_allclose(s1.log_lambda, s2.log_lambda, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(s1.log_lambda, s1.recomputed_log_lambda(), rtol=1e-12, atol=1e-12)


# -- F and gamma ------------------------------------------------------------------

def test_F_at_start_counts_decoders():
    s = WeightState(ChannelModel.uniform(3), 0.5)
    e = PartitionEncoder((0, 1, 1))
    assert math.exp(encoder_weight_F(e, s)) == pytest.approx(8)
    assert math.exp(encoder_weight_F_LC(e, (1, 1), s, 2.0)) == pytest.approx(count_decoders(e))


def test_F_singletons_is_product_of_all_weights(rng):
    s = random_state(3, rng)
    e = PartitionEncoder((0, 1, 2))
    assert encoder_weight_F(e, s) == pytest.approx(s.log_lambda.sum(), rel=1e-12)


def _brute_F(e, s):
    cols = np.arange(s.side_size)
    lam = s.eta * s.counts[:, None] * s.channel.matrix
    vals = [lam[d.table, cols].sum() for d in iter_decoders(e, s.side_size)]
    return float(np.logaddexp.reduce(vals))


@given(st.integers(0, 10 ** 6))
def test_F_matches_enumeration(seed):
    r = np.random.default_rng(seed)
    s = random_state(4, r)
    for e in all_encoders(4, 2):
        assert math.exp(encoder_weight_F(e, s) - _brute_F(e, s)) == pytest.approx(1, rel=1e-9)


def test_gamma_example():
    s = WeightState(ChannelModel.identity(3), 1.0)
    assert gamma(PartitionEncoder((0, 1, 2)), (1, 2, 2), s, 1.0) == 0
    s.update([0, 0, 1])
    assert gamma(PartitionEncoder((0, 1, 2)), (1, 2, 2), s, 1.0) == -4
    assert gamma(PartitionEncoder((0, 1, 2)), (1, 2, 2), s, 0.0) == 0


def test_tracked_gamma_matches_direct(rng):
    s = WeightState(ChannelModel.uniform(4), 0.2)
    e = PartitionEncoder((0, 1, 1, 2))
    s.track_gamma("k", e, (2, 1, 2), 0.7)
    for _ in range(4):
        s.update(rng.integers(0, 4, 9))
    assert s.log_gamma["k"] == pytest.approx(gamma(e, (2, 1, 2), s, 0.7), rel=1e-12)


@given(st.integers(0, 10 ** 6))
def test_F_LC_matches_enumeration_of_lagrangian_costs(seed):
    r = np.random.default_rng(seed)
    size = 4
    ch = ChannelModel(r.dirichlet(np.ones(size), size=size))
    rho = DistortionMeasure.hamming(size)
    eta, delta = float(r.uniform(0.05, 0.5)), float(r.uniform(0, 2))
    x = r.integers(0, size, int(r.integers(1, 25)))
    s = WeightState(ch, eta).update(x)
    for e in all_encoders(size, 3):
        ls = (2, 1, 2)
        costs = [lagrangian_cost(VariableRateExpert(e, ls, d), x, ch, rho, delta)
                 for d in iter_decoders(e)]
        brute = np.logaddexp.reduce([-eta * c for c in costs])
        # the Hamming weights carry the common factor exp(eta * sum_x n(x)) per cell column
        shift = eta * len(x)
        assert math.exp(encoder_weight_F_LC(e, ls, s, delta) - shift - brute) == pytest.approx(1, rel=1e-9)


# -- sampling ------------------------------------------------------------------------

def test_sample_encoder_direct_examples():
    r = np.random.default_rng(1)
    assert sample_encoder_direct(["a"], [0.3], r) == 0
    draws = [sample_encoder_direct(range(2), [math.log(3), 0.0], r) for _ in range(100_000)]
    assert abs(np.mean(draws) - 0.25) < 0.01
    draws = np.bincount([sample_encoder_direct(range(4), [0.0] * 4, r) for _ in range(40_000)])
    assert chisquare(draws).pvalue > 0.01
    with pytest.raises(InputError):
        sample_encoder_direct(range(2), [-math.inf, -math.inf], r)


def test_sample_decoder_forced_and_uniform_cells():
    r = np.random.default_rng(2)
    s = WeightState(ChannelModel.identity(3), 1.0)
    e = PartitionEncoder((0, 1, 1))
    hits = np.zeros(3)
    for _ in range(6000):
        d = sample_decoder(e, s, r)
        assert (d.table[0] == 0).all() and d.is_admissible(e)
        hits[d.table[1, 2]] += 1
    assert chisquare(hits[1:]).pvalue > 0.01


def test_sample_decoder_cell_probability_example():
    r = np.random.default_rng(3)
    s = WeightState(ChannelModel.identity(3), 1.0).update([1, 1, 1])
    e = PartitionEncoder((0, 1, 1))
    p = math.exp(3) / (math.exp(3) + 1)
    assert p == pytest.approx(0.9526, abs=1e-4)
    freq = np.mean([sample_decoder(e, s, r).table[1, 1] == 1 for _ in range(100_000)])
    assert abs(freq - p) < 0.01


def test_two_step_law_equals_joint_law_exactly(rng):
    for _ in range(10):
        s = random_state(4, rng)
        encs = all_encoders(4, 2)
        logF = np.array([encoder_weight_F(e, s) for e in encs])
        logZ = np.logaddexp.reduce(logF)
        joint = [(i, e, d) for i, e in enumerate(encs) for d in iter_decoders(e)]
        logw = np.array([expert_log_weight(e, d, s) for _, e, d in joint])
        total = np.logaddexp.reduce(logw)
        for (i, e, d), w in zip(joint, logw):
            two = math.exp(logF[i] - logZ + decoder_log_prob(e, d, s))
            assert two == pytest.approx(math.exp(w - total), abs=1e-12)


def test_generalized_lambda_examples():
    rho = DistortionMeasure(np.random.default_rng(0).uniform(0, 1, (3, 3)))
    s0 = WeightState(ChannelModel.uniform(3), 0.4)
    e = PartitionEncoder((0, 1, 1))
    assert generalized_lambda(2, 1, e, s0, rho) == 0
    s = WeightState(ChannelModel.uniform(3), 0.4).update([0, 1, 2, 2])
    # a singleton cell holding x: only x itself contributes, with rho(x, x)
    assert generalized_lambda(0, 0, e, s, rho) == pytest.approx(-0.4 * 1 / 3 * rho.table[0, 0])
    hs = DistortionMeasure.hamming(3)
    assert generalized_lambda(0, 0, e, s, hs) == 0


@given(st.integers(0, 10 ** 6))
def test_generalized_lambda_product_is_exp_of_cost(seed):
    r = np.random.default_rng(seed)
    size = int(r.integers(2, 5))
    rho = DistortionMeasure(r.uniform(0, 2, (size, size)))
    s = random_state(size, r)
    for e in all_encoders(size, 2):
        for d in itertools.islice(iter_decoders(e), 0, None, 5):
            prod = sum(generalized_lambda(int(d.table[z, y]), y, e, s, rho)
                       for z in range(e.M) for y in range(size))
            cost = cumulative_distortion_counts(FixedRateExpert(e, d), s.counts, s.channel, rho)
            assert math.exp(prod + s.eta * cost) == pytest.approx(1, rel=1e-9)


def test_general_weights_sample_like_hamming_weights(rng):
    s = random_state(4, rng)
    half = s.copy()
    half.eta = s.eta / 2
    double_hamming = DistortionMeasure(2 * DistortionMeasure.hamming(4).table)
    for e in all_encoders(4, 2):
        for d in itertools.islice(iter_decoders(e), 0, None, 11):
            a = decoder_log_prob(e, d, s)
            b = decoder_log_prob(e, d, half, rho=double_hamming)
            assert a == pytest.approx(b, abs=1e-12)


def test_sampling_is_deterministic_given_seed(rng):
    s = random_state(4, rng)
    e = PartitionEncoder((0, 1, 1, 0))
    a = [sample_decoder(e, s, np.random.default_rng(5)) for _ in range(3)]
    b = [sample_decoder(e, s, np.random.default_rng(5)) for _ in range(3)]
    assert a == b
