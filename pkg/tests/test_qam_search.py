import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gammaln

from mimoisi.baselines import ml_oracle, mmse_equalize
from mimoisi.channel import EffectiveModel
from mimoisi.fg import FgConfig
from mimoisi.modulation import Modulation, UnsupportedAlphabetError
from mimoisi.qam_search import (
    HybridConfig,
    IncrementalCost,
    LatticeError,
    RtsConfig,
    bit_expand,
    greedy_descent,
    hybrid_detect,
    initial_vector,
    layer_error_counts,
    quantize_lattice,
    realify,
    reconstruct,
    rts_detect,
    selective_hybrid_detect,
)

from conftest import BPSK, QAM16, random_frame

QAM64 = Modulation("qam", 64)


def test_realify_dimensions_and_blocks(rng):
    _, m = random_frame(rng, n_t=3, n_r=2, K=2, L=1, mod=QAM16)
    rm = realify(m, QAM16)
    assert rm.H_real.shape == (8, 12) and rm.r_real.shape == (8,)
    n_r, n_t = m.H.shape
    assert np.allclose(rm.H_real[:n_r, :n_t], m.H.real)
    assert np.allclose(rm.H_real[:n_r, n_t:], -m.H.imag)
    assert np.allclose(rm.H_real[n_r:, :n_t], m.H.imag)
    assert np.allclose(rm.H_real[n_r:, n_t:], m.H.real)
    assert list(rm.pam_alphabet) == [-3, -1, 1, 3]


def test_realify_real_channel_is_block_diagonal():
    H = np.array([[1.0, 2.0], [0.5, -1.0]])
    m = EffectiveModel(H, np.array([1.0, 2.0]), 1.0, (1, 2, 2))
    rm = realify(m, QAM16)
    assert np.allclose(rm.H_real, np.kron(np.eye(2), H))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["4qam", "16qam", "64qam", "bpsk"]))
def test_realify_preserves_residual(seed, name):
    rng = np.random.default_rng(seed)
    mod = Modulation.parse(name)
    _, m = random_frame(rng, n_t=2, n_r=3, K=2, L=2, mod=mod)
    x = mod.random_symbols(m.n_vars, rng)
    rm = realify(m, mod)
    complex_res = np.sum(np.abs(m.r - m.H @ x) ** 2)
    assert abs(rm.cost(mod.to_lattice(x)) - complex_res) <= 1e-10 * max(1.0, complex_res)


def test_bit_expand_4pam_examples():
    layers = bit_expand(np.array([3.0, -1.0, -3.0, 1.0]), 4)
    assert layers[:, 0].tolist() == [1, 1]
    assert layers[:, 1].tolist() == [1, -1]
    assert layers[:, 2].tolist() == [-1, -1]
    assert layers[:, 3].tolist() == [-1, 1]


def test_bit_expand_bpsk_is_identity():
    x = np.array([1.0, -1.0, -1.0])
    assert np.array_equal(bit_expand(x, 2)[0], x)


@pytest.mark.parametrize("m", [2, 4, 8])
def test_round_trip_all_points(m):
    pts = np.arange(-(m - 1), m, 2, dtype=float)
    layers = bit_expand(pts, m)
    assert layers.shape == (int(math.log2(m)), m)
    assert np.array_equal(reconstruct(layers), pts)


@settings(max_examples=50)
@given(st.lists(st.sampled_from([-7, -5, -3, -1, 1, 3, 5, 7]), min_size=1, max_size=30))
def test_round_trip_property(vals):
    x = np.array(vals, dtype=float)
    assert np.array_equal(reconstruct(bit_expand(x, 8)), x)


@pytest.mark.parametrize("bad", [[0.0], [2.0], [5.0], [1.5]])
def test_bit_expand_rejects_off_lattice(bad):
    with pytest.raises(LatticeError):
        bit_expand(np.array(bad), 4)


def test_rts_fixed_point_at_truth(rng):
    x, m = random_frame(rng, n_t=2, n_r=2, K=2, L=2, mod=QAM16, add_noise=False)
    rm = realify(m, QAM16)
    xl = QAM16.to_lattice(x)
    best, cost = rts_detect(rm, RtsConfig(max_iterations=50), xl)
    assert np.array_equal(best, xl) and cost < 1e-20


def test_rts_never_worse_than_start(rng):
    for _ in range(20):
        _, m = random_frame(rng, n_t=3, n_r=3, K=2, L=2, mod=QAM16, snr_db=12.0)
        rm = realify(m, QAM16)
        x0 = initial_vector(rm)
        best, cost = rts_detect(rm, RtsConfig(max_iterations=60), x0)
        assert cost <= rm.cost(x0) + 1e-12
        assert cost == pytest.approx(rm.cost(best))
        bit_expand(best, 4)


def test_rts_matches_ml_small(rng):
    hits = 0
    for _ in range(200):
        _, m = random_frame(rng, n_t=2, n_r=2, K=1, L=1, mod=QAM16, snr_db=20.0)
        x, _ = rts_detect(realify(m, QAM16))
        hits += np.allclose(QAM16.from_lattice(x), ml_oracle(m, QAM16))
    assert hits >= 0.9 * 200


def test_rts_escapes_greedy_local_minima(rng):
    stalled = escaped = 0
    while stalled < 30:
        _, m = random_frame(rng, n_t=2, n_r=2, K=1, L=1, mod=QAM16, snr_db=8.0)
        rm = realify(m, QAM16)
        ml_cost = rm.cost(QAM16.to_lattice(ml_oracle(m, QAM16)))
        x0 = initial_vector(rm, "mf")
        _, g_cost = greedy_descent(rm, x0)
        if g_cost <= ml_cost + 1e-9:
            continue
        stalled += 1
        _, r_cost = rts_detect(rm, RtsConfig(), x0)
        escaped += r_cost <= ml_cost + 1e-9
    assert escaped >= 0.5 * stalled


@pytest.mark.parametrize("policy", ["nearest", "full"])
def test_rts_neighborhoods(policy, rng):
    x, m = random_frame(rng, n_t=2, n_r=2, K=1, L=1, mod=QAM64, snr_db=40.0)
    best, _ = rts_detect(realify(m, QAM64), RtsConfig(neighborhood=policy))
    assert np.allclose(QAM64.from_lattice(best), x)


def test_rts_config_validation():
    with pytest.raises(ValueError):
        RtsConfig(max_iterations=0)
    with pytest.raises(ValueError):
        RtsConfig(initial_tabu_period=-1)
    with pytest.raises(ValueError):
        RtsConfig(neighborhood="ring")


def test_rts_rejects_off_lattice_start(rng):
    _, m = random_frame(rng, mod=QAM16)
    with pytest.raises(LatticeError):
        rts_detect(realify(m, QAM16), RtsConfig(), np.zeros(8))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_incremental_cost_matches_scratch(seed):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(10, 8))
    r = rng.normal(size=10)
    alphabet = np.array([-3.0, -1.0, 1.0, 3.0])
    x = rng.choice(alphabet, 8)
    inc = IncrementalCost(H, r, x)
    for _ in range(40):
        i = int(rng.integers(0, 8))
        inc.move(i, float(rng.choice(alphabet)))
        e = r - H @ inc.x
        assert abs(inc.cost - e @ e) < 1e-8
        assert np.allclose(inc.corr, H.T @ e)


def test_initial_vector_matches_fd_mmse(rng):
    _, m = random_frame(rng, n_t=2, n_r=2, K=4, L=2, mod=QAM16, snr_db=10.0)
    rm = realify(m, QAM16)
    soft = QAM16.to_lattice(mmse_equalize(m))
    assert np.array_equal(initial_vector(rm), quantize_lattice(soft, 4))


def test_hybrid_output_on_lattice(rng):
    for _ in range(10):
        _, m = random_frame(rng, n_t=2, n_r=2, K=2, L=2, mod=QAM16, snr_db=8.0)
        x = hybrid_detect(realify(m, QAM16))
        bit_expand(x, 4)


def test_hybrid_bpsk_cancels_nothing(rng):
    x, m = random_frame(rng, n_t=2, n_r=2, K=4, L=2, mod=BPSK, snr_db=25.0)
    out = hybrid_detect(realify(m, BPSK))
    assert np.array_equal(out, x.real)


def test_hybrid_preserves_correct_rts_output(rng):
    kept = correct = 0
    cfg = HybridConfig()
    for _ in range(100):
        x, m = random_frame(rng, n_t=2, n_r=2, K=2, L=2, mod=QAM16, snr_db=30.0)
        rm = realify(m, QAM16)
        xl = QAM16.to_lattice(x)
        x_rts, _ = rts_detect(rm, cfg.rts)
        if not np.array_equal(x_rts, xl):
            continue
        correct += 1
        kept += np.array_equal(hybrid_detect(rm, cfg), xl)
    assert correct >= 50
    assert kept >= 0.99 * correct


def test_selective_endpoints(rng):
    cfg = HybridConfig()
    for _ in range(10):
        _, m = random_frame(rng, n_t=2, n_r=2, K=2, L=2, mod=QAM16, snr_db=12.0)
        rm = realify(m, QAM16)
        inf = selective_hybrid_detect(rm, cfg, math.inf)
        zero = selective_hybrid_detect(rm, cfg, 0.0)
        assert not inf.used_bp and np.array_equal(inf.x, rts_detect(rm, cfg.rts)[0])
        assert zero.used_bp and np.array_equal(zero.x, hybrid_detect(rm, cfg))
        assert inf.m1 == pytest.approx(math.sqrt(rm.cost(inf.x)))
    with pytest.raises(ValueError):
        selective_hybrid_detect(rm, cfg, -1.0)


def test_selective_gate_monotone(rng):
    cfg = HybridConfig()
    models = [realify(random_frame(rng, n_t=2, n_r=2, K=2, L=2, mod=QAM16, snr_db=14.0)[1], QAM16) for _ in range(30)]
    m1 = [selective_hybrid_detect(rm, cfg, math.inf).m1 for rm in models]
    fractions = [np.mean([selective_hybrid_detect(rm, cfg, t).used_bp for rm in models])
                 for t in np.quantile(m1, np.linspace(0, 1, 8))]
    assert all(a >= b for a, b in zip(fractions, fractions[1:]))


def test_m1_of_correct_output_is_noise_norm(rng):
    n_t = n_r = 2
    K = 2
    m1 = []
    for _ in range(300):
        x, m = random_frame(rng, n_t=n_t, n_r=n_r, K=K, L=2, mod=QAM16, snr_db=35.0)
        res = selective_hybrid_detect(realify(m, QAM16), HybridConfig(), math.inf)
        if np.allclose(QAM16.from_lattice(res.x), x):
            m1.append(res.m1)
    k = 2 * K * n_r
    sigma = math.sqrt(m.sigma2 / 2)
    chi_mean = sigma * math.sqrt(2) * math.exp(gammaln((k + 1) / 2) - gammaln(k / 2))
    assert len(m1) > 250
    assert np.mean(m1) == pytest.approx(chi_mean, rel=0.05)


def test_layer_errors_lsb_dominate(rng):
    counts = np.zeros(2, dtype=int)
    for _ in range(60):
        x, m = random_frame(rng, n_t=4, n_r=4, K=4, L=2, mod=QAM16, snr_db=16.0)
        x_rts, _ = rts_detect(realify(m, QAM16))
        counts += layer_error_counts(QAM16.to_lattice(x), x_rts, 4)
    assert counts.sum() > 0
    if counts[0] <= counts[1]:
        warnings.warn(f"LSB errors do not dominate RTS output here: {counts.tolist()}")


def test_lsb_refinement_uses_fg_settings(rng):
    _, m = random_frame(rng, n_t=2, n_r=2, K=2, L=2, mod=QAM16, snr_db=12.0)
    rm = realify(m, QAM16)
    a = hybrid_detect(rm, HybridConfig(fg=FgConfig(10, 0.4), loops=1))
    b = hybrid_detect(rm, HybridConfig(fg=FgConfig(10, 0.4), loops=1))
    assert np.array_equal(a, b)
    bit_expand(hybrid_detect(rm, HybridConfig(loops=3)), 4)


def test_realify_unsupported():
    with pytest.raises(UnsupportedAlphabetError):
        realify(EffectiveModel(np.eye(2), np.ones(2), 1.0, (1, 2, 2)), Modulation.parse("8psk"))
