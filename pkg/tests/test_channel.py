import math

import numpy as np
import pytest

from pnnpolar.channel import NoiseParams, add_awgn, ebn0_to_sigma, modulate_bpsk, to_llr, uncoded_ber
from pnnpolar.polar import CodeSpec, encode


def test_modulation_convention():
    assert modulate_bpsk([0, 0]).tolist() == [1.0, 1.0]
    assert modulate_bpsk([1, 0, 1]).tolist() == [-1.0, 1.0, -1.0]
    assert np.all(modulate_bpsk(encode(np.zeros(16, np.uint8), CodeSpec(16))) == 1.0)


def test_awgn_determinism_and_variance():
    a = add_awgn([1.0], 1.0, np.random.default_rng(7))
    b = add_awgn([1.0], 1.0, np.random.default_rng(7))
    assert a.tolist() == b.tolist()
    noise = add_awgn(np.zeros(10**6), 1.0, np.random.default_rng(1))
    assert abs(noise.var() - 1.0) < 0.01
    tiny = add_awgn(np.array([1.0, -1.0]), 1e-12, np.random.default_rng(0))
    assert np.allclose(tiny, [1.0, -1.0])
    with pytest.raises(ValueError):
        add_awgn([1.0], 0.0, np.random.default_rng(0))


def test_llr_values():
    assert to_llr([0.0], 1.0).tolist() == [0.0]
    assert to_llr([1.0], 1.0).tolist() == [2.0]
    assert to_llr([-0.5], 0.5).tolist() == [-4.0]
    y = np.random.default_rng(3).normal(size=100)
    assert np.allclose(to_llr(-y, 0.8), -to_llr(y, 0.8))
    with pytest.raises(ValueError):
        to_llr([1.0], -1.0)


def test_sigma_convention():
    assert ebn0_to_sigma(0.0, 0.5) == pytest.approx(1.0)
    assert ebn0_to_sigma(0.0, 1.0) == pytest.approx(1 / math.sqrt(2))
    assert ebn0_to_sigma(300.0, 0.5) < 1e-10
    assert NoiseParams(0.0, 0.5).sigma == pytest.approx(1.0)
    for bad in (0.0, 1.5, -0.2):
        with pytest.raises(ValueError):
            ebn0_to_sigma(1.0, bad)


def test_noiseless_recovery():
    x = np.random.default_rng(0).integers(0, 2, 64)
    llr = to_llr(add_awgn(modulate_bpsk(x), 1e-9, np.random.default_rng(1)), 1e-9)
    assert np.array_equal((llr < 0).astype(int), x)


def test_uncoded_ber_matches_q_function():
    assert uncoded_ber(4.0) == pytest.approx(1.25e-2, rel=0.01)
    sigma = ebn0_to_sigma(4.0, 1.0)
    rng = np.random.default_rng(11)
    bits = rng.integers(0, 2, 10**6)
    llr = to_llr(add_awgn(modulate_bpsk(bits), sigma, rng), sigma)
    ber = np.mean((llr < 0) != bits)
    assert abs(ber / uncoded_ber(4.0) - 1) < 0.1
