import math

import numpy as np
import pytest

from pnnpolar.bp import (
    PeInputs,
    StageMessages,
    box_f,
    bp_decode,
    minsum_f,
    pe_update,
    propagate_left_to_right,
    propagate_right_to_left,
    update_layer_l,
    update_layer_r,
)
from pnnpolar.channel import ebn0_to_sigma, modulate_bpsk, to_llr
from pnnpolar.classic import map_decode
from pnnpolar.polar import CodeSpec, construct_frozen_set, expand_info, polar_transform


def closed_form(a, b):
    return math.log((1 + math.exp(a + b)) / (math.exp(a) + math.exp(b)))


def test_box_f_values():
    assert np.all(box_f(0.0, np.linspace(-50, 50, 11)) == 0.0)
    assert box_f(2.0, 2.0) == pytest.approx(closed_form(2.0, 2.0), abs=1e-12)
    assert abs(box_f(2.0, 2.0) - 1.3250027) < 1e-6
    rng = np.random.default_rng(0)
    a, b = rng.normal(scale=5, size=(2, 1000))
    assert np.allclose(box_f(a, b), box_f(b, a))
    ref = np.array([closed_form(x, y) for x, y in zip(a, b)])
    assert np.allclose(box_f(a, b), ref, atol=1e-10)


def test_box_f_large_arguments_stay_finite():
    big = np.array([1e3, -1e3, 999.0])
    out = box_f(big[:, None], big[None, :])
    assert np.all(np.isfinite(out))
    assert box_f(1e3, 1e3) == pytest.approx(1e3 - math.log(2), abs=1e-9)


def test_minsum_proximity_grid():
    g = np.linspace(-20, 20, 201)
    a, b = np.meshgrid(g, g)
    assert np.max(np.abs(box_f(a, b) - minsum_f(a, b))) <= math.log(2) + 1e-12


def test_pe_update_examples():
    assert pe_update(PeInputs(0, 0, 0, 0)) == (0.0, 0.0, 0.0, 0.0)
    l1, l2, r1, r2 = pe_update(PeInputs(3.0, 3.0, 0.0, 0.0))
    assert l1 == pytest.approx(closed_form(3, 3)) and l1 == pytest.approx(2.3093285, abs=1e-6)
    assert l2 == pytest.approx(3.0)
    out = pe_update(PeInputs(1e3, 1e3, 1e3, 1e3), l_max=20.0)
    assert all(np.isfinite(v) and abs(v) <= 20.0 for v in out)


def test_two_node_graph_by_hand():
    a, b, lmax = 0.7, -1.9, 20.0
    msgs = StageMessages.zeros(2)
    msgs.L[1] = [a, b]
    msgs.R[0] = [lmax, 0.0]
    left = propagate_right_to_left(msgs, 2, 1)
    assert left.L[0].tolist() == pytest.approx([closed_form(a, b), closed_form(lmax, a) + b])
    right = propagate_left_to_right(StageMessages(np.zeros((2, 2)), np.array([[lmax, 0.0], [0, 0]])), 1, 2)
    assert right.R[1].tolist() == pytest.approx([0.0, 0.0], abs=1e-12)
    # unchanged inputs give identical results
    assert np.array_equal(propagate_right_to_left(msgs, 2, 1).L, left.L)


def test_zero_messages_stay_zero():
    msgs = StageMessages.zeros(16)
    assert not propagate_right_to_left(msgs, 5, 1).L.any()
    assert not propagate_left_to_right(msgs, 1, 5).R.any()
    with pytest.raises(ValueError):
        propagate_right_to_left(msgs, 1, 1)
    with pytest.raises(ValueError):
        propagate_left_to_right(msgs, 0, 3)


def test_layer_update_matches_pe_definition():
    rng = np.random.default_rng(5)
    msgs = StageMessages(rng.normal(scale=4, size=(4, 8)), rng.normal(scale=4, size=(4, 8)))
    s, d = 2, 2
    ref = msgs.copy()
    update_layer_l(msgs, s)
    update_layer_r(msgs, s)
    for i in range(8):
        if i & d:
            continue
        j = i + d
        pe = pe_update(PeInputs(ref.L[s, i], ref.L[s, j], ref.R[s - 1, i], ref.R[s - 1, j]))
        assert msgs.L[s - 1, i] == pytest.approx(pe[0]) and msgs.L[s - 1, j] == pytest.approx(pe[1])
        assert msgs.R[s, i] == pytest.approx(pe[2]) and msgs.R[s, j] == pytest.approx(pe[3])


def test_bp_noiseless_and_clipping():
    spec = construct_frozen_set(16, 8)
    u, x, soft = bp_decode(np.full(16, 20.0), spec, iters=1)
    assert not u.any() and not x.any()
    rng = np.random.default_rng(2)
    llr = rng.normal(scale=30, size=(50, 16))
    _, _, soft = bp_decode(llr, spec, iters=5, l_max=20.0)
    assert np.max(np.abs(soft)) <= 40.0


def test_bp_two_bits_by_hand():
    spec = CodeSpec(2, [0])
    u, _, soft = bp_decode(np.array([1.0, 3.0]), spec, iters=1)
    assert u.tolist() == [0, 0] and soft[1] > 0
    assert map_decode(np.array([1.0, 3.0]), spec).tolist() == [0, 0]


def test_bp_rate_one_symmetry():
    spec = CodeSpec(4)
    rng = np.random.default_rng(9)
    llr = rng.normal(scale=3, size=(200, 4))
    u_pos = bp_decode(llr, spec, iters=5)[1]
    u_neg = bp_decode(-llr, spec, iters=5)[1]
    assert np.array_equal(u_pos ^ u_neg, np.ones_like(u_pos))


def _frames(spec, ebn0, frames, seed):
    rng = np.random.default_rng(seed)
    info = rng.integers(0, 2, (frames, spec.k), dtype=np.uint8)
    x = polar_transform(expand_info(info, spec))
    sigma = ebn0_to_sigma(ebn0, spec.rate)
    return info, to_llr(modulate_bpsk(x) + sigma * rng.standard_normal(x.shape), sigma)


def test_bp_ber_improves_with_snr():
    spec = construct_frozen_set(8, 4)
    bers = []
    for snr in (0.0, 4.0):
        info, llr = _frames(spec, snr, 10**4, 3)
        u = bp_decode(llr, spec, iters=50)[0]
        bers.append(np.mean(u[:, spec.info] != info))
    assert bers[1] < bers[0]


@pytest.mark.parametrize("N,k", [(8, 4), (16, 8)])
def test_bp_agrees_with_map_at_high_snr(N, k):
    spec = construct_frozen_set(N, k)
    _, llr = _frames(spec, 6.0, 5000, 4)
    u_bp = bp_decode(llr, spec, iters=50)[0]
    u_ml = map_decode(llr, spec)
    assert np.mean(np.all(u_bp == u_ml, axis=1)) >= 0.95


def test_bp_early_stop_keeps_decisions_on_clean_frames():
    spec = construct_frozen_set(16, 8)
    _, llr = _frames(spec, 8.0, 200, 6)
    a = bp_decode(llr, spec, iters=30)[0]
    b = bp_decode(llr, spec, iters=30, early_stop=True)[0]
    assert np.mean(np.all(a == b, axis=1)) > 0.95
