import json

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from pnnpolar.classic import MapDecoder
from pnnpolar.nn import (
    MlpModel,
    ModelFormatError,
    TrainConfig,
    backprop_grad,
    default_layout,
    generate_batch,
    load_model,
    loss_value,
    mlp_forward,
    normalize_llr,
    save_model,
    train_on_dataset,
    train_subblock,
    validation_ber,
)
from pnnpolar.polar import CodeSpec, construct_frozen_set, expand_info, polar_transform
from pnnpolar.channel import modulate_bpsk


def numeric_grad(model, x, t, loss, h=1e-4):
    out = []
    for W, b in zip(model.weights, model.biases):
        pair = []
        for P in (W, b):
            G = np.zeros_like(P)
            for idx in np.ndindex(P.shape):
                old = P[idx]
                P[idx] = old + h
                up = loss_value(model, x, t, loss)
                P[idx] = old - h
                down = loss_value(model, x, t, loss)
                P[idx] = old
                G[idx] = (up - down) / (2 * h)
            pair.append(G)
        out.append(pair)
    return out


def assert_grads_match(model, x, t, loss):
    _, grads = backprop_grad(model, x, t, loss)
    num = numeric_grad(model, x, t, loss)
    for (dW, db), (nW, nb) in zip(grads, num):
        for a, n in ((dW, nW), (db, nb)):
            scale = np.maximum(np.abs(a) + np.abs(n), 1e-6)
            assert np.all(np.abs(a - n) / scale <= 1e-3), np.max(np.abs(a - n) / scale)


def test_forward_examples():
    m = MlpModel([3, 4, 2], [np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
    assert np.allclose(mlp_forward(m, np.ones((5, 3))), 0.5)
    one = MlpModel([1, 1], [np.ones((1, 1))], [np.zeros(1)])
    assert mlp_forward(one, [0.0]).tolist() == [0.5]
    with pytest.raises(ValueError):
        mlp_forward(m, np.ones(4))


def test_model_validation():
    with pytest.raises(ValueError):
        MlpModel([3, 2], [np.zeros((2, 3))], [np.zeros(2)])
    with pytest.raises(ValueError):
        MlpModel([3], [], [])


def test_forward_lipschitz_bound():
    rng = np.random.default_rng(0)
    m = MlpModel.init([16, 32, 16, 8], rng)
    # ReLU is 1-Lipschitz and the sigmoid 1/4-Lipschitz
    bound = 0.25 * np.prod([np.linalg.norm(W, 2) for W in m.weights])
    x = rng.normal(size=16)
    for _ in range(20):
        dx = rng.normal(size=16) * 1e-3
        diff = np.linalg.norm(mlp_forward(m, x + dx) - mlp_forward(m, x))
        assert diff <= bound * np.linalg.norm(dx) + 1e-12


@pytest.mark.parametrize("loss", ["binary_cross_entropy", "mean_squared_error"])
@pytest.mark.parametrize("sizes", [[4, 3], [6, 8, 5, 2], [8, 16, 8, 4, 3]])
def test_gradient_check(sizes, loss):
    for seed in range(5):
        rng = np.random.default_rng(seed)
        m = MlpModel.init(sizes, rng)
        for b in m.biases:
            b += rng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=(7, sizes[0]))
        t = rng.integers(0, 2, (7, sizes[-1]))
        assert_grads_match(m, x, t, loss)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(1, 64), min_size=2, max_size=5), st.integers(0, 2**16))
def test_gradient_check_property(sizes, seed):
    rng = np.random.default_rng(seed)
    sizes = sizes[:2] + [min(s, 8) for s in sizes[2:]]  # keep the finite-difference cost bounded
    m = MlpModel.init(sizes, rng)
    for b in m.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(3, sizes[0]))
    t = rng.integers(0, 2, (3, sizes[-1]))
    # finite differences are meaningless across a ReLU kink
    pre, _ = m._forward(x)
    assume(all(np.min(np.abs(z)) > 1e-3 for z in pre[:-1]))
    assert_grads_match(m, x, t, "binary_cross_entropy")


def test_gradient_special_cases():
    m = MlpModel([2, 1], [np.array([[50.0], [50.0]])], [np.zeros(1)])
    _, grads = backprop_grad(m, np.ones((1, 2)), np.ones((1, 1)))
    assert np.max(np.abs(grads[0][0])) < 1e-12
    rng = np.random.default_rng(1)
    m = MlpModel.init([4, 5, 3], rng)
    m.weights[0][:] = 0.0
    m.biases[0][:] = rng.normal(size=5)
    _, grads = backprop_grad(m, np.zeros((2, 4)), np.ones((2, 3)))
    assert not grads[0][0].any()
    assert np.any(grads[1][1] != 0)
    with pytest.raises(ValueError):
        backprop_grad(m, np.zeros((2, 4)), np.ones((2, 2)))


def test_input_norms():
    llr = np.array([-40.0, -10.0, 0.0, 10.0, 40.0])
    assert normalize_llr(llr, "clipped_scaled", 20.0).tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert normalize_llr(llr, "raw_llr", 20.0).tolist() == llr.tolist()
    s = normalize_llr(llr, "sigmoid", 20.0)
    assert np.all((s > 0) & (s < 1)) and s[2] == 0.5
    with pytest.raises(ValueError):
        normalize_llr(llr, "nope", 20.0)


def test_generate_batch():
    code = construct_frozen_set(8, 4)
    cfg = TrainConfig(input_norm="raw_llr")
    x, t = generate_batch(code, 1e-4, 64, cfg, np.random.default_rng(0))
    words = polar_transform(expand_info(t.astype(np.uint8), code))
    assert np.array_equal((x < 0).astype(np.uint8), words)
    x, t = generate_batch(CodeSpec(8, range(8)), 0.5, 32, cfg, np.random.default_rng(1))
    assert t.shape == (32, 0) and np.mean(x > 0) > 0.9
    # moments of LLR = 2(s + n)/sigma^2, sign-corrected
    sigma = 1.0
    x, t = generate_batch(code, sigma, 50000, cfg, np.random.default_rng(2))
    s = modulate_bpsk(polar_transform(expand_info(t.astype(np.uint8), code)))
    aligned = x * s
    assert aligned.mean() == pytest.approx(2 / sigma**2, rel=0.02)
    assert aligned.var() == pytest.approx(4 / sigma**2, rel=0.02)
    with pytest.raises(ValueError):
        generate_batch(code, 1.0, 0, cfg, np.random.default_rng(0))


def test_sgd_loss_non_increasing_on_fixed_data():
    code = construct_frozen_set(8, 4)
    rng = np.random.default_rng(3)
    info = ((np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1).astype(np.uint8)
    words = polar_transform(expand_info(info, code))
    llr = 2 * (modulate_bpsk(words) + 0.8 * rng.standard_normal(words.shape)) / 0.64
    x = normalize_llr(llr, "clipped_scaled", 20.0)
    model = MlpModel.init([8, 32, 16, 4], rng)
    cfg = TrainConfig(epochs=300, optimizer="sgd", learning_rate=1e-3)
    hist = train_on_dataset(model, x, info.astype(float), cfg)
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert hist[-1] < hist[0]


def test_train_config_validation():
    for bad in (dict(epochs=0), dict(batch_size=0), dict(learning_rate=0.0), dict(optimizer="rmsprop"), dict(loss="hinge")):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    assert TrainConfig(train_snr_db=3).train_snr_db == (3.0, 3.0)


def test_layout_defaults_by_k():
    small, wide = TrainConfig().resolved(8), TrainConfig().resolved(13)
    assert (small.hidden, small.epochs) == default_layout(8) == ((128, 64, 32), 2**19)
    assert (wide.hidden, wide.epochs) == ((512, 256, 128), 2**17)
    pinned = TrainConfig(epochs=5, hidden=(4,)).resolved(13)
    assert (pinned.hidden, pinned.epochs) == ((4,), 5)


def test_train_subblock_guards_and_determinism():
    code = construct_frozen_set(8, 4)
    cfg = TrainConfig(epochs=40, batch_size=32, val_frames=200, seed=9)
    a = train_subblock(code, cfg)
    b = train_subblock(code, cfg)
    for Wa, Wb in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.array_equal(Wa, Wb)
    assert a.layer_sizes == [8, 128, 64, 32, 4]
    assert {"val_ber", "val_ber_map", "val_snr_db"} <= set(a.meta)
    with pytest.raises(ValueError):
        train_subblock(CodeSpec(8, range(8)), cfg)
    with pytest.raises(ValueError):
        train_subblock(construct_frozen_set(16, 14), cfg)


def test_model_file_round_trip(tmp_path):
    m = MlpModel.init([16, 12, 5], np.random.default_rng(4), meta={"note": "x"})
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    x = np.random.default_rng(5).normal(size=(10, 16))
    assert np.array_equal(mlp_forward(m, x), mlp_forward(back, x))
    assert back.meta == {"note": "x"}


def test_model_file_errors(tmp_path):
    m = MlpModel.init([4, 3, 2], np.random.default_rng(6))
    path = tmp_path / "m.json"
    save_model(m, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ModelFormatError):
        load_model(path)
    doc = json.loads(text)
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="version"):
        load_model(path)
    doc = json.loads(text)
    doc["layers"][0]["biases"] = [0.0]
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(path)


@pytest.fixture(scope="module")
def trained_8_4():
    return train_subblock(construct_frozen_set(8, 4), TrainConfig(epochs=2**18, seed=42))


def test_trained_8_4_close_to_map(trained_8_4):
    m = trained_8_4.meta
    assert m["val_ber"] <= 1.5 * m["val_ber_map"]


def test_trained_8_4_normalized_error(trained_8_4):
    code = construct_frozen_set(8, 4)
    ratios = []
    for snr in (0, 2, 4, 6):
        nn, ref = validation_ber(trained_8_4, code, snr, 100000, np.random.default_rng(100 + snr))
        ratios.append(nn / ref)
    assert np.mean(ratios) <= 1.2, ratios


def test_inference_thread_safe(trained_8_4):
    from concurrent.futures import ThreadPoolExecutor

    x = np.random.default_rng(7).normal(scale=4, size=(4, 500, 8))
    ref = [trained_8_4.decode_llr(b) for b in x]
    with ThreadPoolExecutor(4) as pool:
        out = list(pool.map(trained_8_4.decode_llr, x))
    assert all(np.array_equal(a, b) for a, b in zip(ref, out))
