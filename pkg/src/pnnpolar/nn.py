"""Small dense networks for sub-block decoding, written directly in numpy.

Hidden layers use ReLU and the output layer a sigmoid giving P(bit = 1).
Training draws fresh noisy codewords for every step, which plays the role
of a noise layer in front of the decoder.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import add_awgn, ebn0_to_sigma, modulate_bpsk, to_llr
from .classic import MapDecoder
from .polar import CodeSpec, expand_info, polar_transform

MODEL_FORMAT = "pnnpolar-mlp"
MODEL_VERSION = 1
INPUT_NORMS = ("clipped_scaled", "raw_llr", "sigmoid")
LOSSES = ("binary_cross_entropy", "mean_squared_error")


class ModelFormatError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


def _sigmoid(z):
    # split by sign to keep exp() from overflowing
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def normalize_llr(llr, mode: str, l_max: float) -> np.ndarray:
    llr = np.asarray(llr, dtype=np.float64)
    if mode == "clipped_scaled":
        return np.clip(llr, -l_max, l_max) / l_max
    if mode == "raw_llr":
        return llr
    if mode == "sigmoid":
        return _sigmoid(np.clip(llr, -l_max, l_max))
    raise ValueError(f"unknown input_norm {mode!r}")


@dataclass
class MlpModel:
    """Weights are stored ``(fan_in, fan_out)`` so a batch is ``x @ W + b``."""

    layer_sizes: list
    weights: list
    biases: list
    input_norm: str = "clipped_scaled"
    l_max: float = 20.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = [int(s) for s in self.layer_sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("need one weight matrix and bias vector per layer")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ValueError(f"layer {i}: shapes {W.shape}, {b.shape} do not match {sizes}")
        if self.input_norm not in INPUT_NORMS:
            raise ValueError(f"unknown input_norm {self.input_norm!r}")
        self.layer_sizes = sizes

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator, **kwargs) -> "MlpModel":
        """He-normal weights for ReLU layers, Glorot for the output layer."""
        weights, biases = [], []
        last = len(layer_sizes) - 2
        for i, (a, b) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            scale = math.sqrt(2.0 / (a + b)) if i == last else math.sqrt(2.0 / a)
            weights.append(rng.standard_normal((a, b)) * scale)
            biases.append(np.zeros(b))
        return cls(list(layer_sizes), weights, biases, **kwargs)

    @property
    def d_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def d_out(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_sizes),
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.input_norm,
            self.l_max,
            dict(self.meta),
        )

    def _forward(self, x):
        """Pre-activations and activations of every layer."""
        acts = [x]
        pre = []
        h = x
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            pre.append(z)
            h = _sigmoid(z) if i == len(self.weights) - 1 else np.maximum(z, 0.0)
            acts.append(h)
        return pre, acts

    def logits(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ W + b, 0.0)
        return h @ self.weights[-1] + self.biases[-1]

    def decode_llr(self, llr) -> np.ndarray:
        """Hard info-bit decisions for (a batch of) sub-block LLRs."""
        x = normalize_llr(llr, self.input_norm, self.l_max)
        return (self.logits(x) > 0).astype(np.uint8)


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.d_in:
        raise ValueError(f"input width {x.shape[-1]} != d_in {model.d_in}")
    return _sigmoid(model.logits(x))


def loss_value(model: MlpModel, x, target, loss: str = "binary_cross_entropy") -> float:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = np.atleast_2d(np.asarray(target, dtype=np.float64))
    z = model.logits(x)
    if loss == "binary_cross_entropy":
        # softplus(z) - t z, the logit form of the cross entropy
        return float(np.mean(np.logaddexp(0.0, z) - t * z))
    if loss == "mean_squared_error":
        return float(np.mean((_sigmoid(z) - t) ** 2))
    raise ValueError(f"unknown loss {loss!r}")


def backprop_grad(model: MlpModel, x, target, loss: str = "binary_cross_entropy"):
    """Gradient of the mean loss; returns ``(value, [(dW, db), ...])``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if x.shape[1] != model.d_in or t.shape != (x.shape[0], model.d_out):
        raise ValueError("input/target dimensions do not match the model")
    pre, acts = model._forward(x)
    p = acts[-1]
    scale = 1.0 / t.size
    if loss == "binary_cross_entropy":
        z = pre[-1]
        value = float(np.mean(np.logaddexp(0.0, z) - t * z))
        delta = (p - t) * scale
    elif loss == "mean_squared_error":
        value = float(np.mean((p - t) ** 2))
        delta = 2.0 * (p - t) * p * (1.0 - p) * scale
    else:
        raise ValueError(f"unknown loss {loss!r}")
    grads = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return value, grads


# blocks with at least this many info bits get the wide layout
WIDE_FROM_K = 9


def default_layout(k: int):
    """Hidden widths and step count used when a config leaves them unset."""
    if k < WIDE_FROM_K:
        return (128, 64, 32), 2**19
    return (512, 256, 128), 2**17


@dataclass
class TrainConfig:
    """Training settings. ``epochs`` and ``hidden`` default per block via :func:`default_layout`."""

    epochs: int | None = None
    batch_size: int = 256
    learning_rate: float = 1e-3
    lr_final: float | None = None
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    train_snr_db: tuple = (0.0, 8.0)
    loss: str = "binary_cross_entropy"
    seed: int = 0
    input_norm: str = "clipped_scaled"
    hidden: tuple | None = None
    l_max: float = 20.0
    k_max_trainable: int = 13
    val_frames: int = 20000
    val_snr_db: float = 4.0

    def __post_init__(self):
        if (self.epochs is not None and self.epochs < 1) or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.input_norm not in INPUT_NORMS:
            raise ValueError(f"unknown input_norm {self.input_norm!r}")
        snr = self.train_snr_db
        self.train_snr_db = (float(snr), float(snr)) if np.isscalar(snr) else tuple(float(v) for v in snr)
        if self.hidden is not None:
            self.hidden = tuple(int(h) for h in self.hidden)

    def resolved(self, k: int) -> "TrainConfig":
        hidden, epochs = default_layout(k)
        return replace(
            self,
            hidden=self.hidden if self.hidden is not None else hidden,
            epochs=self.epochs if self.epochs is not None else epochs,
        )


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def _make_optimizer(params, cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    return Sgd(params, cfg.learning_rate)


def _flat_params(model: MlpModel):
    out = []
    for W, b in zip(model.weights, model.biases):
        out += [W, b]
    return out


def _code_of(sub) -> CodeSpec:
    return sub.code if hasattr(sub, "code") else sub


def generate_batch(sub, sigma, batch: int, cfg: TrainConfig, rng: np.random.Generator):
    """Random info bits through encoder and channel; returns (inputs, targets).

    ``sigma=None`` draws one Eb/N0 per batch uniformly from
    ``cfg.train_snr_db``, using the sub-block's own rate.
    """
    code = _code_of(sub)
    if batch < 1:
        raise ValueError("batch must be >= 1")
    info = rng.integers(0, 2, size=(batch, code.k), dtype=np.uint8)
    x = polar_transform(expand_info(info, code))
    if sigma is None:
        lo, hi = cfg.train_snr_db
        rate = code.k / code.N if code.k else 1.0 / code.N
        sigma = ebn0_to_sigma(rng.uniform(lo, hi), rate)
    llr = to_llr(add_awgn(modulate_bpsk(x), sigma, rng), sigma)
    return normalize_llr(llr, cfg.input_norm, cfg.l_max), info.astype(np.float64)


def train_on_dataset(model: MlpModel, inputs, targets, cfg: TrainConfig) -> list:
    """Full-batch training on fixed data; returns the loss before every step."""
    cfg = cfg.resolved(model.d_out)
    opt = _make_optimizer(_flat_params(model), cfg)
    history = []
    for _ in range(cfg.epochs):
        value, grads = backprop_grad(model, inputs, targets, cfg.loss)
        history.append(value)
        opt.step(_flat_params(model), [g for pair in grads for g in pair])
    return history


def validation_ber(model: MlpModel, code: CodeSpec, ebn0_db: float, frames: int, rng: np.random.Generator):
    """(NN BER, bitwise-MAP BER) on the same held-out frames."""
    sigma = ebn0_to_sigma(ebn0_db, code.rate)
    info = rng.integers(0, 2, size=(frames, code.k), dtype=np.uint8)
    x = polar_transform(expand_info(info, code))
    llr = to_llr(add_awgn(modulate_bpsk(x), sigma, rng), sigma)
    nn_bits = model.decode_llr(llr)
    map_bits = MapDecoder(code).bitwise(llr)[:, code.info]
    return float(np.mean(nn_bits != info)), float(np.mean(map_bits != info))


def train_subblock(sub, cfg: TrainConfig, rng: np.random.Generator | None = None, log=None) -> MlpModel:
    """Train one sub-block decoder; validation BER against MAP lands in ``meta``."""
    code = _code_of(sub)
    if code.k < 1:
        raise ValueError("sub-block has no information bits; nothing to train")
    if code.k > cfg.k_max_trainable:
        raise ValueError(f"k={code.k} exceeds k_max_trainable={cfg.k_max_trainable}")
    cfg = cfg.resolved(code.k)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    model = MlpModel.init(
        [code.N, *cfg.hidden, code.k], rng, input_norm=cfg.input_norm, l_max=cfg.l_max
    )
    params = _flat_params(model)
    opt = _make_optimizer(params, cfg)
    every = max(1, cfg.epochs // 8)
    # geometric decay from learning_rate to lr_final when set
    decay = 1.0
    if cfg.lr_final is not None and cfg.epochs > 1:
        decay = (cfg.lr_final / cfg.learning_rate) ** (1.0 / (cfg.epochs - 1))
    for epoch in range(cfg.epochs):
        opt.lr = cfg.learning_rate * decay**epoch
        x, t = generate_batch(code, None, cfg.batch_size, cfg, rng)
        value, grads = backprop_grad(model, x, t, cfg.loss)
        if not math.isfinite(value):
            raise TrainingError(f"loss diverged at epoch {epoch}")
        opt.step(params, [g for pair in grads for g in pair])
        if log is not None and (epoch + 1) % every == 0:
            log(f"epoch {epoch + 1}/{cfg.epochs} loss {value:.5f}")
    nn_ber, map_ber = validation_ber(model, code, cfg.val_snr_db, cfg.val_frames, rng)
    model.meta = {
        "N": code.N,
        "frozen": list(code.frozen),
        "val_snr_db": cfg.val_snr_db,
        "val_frames": cfg.val_frames,
        "val_ber": nn_ber,
        "val_ber_map": map_ber,
        "train_config": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()},
    }
    return model


def save_model(model: MlpModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layer_sizes": model.layer_sizes,
        "hidden_activation": "relu",
        "output_activation": "sigmoid",
        "input_norm": model.input_norm,
        "l_max": model.l_max,
        "layers": [
            {"weights": W.ravel().tolist(), "biases": b.tolist()}
            for W, b in zip(model.weights, model.biases)
        ],
        "meta": model.meta,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path) -> MlpModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a readable model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"{path}: version {doc.get('version')!r}, expected {MODEL_VERSION}")
    if doc.get("hidden_activation") != "relu" or doc.get("output_activation") != "sigmoid":
        raise ModelFormatError(f"{path}: unsupported activations")
    try:
        sizes = [int(s) for s in doc["layer_sizes"]]
        layers = doc["layers"]
        if len(layers) != len(sizes) - 1:
            raise ModelFormatError(f"{path}: {len(layers)} layers for sizes {sizes}")
        weights, biases = [], []
        for i, layer in enumerate(layers):
            W = np.asarray(layer["weights"], dtype=np.float64)
            b = np.asarray(layer["biases"], dtype=np.float64)
            if W.size != sizes[i] * sizes[i + 1] or b.shape != (sizes[i + 1],):
                raise ModelFormatError(f"{path}: layer {i} has inconsistent dimensions")
            weights.append(W.reshape(sizes[i], sizes[i + 1]))
            biases.append(b)
        model = MlpModel(sizes, weights, biases, doc["input_norm"], float(doc["l_max"]), doc.get("meta", {}))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: {exc}") from exc
    if not all(np.all(np.isfinite(p)) for p in _flat_params(model)):
        raise ModelFormatError(f"{path}: non-finite parameters")
    return model
