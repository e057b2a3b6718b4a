"""Dense encoder/decoder with hand-written reverse-mode gradients.

The encoder's output is truncated into a spectrum.  The truncation has a
jump at the spiking threshold, so training uses a straight-through rule:
the backward pass treats truncation as the identity for pre-activations in
``[a - ste_band, b]`` and as a constant elsewhere.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    InputShapeError,
    InvalidInputError,
    RejectedProbeError,
    TrainingDivergenceError,
)
from .spectrum import SpectrumParams, check_spectrum, truncate

MODEL_FORMAT = "spectrum-vae"
MODEL_FORMAT_VERSION = 1

_MAX_JOINT_PATTERN_DIMS = 12


def _identity(h):
    return h


def _sigmoid(h):
    return 0.5 * (1.0 + np.tanh(0.5 * h))


# derivative expressed through the activation output y
ACTIVATIONS = {
    "identity": (_identity, lambda y: np.ones_like(y)),
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "sigmoid": (_sigmoid, lambda y: y * (1.0 - y)),
}


@dataclass
class DenseNet:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # shape (fan_in, fan_out)
    biases: list[np.ndarray]
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise InputShapeError("a DenseNet needs at least an input and an output layer")
        if any(int(s) != s or s < 1 for s in self.layer_sizes):
            raise InputShapeError(f"layer sizes must be positive integers: {self.layer_sizes}")
        for tag in (self.hidden_activation, self.output_activation):
            if tag not in ACTIVATIONS:
                raise InvalidInputError(f"unknown activation {tag!r}")
        n = len(self.layer_sizes) - 1
        if len(self.weights) != n or len(self.biases) != n:
            raise InputShapeError("need one weight matrix and bias vector per layer")
        for i, (W, c) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if W.shape != expect or c.shape != (expect[1],):
                raise InputShapeError(f"layer {i}: weight {W.shape}, bias {c.shape}, expected {expect}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def activation(self, layer: int) -> str:
        return self.output_activation if layer == len(self.weights) - 1 else self.hidden_activation

    def parameters(self) -> list[np.ndarray]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def n_params(self) -> int:
        return sum(t.size for t in self.parameters())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.parameters())


def init_dense(layer_sizes, rng: np.random.Generator, hidden="tanh", output="identity") -> DenseNet:
    """Symmetric uniform init with half-width sqrt(6 / (fan_in + fan_out)); zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        s = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(list(layer_sizes), weights, biases, hidden, output)


def _as_batch(net: DenseNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.n_in:
        raise InputShapeError(f"expected input width {net.n_in}, got shape {x.shape}")
    return X, single


def forward(net: DenseNet, x) -> np.ndarray:
    """Evaluate the network on a vector or on a batch of row vectors."""
    X, single = _as_batch(net, x)
    H = X
    for i, (W, c) in enumerate(zip(net.weights, net.biases)):
        H = ACTIVATIONS[net.activation(i)][0](H @ W + c)
    return H[0] if single else H


def forward_cached(net: DenseNet, X: np.ndarray) -> list[np.ndarray]:
    """Forward pass keeping every layer's output (index 0 is the input)."""
    outs = [X]
    for i, (W, c) in enumerate(zip(net.weights, net.biases)):
        outs.append(ACTIVATIONS[net.activation(i)][0](outs[-1] @ W + c))
    return outs


def backward(net: DenseNet, outs: list[np.ndarray], d_out: np.ndarray):
    """Backpropagate ``d_out`` (gradient w.r.t. the net output).

    Returns ``(grad_weights, grad_biases, grad_input)``.
    """
    gW = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    delta = d_out
    for i in reversed(range(len(net.weights))):
        delta = delta * ACTIVATIONS[net.activation(i)][1](outs[i + 1])
        gW[i] = outs[i].T @ delta
        gb[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i].T
    return gW, gb, delta


@dataclass
class SpectrumVae:
    """Encoder, decoder and truncation parameters.

    ``input_shift``/``input_scale`` are a fixed (untrained) affine map: the
    encoder sees ``(x - shift) / scale`` and the decoder's raw output ``o``
    is returned as ``shift + scale * o``.  Both default to the identity.
    """

    encoder: DenseNet
    decoder: DenseNet
    params: SpectrumParams
    input_shift: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    def __post_init__(self):
        D = self.encoder.n_in
        self.input_shift = np.zeros(D) if self.input_shift is None else np.asarray(self.input_shift, dtype=np.float64)
        self.input_scale = np.ones(D) if self.input_scale is None else np.asarray(self.input_scale, dtype=np.float64)
        if self.input_shift.shape != (D,) or self.input_scale.shape != (D,):
            raise InputShapeError("input_shift and input_scale must have length D")
        if not np.all(self.input_scale > 0):
            raise InvalidInputError("input_scale must be positive")
        if self.encoder.n_out != self.params.K or self.decoder.n_in != self.params.K:
            raise InputShapeError(
                f"encoder out {self.encoder.n_out} / decoder in {self.decoder.n_in} must equal K={self.params.K}"
            )
        if self.decoder.n_out != self.encoder.n_in:
            raise InputShapeError("decoder output width must match encoder input width")

    @property
    def D(self) -> int:
        return self.encoder.n_in

    @property
    def K(self) -> int:
        return self.params.K

    @classmethod
    def create(cls, D, K, a, b, encoder_hidden=(32, 32), decoder_hidden=(32, 32), seed=0,
               hidden_activation="tanh", output_activation="identity", normalize_with=None) -> "SpectrumVae":
        """Fresh model; ``normalize_with`` (an (n, D) array) sets the fixed input affine map
        to the per-dimension mean and standard deviation of that data."""
        rng = np.random.default_rng(seed)
        enc = init_dense([D, *encoder_hidden, K], rng, hidden_activation, "identity")
        dec = init_dense([K, *decoder_hidden, D], rng, hidden_activation, output_activation)
        shift = scale = None
        if normalize_with is not None:
            X = np.asarray(normalize_with, dtype=np.float64)
            shift = X.mean(axis=0)
            scale = X.std(axis=0)
            scale = np.where(scale > 0, scale, 1.0)
        return cls(enc, dec, SpectrumParams(a, b, K), shift, scale)

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.input_shift) / self.input_scale

    def pre_activations(self, x) -> np.ndarray:
        return forward(self.encoder, self.normalize(x))

    def encode(self, x) -> np.ndarray:
        return truncate(self.pre_activations(x), self.params)

    def decode(self, z) -> np.ndarray:
        return self.input_shift + self.input_scale * forward(self.decoder, z)

    def reconstruct(self, x) -> np.ndarray:
        return self.decode(self.encode(x))

    def copy(self) -> "SpectrumVae":
        return copy.deepcopy(self)


def encode(model: SpectrumVae, x) -> np.ndarray:
    return model.encode(x)


def reconstruction_error(x, x_tilde) -> np.ndarray | float:
    """Euclidean distance; row-wise for 2-D inputs."""
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x.shape != x_tilde.shape:
        raise InputShapeError(f"shape mismatch {x.shape} vs {x_tilde.shape}")
    d = np.sqrt(np.sum((x - x_tilde) ** 2, axis=-1))
    return float(d) if d.ndim == 0 else d


# -- training -----------------------------------------------------------------


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.05
    sparsity_weight: float = 0.1
    pattern_penalty_weight: float = 0.1
    ste_band: float = 0.1
    pattern_temperature: float = 0.05

    def validate(self, p: SpectrumParams | None = None):
        if self.epochs < 0 or int(self.epochs) != self.epochs:
            raise ConfigError(f"epochs must be a nonnegative integer, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.sparsity_weight < 0 or self.pattern_penalty_weight < 0:
            raise ConfigError("penalty weights must be nonnegative")
        if self.ste_band < 0:
            raise ConfigError("ste_band must be nonnegative")
        if not self.pattern_temperature > 0:
            raise ConfigError("pattern_temperature must be > 0")
        if p is not None and not self.ste_band < p.a:
            raise ConfigError(f"ste_band ({self.ste_band}) must be below a ({p.a})")


@dataclass
class BatchLoss:
    total: float
    recon: float
    sparsity: float
    pattern: float
    grads_enc: tuple = field(repr=False, default=())
    grads_dec: tuple = field(repr=False, default=())


def _all_patterns(K: int) -> np.ndarray:
    """(2^K, K) 0/1 matrix, row r = binary digits of r with dim 1 as the lowest bit."""
    r = np.arange(2**K)[:, None]
    return ((r >> np.arange(K)[None, :]) & 1).astype(np.float64)


def soft_pattern_entropy(z_pre: np.ndarray, a: float, tau: float):
    """Entropy (bits) of the batch's relaxed spiking-pattern distribution and its gradient.

    Each dim spikes with probability sigmoid((z_pre - a) / tau); a sample's
    soft pattern distribution is the product over dims, and the batch
    distribution is their mean.  Above ``_MAX_JOINT_PATTERN_DIMS`` latent
    dims the sum of per-dim marginal entropies (an upper bound) is used.
    """
    n, K = z_pre.shape
    s = _sigmoid((z_pre - a) / tau)
    ds_dz = s * (1.0 - s) / tau
    eps = 1e-300
    if K > _MAX_JOINT_PATTERN_DIMS:
        m = s.mean(axis=0)
        m_c = np.clip(m, 1e-12, 1 - 1e-12)
        H = float(-np.sum(m_c * np.log2(m_c) + (1 - m_c) * np.log2(1 - m_c)))
        dH_dm = np.log2((1 - m_c) / m_c)
        return H, (dH_dm[None, :] / n) * ds_dz
    P = _all_patterns(K)  # (R, K)
    F = np.where(P[None, :, :] > 0, s[:, None, :], 1.0 - s[:, None, :])  # (n, R, K)
    # products excluding one factor, via prefix/suffix products
    pre = np.ones_like(F)
    suf = np.ones_like(F)
    pre[:, :, 1:] = np.cumprod(F[:, :, :-1], axis=2)
    suf[:, :, :-1] = np.cumprod(F[:, :, ::-1], axis=2)[:, :, ::-1][:, :, 1:]
    excl = pre * suf
    probs = excl[:, :, 0] * F[:, :, 0]  # (n, R)
    q = probs.mean(axis=0)
    logq = np.log2(np.maximum(q, eps))
    H = float(-np.sum(q * logq))
    dH_dq = -(logq + 1.0 / math.log(2.0))
    sign = 2.0 * P - 1.0  # d F / d s
    dH_ds = np.einsum("r,nrk,rk->nk", dH_dq, excl, sign) / n
    return H, dH_ds * ds_dz


def batch_loss(model: SpectrumVae, X: np.ndarray, cfg: TrainConfig, ste_band: float | None = None,
               with_grads: bool = True) -> BatchLoss:
    """Training objective on one batch and, optionally, its parameter gradients."""
    p = model.params
    band = cfg.ste_band if ste_band is None else ste_band
    n = X.shape[0]
    enc_outs = forward_cached(model.encoder, model.normalize(X))
    z_pre = enc_outs[-1]
    z = truncate(z_pre, p)
    dec_outs = forward_cached(model.decoder, z)
    x_tilde = model.input_shift + model.input_scale * dec_outs[-1]
    diff = x_tilde - X
    recon = float(np.sum(diff * diff) / n)

    sub = (z_pre > 0) & (z_pre < p.a)
    sparsity = float(np.sum(np.where(sub, z_pre, 0.0)) / z_pre.size)

    if cfg.pattern_penalty_weight > 0:
        pattern, d_pattern = soft_pattern_entropy(z_pre, p.a, cfg.pattern_temperature)
    else:
        pattern, d_pattern = 0.0, 0.0

    total = recon + cfg.sparsity_weight * sparsity + cfg.pattern_penalty_weight * pattern
    if not with_grads:
        return BatchLoss(total, recon, sparsity, pattern)

    gWd, gbd, d_z = backward(model.decoder, dec_outs, 2.0 * model.input_scale * diff / n)
    pass_through = (z_pre >= p.a - band) & (z_pre <= p.b)
    d_zpre = np.where(pass_through, d_z, 0.0)
    d_zpre = d_zpre + cfg.sparsity_weight * sub / z_pre.size
    d_zpre = d_zpre + cfg.pattern_penalty_weight * d_pattern
    gWe, gbe, _ = backward(model.encoder, enc_outs, d_zpre)
    return BatchLoss(total, recon, sparsity, pattern, (gWe, gbe), (gWd, gbd))


def _apply(net: DenseNet, grads, lr: float):
    gW, gb = grads
    for W, c, dW, dc in zip(net.weights, net.biases, gW, gb):
        W -= lr * dW
        c -= lr * dc


def train(model: SpectrumVae, data, cfg: TrainConfig, history: list | None = None,
          probe_size: int = 64) -> SpectrumVae:
    """Mini-batch gradient descent with a fixed learning rate.

    Returns a new model; the input model is left untouched.  If ``history``
    is a list, one dict of mean per-epoch loss terms is appended per epoch.
    """
    cfg.validate(model.params)
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.D:
        raise InputShapeError(f"training data must have shape (n, {model.D}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("training data contains non-finite values")
    out = model.copy()
    rng = np.random.default_rng(cfg.seed)
    probe = X[:probe_size]
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(4)
        n_batches = 0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            Xb = X[order[start:start + cfg.batch_size]]
            bl = batch_loss(out, Xb, cfg)
            if not math.isfinite(bl.total):
                raise TrainingDivergenceError(epoch, bi, bl.total)
            _apply(out.encoder, bl.grads_enc, cfg.learning_rate)
            _apply(out.decoder, bl.grads_dec, cfg.learning_rate)
            if not (out.encoder.all_finite() and out.decoder.all_finite()):
                raise TrainingDivergenceError(epoch, bi, float("nan"))
            sums += (bl.total, bl.recon, bl.sparsity, bl.pattern)
            n_batches += 1
        check_spectrum(out.encode(probe), out.params)
        if history is not None:
            m = sums / max(n_batches, 1)
            history.append({"epoch": epoch, "loss": m[0], "recon": m[1], "sparsity": m[2], "pattern": m[3]})
    return out


# -- gradient check -----------------------------------------------------------


def _squared_error_and_grads(model: SpectrumVae, x: np.ndarray):
    cfg = TrainConfig(sparsity_weight=0.0, pattern_penalty_weight=0.0, ste_band=0.0)
    bl = batch_loss(model, x[None, :], cfg, ste_band=0.0)
    return bl.recon, bl.grads_enc, bl.grads_dec


def gradient_check(model: SpectrumVae, x, h: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative gap between analytic and central-difference gradients.

    The loss is the squared reconstruction error of one sample.  The probe is
    rejected unless every encoder pre-activation is more than ``10*h`` away
    from both ``a`` and ``b``.  Relative error per parameter is
    ``|g_an - g_fd| / max(|g_an|, |g_fd|, floor)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.D,):
        raise InputShapeError(f"probe must have shape ({model.D},)")
    p = model.params
    z_pre = model.pre_activations(x)
    gap = np.minimum(np.abs(z_pre - p.a), np.abs(z_pre - p.b))
    if np.any(gap <= 10 * h):
        raise RejectedProbeError(f"pre-activation within {10 * h:g} of a threshold (min gap {gap.min():.3g})")

    _, g_enc, g_dec = _squared_error_and_grads(model, x)
    analytic, numeric = [], []
    work = model.copy()
    for net, grads in ((work.encoder, g_enc), (work.decoder, g_dec)):
        for tensor, g in zip(net.parameters(), [t for pair in zip(*grads) for t in pair]):
            flat = tensor.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                lp = float(np.sum((x - work.reconstruct(x)) ** 2))
                flat[i] = orig - h
                lm = float(np.sum((x - work.reconstruct(x)) ** 2))
                flat[i] = orig
                numeric.append((lp - lm) / (2 * h))
                analytic.append(gflat[i])
    ga = np.asarray(analytic)
    gn = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), floor)
    return float(np.max(np.abs(ga - gn) / denom))


# -- model file ---------------------------------------------------------------


def _net_to_dict(net: DenseNet) -> dict:
    return {
        "layer_sizes": list(net.layer_sizes),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
        "weights": [W.reshape(-1).tolist() for W in net.weights],
        "biases": [c.tolist() for c in net.biases],
    }


def _net_from_dict(d: dict) -> DenseNet:
    sizes = [int(s) for s in d["layer_sizes"]]
    weights = [np.asarray(w, dtype=np.float64).reshape(i, o)
               for w, i, o in zip(d["weights"], sizes[:-1], sizes[1:])]
    biases = [np.asarray(c, dtype=np.float64) for c in d["biases"]]
    return DenseNet(sizes, weights, biases, d["hidden_activation"], d["output_activation"])


def model_to_dict(model: SpectrumVae) -> dict:
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "K": model.params.K,
        "a": model.params.a,
        "b": model.params.b,
        "input_shift": model.input_shift.tolist(),
        "input_scale": model.input_scale.tolist(),
        "encoder": _net_to_dict(model.encoder),
        "decoder": _net_to_dict(model.decoder),
    }


def model_from_dict(d: dict) -> SpectrumVae:
    if d.get("format") != MODEL_FORMAT:
        raise InvalidInputError(f"not a {MODEL_FORMAT} document")
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise InvalidInputError(f"unsupported model format version {d.get('format_version')}")
    return SpectrumVae(_net_from_dict(d["encoder"]), _net_from_dict(d["decoder"]),
                       SpectrumParams(float(d["a"]), float(d["b"]), int(d["K"])),
                       d.get("input_shift"), d.get("input_scale"))


def save_model(model: SpectrumVae, path) -> Path:
    """Write the model as JSON; floats use shortest round-trip decimal text."""
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), indent=1) + "\n")
    return path


def load_model(path) -> SpectrumVae:
    return model_from_dict(json.loads(Path(path).read_text()))
