"""Small numpy networks trained by plain gradient descent.

Two architectures are supported: a single-layer perceptron (``slp``) and a
one-hidden-layer perceptron (``mlp``) whose hidden layer is
``linear -> batch norm -> sigmoid``. The output unit is always
``linear -> sigmoid``, and AnyLoss specs add the amplifier on top.

``forward`` is pure: it returns the batch statistics in the cache and
``train`` folds them into the running averages.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .approx import DEFAULT_L, UNIT_ROUNDOFF
from .confusion import threshold_labels
from .losses import (
    LossSpec,
    baseline_grad_p,
    loss_grad_yh,
    loss_value,
)

log = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
MODEL_FORMAT = "anyloss-model"
MODEL_VERSION = 1


def _sigmoid(z):
    return np.clip(expit(z), UNIT_ROUNDOFF, 1.0 - UNIT_ROUNDOFF)


def _amplify(p, L):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-L * (p - 0.5)))


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    arch: str = "slp"
    hidden: int = 2
    batch_norm: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("slp", "mlp"):
            raise ValueError(f"arch must be 'slp' or 'mlp', got {self.arch!r}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        if self.arch == "mlp" and self.hidden < 1:
            raise ValueError("hidden must be at least 1")


@dataclass
class Network:
    config: NetworkConfig
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def uses_bn(self) -> bool:
        return self.config.arch == "mlp" and self.config.batch_norm

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def layer_shapes(self) -> list[tuple[int, int]]:
        m = self.config.input_dim
        if self.config.arch == "slp":
            return [(m, 1)]
        return [(m, self.config.hidden), (self.config.hidden, 1)]


@dataclass
class ForwardCache:
    X: np.ndarray
    Z: np.ndarray
    P: np.ndarray
    YH: np.ndarray
    L: float
    training: bool
    hidden: dict[str, np.ndarray] = field(default_factory=dict)


def init(config: NetworkConfig) -> Network:
    rng = np.random.default_rng(config.seed)
    m = config.input_dim
    if config.arch == "slp":
        bound = 1.0 / math.sqrt(m)
        params = {"W": rng.uniform(-bound, bound, size=m), "b": np.zeros(1)}
        return Network(config, params)
    h = config.hidden
    b1 = 1.0 / math.sqrt(m)
    b2 = 1.0 / math.sqrt(h)
    params = {"W1": rng.uniform(-b1, b1, size=(m, h))}
    buffers = {}
    if config.batch_norm:
        params["gamma1"] = np.ones(h)
        params["beta1"] = np.zeros(h)
        buffers = {"running_mean1": np.zeros(h), "running_var1": np.ones(h)}
    else:
        params["b1"] = np.zeros(h)
    params["W2"] = rng.uniform(-b2, b2, size=h)
    params["b2"] = np.zeros(1)
    return Network(config, params, buffers)


def _check_input(net: Network, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, net.config.input_dim) if X.size else X.reshape(0, net.config.input_dim)
    if X.ndim != 2 or X.shape[1] != net.config.input_dim:
        raise ValueError(f"expected {net.config.input_dim} feature columns, got shape {X.shape}")
    return X


def forward(net: Network, X, L: float = DEFAULT_L, training: bool = True) -> ForwardCache:
    X = _check_input(net, X)
    p_ = net.params
    hidden: dict[str, np.ndarray] = {}
    if net.config.arch == "slp":
        Z = X @ p_["W"] + p_["b"][0]
    else:
        A1 = X @ p_["W1"]
        if net.uses_bn:
            if training:
                mu = A1.mean(axis=0)
                var = A1.var(axis=0)
            else:
                mu = net.buffers["running_mean1"]
                var = net.buffers["running_var1"]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (A1 - mu) * inv_std
            S1 = p_["gamma1"] * xhat + p_["beta1"]
            hidden.update(mu=mu, var=var, inv_std=inv_std, xhat=xhat)
        else:
            S1 = A1 + p_["b1"]
        H = _sigmoid(S1)
        hidden["H"] = H
        Z = H @ p_["W2"] + p_["b2"][0]
    P = _sigmoid(Z)
    YH = _amplify(P, L)
    return ForwardCache(X=X, Z=Z, P=P, YH=YH, L=L, training=training, hidden=hidden)


def backward(net: Network, cache: ForwardCache, grad_yh=None, *, grad_p=None) -> dict[str, np.ndarray]:
    """Parameter gradients given ``d loss / d yh`` (AnyLoss) or ``d loss / d p`` (baselines)."""
    if (grad_yh is None) == (grad_p is None):
        raise ValueError("pass exactly one of grad_yh or grad_p")
    X, P, YH = cache.X, cache.P, cache.YH
    if net.config.arch == "mlp" and "H" not in cache.hidden:
        raise ValueError("cache was not produced by this network")
    if grad_p is None:
        grad_yh = np.asarray(grad_yh, dtype=np.float64)
        if grad_yh.shape != YH.shape:
            raise ValueError("grad_yh does not match the cached batch")
        dP = grad_yh * (cache.L * YH * (1.0 - YH))
    else:
        dP = np.asarray(grad_p, dtype=np.float64)
        if dP.shape != P.shape:
            raise ValueError("grad_p does not match the cached batch")
    dZ = dP * P * (1.0 - P)

    p_ = net.params
    if net.config.arch == "slp":
        return {"W": X.T @ dZ, "b": np.array([dZ.sum()])}

    H = cache.hidden["H"]
    grads = {"W2": H.T @ dZ, "b2": np.array([dZ.sum()])}
    dS1 = np.outer(dZ, p_["W2"]) * H * (1.0 - H)
    if net.uses_bn:
        xhat = cache.hidden["xhat"]
        inv_std = cache.hidden["inv_std"]
        grads["gamma1"] = (dS1 * xhat).sum(axis=0)
        grads["beta1"] = dS1.sum(axis=0)
        dxhat = dS1 * p_["gamma1"]
        if cache.training:
            n = X.shape[0]
            dA1 = (inv_std / n) * (
                n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
            )
        else:
            dA1 = dxhat * inv_std
    else:
        grads["b1"] = dS1.sum(axis=0)
        dA1 = dS1
    grads["W1"] = X.T @ dA1
    return grads


def batch_loss(net: Network, X, Y, spec: LossSpec, training: bool = True) -> float:
    """End-to-end loss of one batch, the quantity ``backward`` differentiates."""
    cache = forward(net, X, spec.L, training=training)
    if spec.is_anyloss:
        return loss_value(spec, Y, cache.YH)
    return loss_value(spec, Y, cache.P)


def loss_and_grads(net: Network, X, Y, spec: LossSpec, training: bool = True):
    cache = forward(net, X, spec.L, training=training)
    if spec.is_anyloss:
        lg = loss_grad_yh(spec, Y, cache.YH)
        grads = backward(net, cache, lg.grad)
    else:
        lg = baseline_grad_p(spec, Y, cache.P)
        grads = backward(net, cache, grad_p=lg.grad)
    return lg.value, grads, cache


# learning rates per (arch, loss name)
_DEFAULT_LR = {
    "slp": {"mse": 1e-2, "bce": 1e-1, "accuracy": 5e-3, "f1": 1e-2, "gmean": 5e-3, "bacc": 5e-3},
    "mlp": {"mse": 5e-3, "bce": 3e-3, "accuracy": 5e-3, "f1": 1e-3, "gmean": 1e-2, "bacc": 5e-3},
}


@dataclass
class TrainConfig:
    loss: LossSpec
    epochs: int = 1000
    learning_rate: float = 1e-2
    batch_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must lie in (0, 1]")

    @classmethod
    def defaults(cls, arch: str, loss: LossSpec, **overrides) -> "TrainConfig":
        """Protocol defaults: SLP full-batch for 1000 epochs; MLP 100 epochs with
        5% batches (50% for the class-ratio losses)."""
        if arch == "slp":
            kw = dict(epochs=1000, batch_fraction=1.0)
        else:
            kw = dict(epochs=100, batch_fraction=0.5 if loss.is_class_ratio else 0.05)
        name = loss.kind.name
        kw["learning_rate"] = _DEFAULT_LR[arch].get(name, _DEFAULT_LR[arch]["f1"])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(loss=loss, **kw)


@dataclass
class TrainReport:
    loss_curve: np.ndarray
    wall_time: float
    network: Network
    batch_fraction: float = 1.0
    n_train: int = 0
    stratified_fallback: bool = False

    @property
    def wall_time_per_epoch(self) -> float:
        return self.wall_time / len(self.loss_curve)

    @property
    def settings(self) -> tuple:
        return (len(self.loss_curve), self.batch_fraction, self.n_train)


def _batches(rng, y, batch_size, stratify):
    n = y.shape[0]
    order = rng.permutation(n)
    if not stratify:
        return [order[i:i + batch_size] for i in range(0, n, batch_size)]
    n_batches = math.ceil(n / batch_size)
    pos = order[y[order] == 1]
    neg = order[y[order] == 0]
    n_batches = max(1, min(n_batches, len(pos), len(neg)))
    parts = [np.concatenate(pair) for pair in zip(np.array_split(pos, n_batches),
                                                  np.array_split(neg, n_batches))]
    return [rng.permutation(b) for b in parts]


def _has_both_classes(y, idx):
    s = y[idx].sum()
    return 0 < s < len(idx)


def train(net: Network, X, Y, tc: TrainConfig) -> TrainReport:
    """Mini-batch gradient descent; updates ``net`` in place.

    Batches are reshuffled every epoch. For G-mean and balanced-accuracy
    losses a batch missing one class has no defined gradient, so the epoch is
    re-batched with stratification and a warning is logged once.
    """
    X = _check_input(net, X)
    y = np.asarray(Y, dtype=np.float64).reshape(-1)
    n = y.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if n != X.shape[0]:
        raise ValueError("X and Y have different lengths")
    spec = tc.loss
    if spec.is_class_ratio and not (0 < y.sum() < n):
        raise ValueError(f"{spec.name} needs both classes in the training data")
    rng = np.random.default_rng(tc.seed)
    batch_size = max(1, math.ceil(tc.batch_fraction * n))
    full_batch = batch_size >= n
    stratify = False
    curve = np.empty(tc.epochs)
    lr = tc.learning_rate

    start = time.perf_counter()
    for epoch in range(tc.epochs):
        if full_batch:
            batches = [slice(None)]
        else:
            batches = _batches(rng, y, batch_size, stratify)
            if spec.is_class_ratio and not stratify and not all(_has_both_classes(y, b) for b in batches):
                log.warning("%s: batch without both classes; switching to stratified batches", spec.name)
                stratify = True
                batches = _batches(rng, y, batch_size, True)
        total = 0.0
        for idx in batches:
            value, grads, cache = loss_and_grads(net, X[idx], y[idx], spec, training=True)
            total += value
            for key, g in grads.items():
                net.params[key] -= lr * g
            if net.uses_bn:
                mom = BN_MOMENTUM
                net.buffers["running_mean1"] = mom * net.buffers["running_mean1"] + (1 - mom) * cache.hidden["mu"]
                net.buffers["running_var1"] = mom * net.buffers["running_var1"] + (1 - mom) * cache.hidden["var"]
        curve[epoch] = total / len(batches)
    elapsed = time.perf_counter() - start
    return TrainReport(loss_curve=curve, wall_time=elapsed, network=net,
                       batch_fraction=tc.batch_fraction, n_train=n, stratified_fallback=stratify)


def predict(net: Network, X) -> tuple[np.ndarray, np.ndarray]:
    """Inference-mode probabilities and thresholded labels (from ``p``, not ``yh``)."""
    X = _check_input(net, X)
    if X.shape[0] == 0:
        return np.empty(0), np.empty(0, dtype=np.int64)
    cache = forward(net, X, DEFAULT_L, training=False)
    return cache.P, threshold_labels(cache.P)


def save_model(net: Network, path, L: float = DEFAULT_L) -> None:
    """Write ``net`` as JSON. Floats are stored with ``repr`` precision, so a
    save/load round trip is exact."""
    cfg = net.config
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "arch": cfg.arch,
        "input_dim": cfg.input_dim,
        "hidden": cfg.hidden,
        "batch_norm": bool(cfg.batch_norm),
        "seed": cfg.seed,
        "L": L,
        "bn_eps": BN_EPS,
        "bn_momentum": BN_MOMENTUM,
        "params": {k: v.tolist() for k, v in net.params.items()},
        "buffers": {k: v.tolist() for k, v in net.buffers.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_model(path) -> tuple[Network, float]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not an {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    cfg = NetworkConfig(
        input_dim=doc["input_dim"],
        arch=doc["arch"],
        hidden=doc["hidden"],
        batch_norm=doc["batch_norm"],
        seed=doc["seed"],
    )
    params = {k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()}
    buffers = {k: np.asarray(v, dtype=np.float64) for k, v in doc["buffers"].items()}
    return Network(cfg, params, buffers), float(doc["L"])

