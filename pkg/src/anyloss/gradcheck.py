"""Finite-difference checks of every analytic gradient in the package.

Two levels are checked: loss gradients w.r.t. the network outputs, and
end-to-end parameter gradients through ``forward``/``backward``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import (
    BalancedAccuracy,
    LossSpec,
    baseline_grad_p,
    default_specs,
    loss_grad_yh,
    loss_value,
)
from .network import NetworkConfig, backward, batch_loss, forward, init

LOSS_TOL = 1e-5
NET_TOL = 1e-4
ATOL = 1e-8
LOSS_H = 1e-6
NET_H = 1e-6

FAULTS = ("bacc-sign",)


@dataclass
class CheckResult:
    level: str
    loss: str
    arch: str
    instances: int
    max_rel_err: float
    tol: float
    worst: str = ""

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def rel_err(analytic, numeric, tol: float) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, ATOL / tol)``.

    The floor makes near-zero components pass when they agree to ``ATOL``
    in absolute terms.
    """
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), ATOL / tol)
    return np.abs(a - b) / scale


def central_diff(f, x: np.ndarray, h: float) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + h
        fp = f(x)
        x.flat[i] = orig - h
        fm = f(x)
        x.flat[i] = orig
        g.flat[i] = (fp - fm) / (2 * h)
    return g


def _sabotaged(spec: LossSpec, fault: str | None) -> bool:
    return fault == "bacc-sign" and isinstance(spec.kind, BalancedAccuracy)


def _output_grad(spec, y, v, fault):
    if spec.is_anyloss:
        g = loss_grad_yh(spec, y, v).grad
    else:
        g = baseline_grad_p(spec, y, v).grad
    return -g if _sabotaged(spec, fault) else g


def _random_labels(rng, n):
    y = rng.integers(0, 2, size=n)
    y[0], y[1] = 1, 0
    return rng.permutation(y).astype(np.float64)


def check_loss_gradients(spec: LossSpec, instances: int = 100, seed: int = 0,
                         fault: str | None = None) -> CheckResult:
    """Compare the output-level gradient with central differences of the loss
    at random ``(Y, outputs)`` with n in [2, 50] and outputs in [0.01, 0.99]."""
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for i in range(instances):
        n = int(rng.integers(2, 51))
        y = _random_labels(rng, n)
        v = rng.uniform(0.01, 0.99, size=n)
        analytic = _output_grad(spec, y, v, fault)
        numeric = central_diff(lambda x: loss_value(spec, y, x), v, LOSS_H)
        err = rel_err(analytic, numeric, LOSS_TOL)
        j = int(np.argmax(err))
        if err[j] > worst:
            worst, where = float(err[j]), f"instance {i}, component {j}: {analytic[j]:.6g} vs {numeric[j]:.6g}"
    return CheckResult("loss", spec.name, "-", instances, worst, LOSS_TOL, where)


def check_network_gradients(spec: LossSpec, arch: str, instances: int = 100, seed: int = 0,
                            n: int = 16, m: int = 4, fault: str | None = None) -> CheckResult:
    """Compare ``backward`` against central differences of the batch loss over
    every parameter of a freshly initialized network on random data."""
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for i in range(instances):
        X = rng.normal(size=(n, m))
        y = _random_labels(rng, n)
        net = init(NetworkConfig(input_dim=m, arch=arch, seed=int(rng.integers(2**31))))
        cache = forward(net, X, spec.L, training=True)
        out = cache.YH if spec.is_anyloss else cache.P
        g_out = _output_grad(spec, y, out, fault)
        grads = backward(net, cache, g_out) if spec.is_anyloss else backward(net, cache, grad_p=g_out)
        for key, param in net.params.items():
            def f(x, key=key):
                saved = net.params[key]
                net.params[key] = x
                try:
                    return batch_loss(net, X, y, spec, training=True)
                finally:
                    net.params[key] = saved
            numeric = central_diff(f, param, NET_H)
            err = rel_err(grads[key], numeric, NET_TOL)
            j = int(np.argmax(err))
            if err.flat[j] > worst:
                worst = float(err.flat[j])
                where = (f"instance {i}, {key}[{j}]: "
                         f"{grads[key].flat[j]:.6g} vs {numeric.flat[j]:.6g}")
    return CheckResult("network", spec.name, arch, instances, worst, NET_TOL, where)


def run_suite(specs: list[LossSpec] | None = None, instances: int = 100, seed: int = 0,
              archs=("slp", "mlp"), fault: str | None = None) -> list[CheckResult]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    specs = specs or default_specs()
    results = []
    for s_i, spec in enumerate(specs):
        results.append(check_loss_gradients(spec, instances, seed + s_i, fault))
        for a_i, arch in enumerate(archs):
            results.append(check_network_gradients(spec, arch, instances, seed + 100 * (a_i + 1) + s_i,
                                                   fault=fault))
    return results
