"""AnyLoss values and their gradients, plus the MSE and BCE baselines.

AnyLoss variants are written as ``1 - metric(soft confusion)`` and consume
the amplified outputs ``yh``; the baselines consume plain probabilities ``p``.
Gradients are w.r.t. those inputs; the network module chains them back to
the weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .approx import DEFAULT_L, UNIT_ROUNDOFF, valid_L_range
from .confusion import (
    Accuracy,
    BalancedAccuracy,
    FBeta,
    GMean,
    metric_from_name,
    metric_score,
    soft_confusion,
)

GRAD_CLAMP = 1e-12
_P_LO = UNIT_ROUNDOFF
_P_HI = 1.0 - UNIT_ROUNDOFF

# conservative band at accuracy level 1e-15
_DEFAULT_BAND = valid_L_range(1e-15)


class DegenerateClassError(ValueError):
    """A class-ratio loss saw a batch that contains only one class."""


@dataclass(frozen=True)
class MSE:
    name = "mse"


@dataclass(frozen=True)
class BCE:
    name = "bce"


LossKind = Union[Accuracy, FBeta, GMean, BalancedAccuracy, MSE, BCE]


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind
    L: float = DEFAULT_L
    allow_any_L: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.L) and self.L > 0):
            raise ValueError(f"L must be positive, got {self.L!r}")
        if self.is_anyloss and not self.allow_any_L:
            lo, hi = _DEFAULT_BAND.table_min, _DEFAULT_BAND.table_max
            if not lo <= self.L <= hi:
                raise ValueError(
                    f"L={self.L} lies outside the valid band [{lo}, {hi}]; "
                    "pass allow_any_L=True for sweeps"
                )

    @property
    def is_anyloss(self) -> bool:
        return not isinstance(self.kind, (MSE, BCE))

    @property
    def is_class_ratio(self) -> bool:
        return isinstance(self.kind, (GMean, BalancedAccuracy))

    @property
    def name(self) -> str:
        if self.is_anyloss:
            return f"L_{self.kind.name}"
        return self.kind.name

    def to_dict(self) -> dict:
        d = {"loss": self.kind.name, "L": self.L}
        if isinstance(self.kind, FBeta):
            d["beta"] = self.kind.beta
        return d


@dataclass
class LossGrad:
    value: float
    grad: np.ndarray


def loss_from_name(name: str, beta: float | None = None, L: float = DEFAULT_L,
                   allow_any_L: bool = False) -> LossSpec:
    """Parse names such as ``mse``, ``bce``, ``acc``, ``f1``, ``f0.5``, ``gmean``, ``bacc``.

    A leading ``L_`` is accepted, so ``L_f1`` and ``f1`` are the same loss.
    """
    key = name.strip()
    if key.lower().startswith("l_"):
        key = key[2:]
    low = key.lower()
    if low == "mse":
        return LossSpec(MSE(), L)
    if low == "bce":
        return LossSpec(BCE(), L)
    return LossSpec(metric_from_name(key, beta), L, allow_any_L=allow_any_L)


def _prepare(Y, V):
    y = np.asarray(Y, dtype=np.float64).reshape(-1)
    v = np.asarray(V, dtype=np.float64).reshape(-1)
    if y.shape[0] == 0:
        raise ValueError("empty input")
    if y.shape[0] != v.shape[0]:
        raise ValueError(f"length mismatch: {y.shape[0]} labels vs {v.shape[0]} outputs")
    return y, v


def loss_value(spec: LossSpec, Y, V) -> float:
    """Loss for labels ``Y`` and outputs ``V`` (``yh`` for AnyLoss, ``p`` for baselines)."""
    y, v = _prepare(Y, V)
    if isinstance(spec.kind, MSE):
        return float(np.mean((y - v) ** 2))
    if isinstance(spec.kind, BCE):
        return _bce(y, np.clip(v, _P_LO, _P_HI))
    return 1.0 - metric_score(soft_confusion(y, v), spec.kind)


def _bce(y, p):
    # labels are binary, so one log of the probability assigned to the true class suffices
    return float(-np.mean(np.log(np.where(y > 0.5, p, 1.0 - p))))


def _grad_fbeta(y, yh, beta):
    b2 = beta * beta
    d = b2 * y.sum() + yh.sum()
    s = np.dot(y, yh)
    return -(1.0 + b2) * (y * d - s) / (d * d)


def _grad_gmean(y, yh, n_pos, n_neg):
    tp = np.dot(y, yh)
    tn = np.dot(1.0 - y, 1.0 - yh)
    g = math.sqrt(tp * tn / (n_pos * n_neg))
    return -(y * tn - (1.0 - y) * tp) / (2.0 * g * n_pos * n_neg)


def _grad_bacc(y, n, n_pos):
    return (n_pos - n * y) / (2.0 * n_pos * (n - n_pos))


def loss_grad_yh(spec: LossSpec, Y, YH) -> LossGrad:
    """Value and ``d loss / d yh`` for an AnyLoss spec.

    The F-beta, G-mean and balanced-accuracy gradients couple every sample
    through batch sums; only the accuracy gradient is per-sample.
    """
    if not spec.is_anyloss:
        raise ValueError(f"{spec.name} is not an AnyLoss variant; use baseline_grad_p")
    y, yh = _prepare(Y, YH)
    value = loss_value(spec, y, yh)
    n = y.shape[0]
    kind = spec.kind
    if isinstance(kind, Accuracy):
        return LossGrad(value, (1.0 - 2.0 * y) / n)
    yh = np.clip(yh, GRAD_CLAMP, 1.0 - GRAD_CLAMP)
    if isinstance(kind, FBeta):
        return LossGrad(value, _grad_fbeta(y, yh, kind.beta))
    n_pos = float(y.sum())
    if n_pos == 0 or n_pos == n:
        raise DegenerateClassError(
            f"{spec.name} needs both classes in the batch (positives={n_pos:g}, n={n})"
        )
    if isinstance(kind, GMean):
        return LossGrad(value, _grad_gmean(y, yh, n_pos, n - n_pos))
    return LossGrad(value, _grad_bacc(y, n, n_pos))


def baseline_grad_p(spec: LossSpec, Y, P) -> LossGrad:
    """Value and ``d loss / d p`` for the MSE or BCE baseline."""
    y, p = _prepare(Y, P)
    n = y.shape[0]
    if isinstance(spec.kind, MSE):
        return LossGrad(loss_value(spec, y, p), -2.0 * (y - p) / n)
    if isinstance(spec.kind, BCE):
        pc = np.clip(p, _P_LO, _P_HI)
        return LossGrad(_bce(y, pc), (pc - y) / (n * pc * (1.0 - pc)))
    raise ValueError(f"{spec.name} is not a baseline loss")


ALL_LOSS_NAMES = ("mse", "bce", "acc", "f1", "gmean", "bacc")


def default_specs(L: float = DEFAULT_L) -> list[LossSpec]:
    return [loss_from_name(name, L=L) for name in ALL_LOSS_NAMES]
