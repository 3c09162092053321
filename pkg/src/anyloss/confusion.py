"""Soft and hard confusion matrices and the metrics built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np


@dataclass(frozen=True)
class Accuracy:
    name = "accuracy"


@dataclass(frozen=True)
class FBeta:
    beta: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta!r}")

    @property
    def name(self) -> str:
        return "f1" if self.beta == 1.0 else f"f{self.beta:g}"


@dataclass(frozen=True)
class GMean:
    name = "gmean"


@dataclass(frozen=True)
class BalancedAccuracy:
    name = "bacc"


MetricKind = Union[Accuracy, FBeta, GMean, BalancedAccuracy]

# the four metrics every evaluation report carries
REPORT_METRICS: tuple = (Accuracy(), FBeta(1.0), GMean(), BalancedAccuracy())


@dataclass(frozen=True)
class SoftConfusion:
    tn: float
    fn: float
    fp: float
    tp: float

    @property
    def n(self) -> float:
        return self.tn + self.fn + self.fp + self.tp


@dataclass(frozen=True)
class HardConfusion:
    tn: int
    fn: int
    fp: int
    tp: int

    @property
    def n(self) -> int:
        return self.tn + self.fn + self.fp + self.tp


def _as_vector(a):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    return arr


def _check_same_length(a, b):
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} labels vs {b.shape[0]} predictions")


def threshold_labels(P) -> np.ndarray:
    """Hard labels from probabilities; ``p == 0.5`` maps to the positive class."""
    return (np.asarray(P, dtype=np.float64) >= 0.5).astype(np.int64)


def soft_confusion(Y, YH) -> SoftConfusion:
    y = _as_vector(Y)
    yh = _as_vector(YH)
    _check_same_length(y, yh)
    ny = 1.0 - y
    nyh = 1.0 - yh
    return SoftConfusion(
        tn=float(np.dot(ny, nyh)),
        fn=float(np.dot(y, nyh)),
        fp=float(np.dot(ny, yh)),
        tp=float(np.dot(y, yh)),
    )


def hard_confusion(Y, Yhat) -> HardConfusion:
    y = np.asarray(Y).reshape(-1).astype(np.int64)
    yhat = np.asarray(Yhat).reshape(-1).astype(np.int64)
    _check_same_length(y, yhat)
    if not (np.isin(y, (0, 1)).all() and np.isin(yhat, (0, 1)).all()):
        raise ValueError("hard confusion needs binary labels")
    tp = int(np.sum((y == 1) & (yhat == 1)))
    fn = int(np.sum((y == 1) & (yhat == 0)))
    fp = int(np.sum((y == 0) & (yhat == 1)))
    tn = int(np.sum((y == 0) & (yhat == 0)))
    return HardConfusion(tn=tn, fn=fn, fp=fp, tp=tp)


Confusion = Union[SoftConfusion, HardConfusion]


def is_degenerate(conf: Confusion, kind: MetricKind) -> bool:
    """True when the metric's denominator vanishes for this confusion matrix."""
    if isinstance(kind, Accuracy):
        return conf.n == 0
    if isinstance(kind, FBeta):
        b2 = kind.beta**2
        return (1 + b2) * conf.tp + conf.fp + b2 * conf.fn == 0
    if isinstance(kind, (GMean, BalancedAccuracy)):
        return conf.tp + conf.fn == 0 or conf.tn + conf.fp == 0
    raise TypeError(f"unknown metric kind {kind!r}")


def metric_score(conf: Confusion, kind: MetricKind) -> float:
    """Metric value in [0, 1]; degenerate denominators score 0."""
    if is_degenerate(conf, kind):
        return 0.0
    tn, fn, fp, tp = conf.tn, conf.fn, conf.fp, conf.tp
    if isinstance(kind, Accuracy):
        score = (tp + tn) / (tp + tn + fp + fn)
    elif isinstance(kind, FBeta):
        b2 = kind.beta**2
        score = (1 + b2) * tp / ((1 + b2) * tp + fp + b2 * fn)
    else:
        tpr = tp / (tp + fn)
        tnr = tn / (tn + fp)
        if isinstance(kind, GMean):
            score = math.sqrt(max(tpr * tnr, 0.0))
        else:
            score = 0.5 * (tpr + tnr)
    # soft entries can stray below 0 by rounding
    return min(max(score, 0.0), 1.0)


def metric_from_name(name: str, beta: float | None = None) -> MetricKind:
    key = name.lower().replace("-", "").replace("_", "")
    if key in ("accuracy", "acc", "a"):
        return Accuracy()
    if key in ("gmean", "g"):
        return GMean()
    if key in ("bacc", "balancedaccuracy", "b"):
        return BalancedAccuracy()
    if key in ("f", "fbeta"):
        return FBeta(1.0 if beta is None else beta)
    if key.startswith("f"):
        try:
            return FBeta(float(key[1:]) if beta is None else beta)
        except ValueError:
            pass
    raise ValueError(f"unknown metric {name!r}")
