"""Sigmoid amplifier that pushes class probabilities toward 0/1.

The amplifier ``A(p) = 1 / (1 + exp(-L (p - 0.5)))`` must satisfy two
conditions for a given scale ``L``:

* amplifier: ``|A(p) - 0.5| >= |p - 0.5|`` (it pushes away from 0.5);
* no saturation: ``0 < A(p) < 1`` when evaluated in float64.

Both are checked at the extreme inputs ``p = t`` and ``p = 1 - t`` for an
accuracy level ``t``, which gives a closed-form interval of usable ``L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_L = 73.0

# float64 unit roundoff; 1 + u rounds to 1 under round-half-even
UNIT_ROUNDOFF = 2.0**-53
_SIGMOID_LO = UNIT_ROUNDOFF
_SIGMOID_HI = 1.0 - UNIT_ROUNDOFF

TABLE_LEVELS = (0.1, 0.01, 0.001, 1e-14, 1e-15, 1e-16)


def _check_scale(L):
    if not (isinstance(L, (int, float, np.floating, np.integer)) and math.isfinite(L) and L > 0):
        raise ValueError(f"amplifying scale must be a positive finite real, got {L!r}")


def sigmoid(z):
    """Logistic function, clamped to ``[2**-53, 1 - 2**-53]``.

    Accepts scalars or arrays. Non-finite input raises ``ValueError``.
    """
    z_arr = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z_arr)):
        raise ValueError("sigmoid input must be finite")
    # split by sign so exp never overflows
    out = np.empty_like(z_arr)
    pos = z_arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z_arr[pos]))
    ez = np.exp(z_arr[~pos])
    out[~pos] = ez / (1.0 + ez)
    np.clip(out, _SIGMOID_LO, _SIGMOID_HI, out=out)
    if np.ndim(z) == 0:
        return float(out)
    return out


def approximate(p, L=DEFAULT_L):
    """Amplified probability ``1 / (1 + exp(-L (p - 0.5)))``.

    No clamping is applied here: with a too-large ``L`` the result rounds to
    exactly 0.0 or 1.0, which is the saturation this module exists to detect.
    """
    _check_scale(L)
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(p_arr)) or np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-L * (p_arr - 0.5)))
    if np.ndim(p) == 0:
        return float(out)
    return out


def approximate_derivative(yh, L=DEFAULT_L):
    """``dA/dp`` written in terms of the amplifier output: ``L * yh * (1 - yh)``.

    Returns 0 when ``yh`` is exactly 0 or 1; callers treat that as a stalled
    update rather than an error.
    """
    yh_arr = np.asarray(yh, dtype=np.float64)
    out = L * yh_arr * (1.0 - yh_arr)
    if np.ndim(yh) == 0:
        return float(out)
    return out


def check_amplifier(p: float, L: float) -> bool:
    """True when ``A`` moves ``p`` at least as far from 0.5 as it already was."""
    return abs(approximate(p, L) - 0.5) >= abs(p - 0.5)


def check_no_saturation(p: float, L: float) -> bool:
    """True when ``A(p)`` is strictly inside (0, 1) in float64."""
    a = approximate(p, L)
    return 0.0 < a < 1.0


def _check_level(t):
    if not (math.isfinite(t) and 0.0 < t < 0.5):
        raise ValueError(f"accuracy level must lie in (0, 0.5), got {t!r}")


def min_valid_L(t: float) -> float:
    """Smallest ``L`` with ``A(t) <= t`` (solves ``A(t) = t``)."""
    _check_level(t)
    return math.log((1.0 - t) / t) / (0.5 - t)


def max_valid_L(t: float) -> float:
    """Supremum of ``L`` keeping ``A(1 - t) < 1`` in float64.

    At this exact value ``exp(-L (0.5 - t))`` equals the unit roundoff and the
    sum ``1 + 2**-53`` rounds to 1, so the bound itself is excluded.
    """
    _check_level(t)
    return 53.0 * math.log(2.0) / (0.5 - t)


@dataclass(frozen=True)
class LRange:
    min_L: float
    max_L: float

    @property
    def empty(self) -> bool:
        return self.min_L > self.max_L

    @property
    def table_min(self) -> float:
        # round inward so the printed bound is itself a valid L
        return math.ceil(round(self.min_L * 100, 9)) / 100

    @property
    def table_max(self) -> float:
        return math.floor(round(self.max_L * 100, 9)) / 100

    def __contains__(self, L: float) -> bool:
        return self.min_L <= L < self.max_L


def valid_L_range(t: float) -> LRange:
    return LRange(min_valid_L(t), max_valid_L(t))
