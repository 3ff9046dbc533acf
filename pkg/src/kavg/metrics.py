"""Convergence functionals of the averaging chain.

All metrics are computed against the cached initial mean, not the running
mean, and always on centered values.  The centered L2 energy obeys an exact
one-step contraction in expectation with factor tau = 1 - (k-1)/(n-1), which
makes S(l) / tau^l a nonnegative martingale; that ratio is the main
statistical verification target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .chain import AveragingState


@dataclass(frozen=True)
class MetricsSample:
    """One recorded trajectory row.

    Fields are floats in float mode and Fractions in rational mode.
    """

    l: int
    t_l1: "float | Fraction"
    s_l2: "float | Fraction"
    m_ratio: "float | Fraction"


def l1_deviation(state: "AveragingState") -> "float | Fraction":
    """Sum of |x_i - initial_mean| over all coordinates, index-ascending."""
    mean0 = state.initial_mean
    if isinstance(mean0, Fraction):
        return sum((abs(v - mean0) for v in state.values), Fraction(0))
    return math.fsum(abs(float(v) - mean0) for v in state.values)


def l2_energy(state: "AveragingState") -> "float | Fraction":
    """Sum of (x_i - initial_mean)^2, the centered second moment."""
    mean0 = state.initial_mean
    if isinstance(mean0, Fraction):
        return sum(((v - mean0) ** 2 for v in state.values), Fraction(0))
    return math.fsum((float(v) - mean0) ** 2 for v in state.values)


def tau(n: int, k: int) -> float:
    """Per-step expected contraction factor of the centered L2 energy."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    return 1.0 - (k - 1) / (n - 1)


def predicted_l2(s0: float, l: int, n: int, k: int) -> float:
    """Expected centered L2 energy after l steps: tau^l * s0."""
    if l < 0:
        raise ValueError(f"l must be >= 0, got {l}")
    return tau(n, k) ** l * s0


def martingale_ratio(
    s: "float | Fraction", l: int, n: int, k: int
) -> "float | Fraction":
    """S(l) / tau^l, the conserved-mean martingale.

    When k = n the factor tau is 0 and the chain hits the fixed point in one
    step, so S(l) = 0 for l >= 1; the ratio is defined as 0 by convention.
    In float mode the ratio is evaluated in log space to survive tau^l
    underflow on long trajectories.
    """
    if l == 0:
        return s
    if isinstance(s, Fraction):
        t = Fraction(n - k, n - 1)
        if t == 0:
            return Fraction(0)
        return s / t**l
    t = tau(n, k)
    if t == 0.0 or s == 0.0:
        return 0.0
    try:
        return math.exp(math.log(s) - l * math.log(t))
    except OverflowError:
        return math.inf
