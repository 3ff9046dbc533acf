"""Exact brute-force verification of the one-step L2 contraction identity.

Everything in this module runs in arbitrary-precision rational arithmetic
and enumerates groups exhaustively, so equalities are checked exactly, with
no tolerances.  The averaging arithmetic here is intentionally written out
independently of the simulation module: this is the reference the simulator
is checked against.

Size guards are hard errors.  Enumerating C(n, k) subsets is feasible up to
n = 12; enumerating all subset sequences of length l multiplies the cost by
C(n, k) per step and is capped at n = 6, l = 3.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .chain import ScaleError, SubsetChoice

MAX_N_ONE_STEP = 12
MAX_N_MULTI_STEP = 6
MAX_DEPTH_MULTI_STEP = 3

RationalVector = tuple[Fraction, ...]


def as_rational_vector(x: Sequence) -> RationalVector:
    """Coerce a sequence of numbers to exact rationals."""
    return tuple(Fraction(v) for v in x)


def exact_tau(n: int, k: int) -> Fraction:
    """Contraction factor 1 - (k-1)/(n-1) as an exact rational."""
    if not 2 <= k <= n:
        raise ScaleError(f"need 2 <= k <= n, got k={k}, n={n}")
    return Fraction(n - k, n - 1)


def center(x: Sequence) -> RationalVector:
    """Subtract the exact mean, enforcing sum(x) = 0 before enumeration."""
    vec = as_rational_vector(x)
    mean = sum(vec, Fraction(0)) / len(vec)
    return tuple(v - mean for v in vec)


def exact_l2_energy(x: Sequence) -> Fraction:
    """Centered L2 energy, exactly."""
    return sum((v * v for v in center(x)), Fraction(0))


def enumerate_k_subsets(n: int, k: int) -> list[SubsetChoice]:
    """All C(n, k) subsets of {1, ..., n}, exactly once, lexicographic."""
    if not 2 <= k <= n:
        raise ScaleError(f"need 2 <= k <= n, got k={k}, n={n}")
    if n > MAX_N_ONE_STEP:
        raise ScaleError(f"enumeration is limited to n <= {MAX_N_ONE_STEP}, got n={n}")
    return [SubsetChoice(c) for c in itertools.combinations(range(1, n + 1), k)]


def _averaged(x: RationalVector, subset: SubsetChoice) -> RationalVector:
    avg = sum((x[i - 1] for i in subset.indices), Fraction(0)) / subset.k
    vals = list(x)
    for i in subset.indices:
        vals[i - 1] = avg
    return tuple(vals)


def exact_one_step_l2_expectation(x: Sequence, k: int) -> Fraction:
    """Average of the post-step L2 energy over all C(n, k) groups, exactly.

    The input is centered exactly first; the enumeration then sums in
    lexicographic subset order so that any failure report is reproducible.
    """
    vec = center(x)
    n = len(vec)
    subsets = enumerate_k_subsets(n, k)
    total = Fraction(0)
    for subset in subsets:
        y = _averaged(vec, subset)
        total += sum((v * v for v in y), Fraction(0))
    return total / len(subsets)


def exact_l_step_l2_expectation(x: Sequence, k: int, l: int) -> Fraction:
    """Exact E[S(l)] by recursion over all subset sequences of length l."""
    if l < 0:
        raise ScaleError(f"l must be >= 0, got {l}")
    if l > MAX_DEPTH_MULTI_STEP:
        raise ScaleError(
            f"multi-step enumeration is limited to l <= {MAX_DEPTH_MULTI_STEP}, got l={l}"
        )
    vec = center(x)
    n = len(vec)
    if n > MAX_N_MULTI_STEP:
        raise ScaleError(
            f"multi-step enumeration is limited to n <= {MAX_N_MULTI_STEP}, got n={n}"
        )
    subsets = enumerate_k_subsets(n, k)

    def expectation(y: RationalVector, depth: int) -> Fraction:
        if depth == 0:
            return sum((v * v for v in y), Fraction(0))
        total = Fraction(0)
        for subset in subsets:
            total += expectation(_averaged(y, subset), depth - 1)
        return total / len(subsets)

    return expectation(vec, l)


@dataclass(frozen=True)
class ContractionReport:
    """Both sides of the one-step identity and whether they match exactly."""

    n: int
    k: int
    lhs: Fraction
    rhs: Fraction

    @property
    def passed(self) -> bool:
        return self.lhs == self.rhs


def verify_one_step_contraction(n: int, k: int, x0: Sequence) -> ContractionReport:
    """Check enumerated E[S(1)] == tau * S(0) as exact rationals."""
    vec = as_rational_vector(x0)
    if len(vec) != n:
        raise ScaleError(f"x0 has length {len(vec)}, expected n={n}")
    lhs = exact_one_step_l2_expectation(vec, k)
    rhs = exact_tau(n, k) * exact_l2_energy(vec)
    return ContractionReport(n=n, k=k, lhs=lhs, rhs=rhs)
