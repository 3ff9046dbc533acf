"""Core dynamics of the repeated k-group averaging chain.

The chain acts on a vector x of n reals.  One step picks k distinct
coordinates uniformly at random (all C(n, k) groups equally likely) and
replaces each of them by the group's arithmetic mean.  The coordinate mean
is conserved, so every trajectory converges to the constant vector at the
initial mean.

Two numeric modes are supported: fast IEEE double precision for large
simulations, and exact arbitrary-precision rationals for small instances
where bit-for-bit identities are asserted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .metrics import MetricsSample, l1_deviation, l2_energy, martingale_ratio

# Exact-rational runs enumerate denominators that grow like k^steps, so they
# are restricted to oracle scale.
RATIONAL_MAX_N = 12
RATIONAL_MAX_STEPS = 8

# Default block length for pre-generating subset draws in the hot loops.
_BLOCK_STEPS = 4096


class ParameterError(ValueError):
    """A parameter is outside its documented domain."""


class ScaleError(ValueError):
    """An exact-arithmetic operation was requested beyond its size guard."""


class Mode(Enum):
    FLOAT64 = "float64"
    EXACT_RATIONAL = "rational"


def derive_rng(master_seed: int, *stream_key: int) -> np.random.Generator:
    """Derive an independent, replayable random stream.

    The stream is PCG64 seeded with ``SeedSequence(entropy=[master_seed,
    *stream_key])``.  Identical (master_seed, stream_key) always yields an
    identical stream, and distinct keys yield statistically independent
    streams, so trials may run in parallel and be replayed individually.
    """
    ss = np.random.SeedSequence(entropy=[int(master_seed), *[int(v) for v in stream_key]])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ChainParams:
    """Static parameters of one chain: size n, group size k, seed, mode."""

    n: int
    k: int
    seed: int = 0
    mode: Mode = Mode.FLOAT64

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ParameterError(f"n must be >= 2, got {self.n}")
        if not 2 <= self.k <= self.n:
            raise ParameterError(f"k must satisfy 2 <= k <= n, got k={self.k}, n={self.n}")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.mode is Mode.EXACT_RATIONAL and self.n > RATIONAL_MAX_N:
            raise ScaleError(
                f"rational mode is limited to n <= {RATIONAL_MAX_N}, got n={self.n}"
            )


@dataclass(frozen=True)
class SubsetChoice:
    """A chosen group: sorted, distinct, 1-based coordinate indices."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = self.indices
        if len(idx) < 2:
            raise ParameterError(f"a group needs at least 2 indices, got {idx}")
        if idx[0] < 1 or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ParameterError(f"indices must be strictly increasing and >= 1, got {idx}")

    @property
    def k(self) -> int:
        return len(self.indices)


@dataclass
class AveragingState:
    """State vector plus cached facts about the initial condition.

    ``initial_mean`` is cached at construction and used as the centering
    constant for all metrics; the running mean equals it up to float drift.
    ``values`` is a float64 array in FLOAT64 mode and a list of Fractions in
    EXACT_RATIONAL mode.
    """

    values: "np.ndarray | list[Fraction]"
    initial_mean: "float | Fraction"
    step_count: int = 0
    initial_min: "float | Fraction" = 0.0
    initial_max: "float | Fraction" = 0.0
    mode: Mode = Mode.FLOAT64

    @classmethod
    def from_initial(cls, x0: Sequence, mode: Mode = Mode.FLOAT64) -> "AveragingState":
        if len(x0) < 2:
            raise ParameterError("state needs at least 2 coordinates")
        if mode is Mode.EXACT_RATIONAL:
            if len(x0) > RATIONAL_MAX_N:
                raise ScaleError(
                    f"rational mode is limited to n <= {RATIONAL_MAX_N}, got n={len(x0)}"
                )
            vals = [Fraction(v) for v in x0]
            mean = sum(vals, Fraction(0)) / len(vals)
            return cls(vals, mean, 0, min(vals), max(vals), mode)
        arr = np.asarray(x0, dtype=np.float64).copy()
        mean = math.fsum(arr.tolist()) / arr.size
        return cls(arr, mean, 0, float(arr.min()), float(arr.max()), mode)

    @property
    def n(self) -> int:
        return len(self.values)


def subsets_from_uniforms(u: np.ndarray, n: int) -> np.ndarray:
    """Map uniform draws in [0, 1) to sorted 0-based k-subsets of range(n).

    ``u`` has shape (..., k); one subset consumes exactly k doubles.  Draw i
    picks rank ``floor(u_i * (n - i))`` among the n - i indices not chosen
    yet; the rank becomes an absolute index by shifting it past each already
    chosen index in ascending order.  Every ordered selection is equally
    likely, so the resulting set is uniform over all C(n, k) subsets.  The
    scheme is rejection free and its cost does not depend on n, which lets
    whole blocks of steps (or whole batches of trials) be converted at once.
    """
    u = np.asarray(u)
    k = u.shape[-1]
    if not 1 <= k <= n:
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    out = np.empty(u.shape, dtype=np.int64)
    for i in range(k):
        c = (u[..., i] * (n - i)).astype(np.int64)
        if i:
            prev = np.sort(out[..., :i], axis=-1)
            for m in range(i):
                c += c >= prev[..., m]
        out[..., i] = c
    out.sort(axis=-1)
    return out


def sample_k_subset(rng: np.random.Generator, n: int, k: int) -> SubsetChoice:
    """Draw a uniform k-subset of {1, ..., n}, consuming exactly k doubles."""
    if not 2 <= k <= n:
        raise ParameterError(f"k must satisfy 2 <= k <= n, got k={k}, n={n}")
    idx = subsets_from_uniforms(rng.random(k), n)
    return SubsetChoice(tuple(int(i) + 1 for i in idx))


def apply_group_average(state: AveragingState, choice: SubsetChoice) -> AveragingState:
    """Replace the chosen coordinates by their mean; returns a new state."""
    n = state.n
    if choice.indices[-1] > n:
        raise ParameterError(f"index {choice.indices[-1]} out of range for n={n}")
    if state.mode is Mode.EXACT_RATIONAL:
        vals = list(state.values)
        avg = sum((vals[i - 1] for i in choice.indices), Fraction(0)) / choice.k
        for i in choice.indices:
            vals[i - 1] = avg
        new_values: "np.ndarray | list[Fraction]" = vals
    else:
        arr = np.array(state.values, copy=True)
        idx = np.asarray(choice.indices, dtype=np.int64) - 1
        # same primitive as the batched runner: ascending-index gather, sum, divide
        arr[idx] = arr[idx].sum() / choice.k
        new_values = arr
    return AveragingState(
        new_values,
        state.initial_mean,
        state.step_count + 1,
        state.initial_min,
        state.initial_max,
        state.mode,
    )


def step(
    state: AveragingState, rng: np.random.Generator, params: ChainParams
) -> tuple[AveragingState, SubsetChoice]:
    """One chain transition; the chosen subset is returned for logging."""
    if state.n != params.n:
        raise ParameterError(f"state has n={state.n} but params have n={params.n}")
    choice = sample_k_subset(rng, params.n, params.k)
    return apply_group_average(state, choice), choice


def _record_steps(l_max: int, record_every: int) -> list[int]:
    pts = sorted(set(range(0, l_max + 1, record_every)) | {0, l_max})
    return pts


def run(
    params: ChainParams,
    x0: Sequence,
    l_max: int,
    record_every: int = 1,
    rng: "np.random.Generator | None" = None,
) -> list[MetricsSample]:
    """Run ``l_max`` steps and record metrics along the trajectory.

    A sample is recorded at step 0, every ``record_every`` steps, and at the
    final step.  The stream defaults to ``derive_rng(params.seed)``; each
    step consumes exactly k uniform doubles from it.
    """
    if l_max < 0:
        raise ParameterError(f"l_max must be >= 0, got {l_max}")
    if record_every < 1:
        raise ParameterError(f"record_every must be >= 1, got {record_every}")
    if len(x0) != params.n:
        raise ParameterError(f"x0 has length {len(x0)}, params have n={params.n}")
    if rng is None:
        rng = derive_rng(params.seed)

    if params.mode is Mode.EXACT_RATIONAL:
        if l_max > RATIONAL_MAX_STEPS:
            raise ScaleError(
                f"rational mode is limited to {RATIONAL_MAX_STEPS} steps, got {l_max}"
            )
        state = AveragingState.from_initial(x0, Mode.EXACT_RATIONAL)
        record = set(_record_steps(l_max, record_every))
        samples = [_sample_of(state, params)]
        for _ in range(l_max):
            state, _choice = step(state, rng, params)
            if state.step_count in record:
                samples.append(_sample_of(state, params))
        return samples

    state = AveragingState.from_initial(x0, Mode.FLOAT64)
    x = state.values
    mean0 = state.initial_mean
    n, k = params.n, params.k
    record = _record_steps(l_max, record_every)
    samples = []
    if record[0] == 0:
        samples.append(_float_sample(x, mean0, 0, n, k))
        record = record[1:]
    ri = 0
    l = 0
    while l < l_max:
        m = min(_BLOCK_STEPS, l_max - l)
        idx = subsets_from_uniforms(rng.random((m, k)), n)
        for s in range(m):
            ii = idx[s]
            x[ii] = x[ii].sum() / k
            l += 1
            if ri < len(record) and l == record[ri]:
                samples.append(_float_sample(x, mean0, l, n, k))
                ri += 1
    return samples


def _sample_of(state: AveragingState, params: ChainParams) -> MetricsSample:
    t = l1_deviation(state)
    s = l2_energy(state)
    return MetricsSample(
        l=state.step_count,
        t_l1=t,
        s_l2=s,
        m_ratio=martingale_ratio(s, state.step_count, params.n, params.k),
    )


def _float_sample(x: np.ndarray, mean0: float, l: int, n: int, k: int) -> MetricsSample:
    d = x - mean0
    t = math.fsum(np.abs(d).tolist())
    s = math.fsum((d * d).tolist())
    return MetricsSample(l=l, t_l1=t, s_l2=s, m_ratio=martingale_ratio(s, l, n, k))


def run_trials(
    n: int,
    k: int,
    x0: Sequence[float],
    checkpoints: Sequence[int],
    rngs: Sequence[np.random.Generator],
) -> tuple[np.ndarray, np.ndarray]:
    """Run independent float-mode trajectories in lockstep.

    Trial r consumes exactly k uniform doubles per step from ``rngs[r]``, in
    step order, so each trial is bit-identical to a scalar ``run`` with the
    same stream.  Returns arrays T and S of shape (len(checkpoints),
    len(rngs)) holding the L1 deviation and centered L2 energy of every
    trial at each checkpoint step.  Checkpoints must be sorted, distinct and
    nonnegative; steps beyond the last checkpoint are not simulated.
    """
    if len(x0) != n:
        raise ParameterError(f"x0 has length {len(x0)}, expected n={n}")
    if not 2 <= k <= n:
        raise ParameterError(f"k must satisfy 2 <= k <= n, got k={k}, n={n}")
    cps = list(checkpoints)
    if any(c < 0 for c in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
        raise ParameterError(f"checkpoints must be sorted, distinct, >= 0: {cps}")
    nr = len(rngs)
    base = np.asarray(x0, dtype=np.float64)
    mean0 = math.fsum(base.tolist()) / n
    x = np.tile(base, (nr, 1))
    rows = np.arange(nr)[:, None]
    t_out = np.empty((len(cps), nr))
    s_out = np.empty((len(cps), nr))

    def record(ci: int) -> None:
        d = x - mean0
        t_out[ci] = np.abs(d).sum(axis=1)
        s_out[ci] = (d * d).sum(axis=1)

    ci = 0
    if cps and cps[0] == 0:
        record(0)
        ci = 1
    l = 0
    l_max = cps[-1] if cps else 0
    # keep uniform blocks around ~2M doubles regardless of trial count
    block = max(1, min(_BLOCK_STEPS, (2_000_000 // max(1, nr * k)) + 1))
    while l < l_max:
        m = min(block, l_max - l)
        u = np.stack([g.random((m, k)) for g in rngs])
        idx = subsets_from_uniforms(u, n)
        for s in range(m):
            ii = idx[:, s, :]
            x[rows, ii] = (x[rows, ii].sum(axis=1) / k)[:, None]
            l += 1
            if ci < len(cps) and l == cps[ci]:
                record(ci)
                ci += 1
    return t_out, s_out


def replay(params: ChainParams, x0: Sequence, choices: Iterable[SubsetChoice]) -> AveragingState:
    """Re-run a trajectory from a recorded subset sequence."""
    state = AveragingState.from_initial(x0, params.mode)
    for choice in choices:
        if choice.k != params.k:
            raise ParameterError(
                f"logged subset has k={choice.k}, params have k={params.k}"
            )
        state = apply_group_average(state, choice)
    return state


def write_replay_log(choices: Iterable[SubsetChoice], path) -> None:
    """Write one subset per line: 1-based indices, space-separated, ascending."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for choice in choices:
            fh.write(" ".join(str(i) for i in choice.indices) + "\n")


def read_replay_log(path) -> list[SubsetChoice]:
    choices = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                idx = tuple(int(tok) for tok in text.split())
            except ValueError as exc:
                raise ParameterError(f"{path}:{lineno}: bad replay line {text!r}") from exc
            choices.append(SubsetChoice(idx))
    return choices
