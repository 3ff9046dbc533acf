"""Monte Carlo experiment drivers for the averaging chain.

Every experiment draws its per-trial random streams from a documented key:
``derive_rng(master_seed, STREAM_CODE, n, k, float_bits(param), trial)``,
where ``STREAM_CODE`` identifies the experiment family and ``float_bits`` is
the IEEE-754 bit pattern of the sweep parameter (theta for the step-budget
sweep, epsilon for hitting times, t for the Poissonized runner; the cutoff
profile evaluates one trajectory at several steps and carries no parameter
in the key).  Trials are therefore independent, individually replayable and
insensitive to how they are batched or parallelized.

Replications may be split across worker threads (``KAVG_WORKERS``
environment variable; default: available parallelism).  Chunks are reduced
in trial order, so output tables are byte-identical for any worker count.
"""
from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .chain import (
    ChainParams,
    Mode,
    ParameterError,
    derive_rng,
    run,
    run_trials,
    subsets_from_uniforms,
)
from .metrics import MetricsSample, tau

# Fixed default so that out-of-the-box runs are reproducible; entropy
# seeding is an explicit CLI opt-in.
DEFAULT_MASTER_SEED = 104729

# Stream codes for the per-trial RNG key (see module docstring).
STREAM_THETA = 1
STREAM_MIXING = 2
STREAM_CUTOFF = 3
STREAM_POISSON = 4

QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)
_Z95 = 1.959963984540054

WORKERS_ENV_VAR = "KAVG_WORKERS"


class ConfigError(ValueError):
    """An experiment configuration is invalid."""


class ConfigValueError(ConfigError):
    """A configuration value violates a documented invariant."""


def float_bits(x: float) -> int:
    """IEEE-754 bit pattern of a double, for use in RNG stream keys."""
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def worker_count() -> int:
    """Worker threads for replication batches; KAVG_WORKERS overrides."""
    env = os.environ.get(WORKERS_ENV_VAR)
    if env is not None:
        try:
            w = int(env)
        except ValueError as exc:
            raise ConfigValueError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}") from exc
        if w < 1:
            raise ConfigValueError(f"{WORKERS_ENV_VAR} must be >= 1, got {w}")
        return w
    return os.cpu_count() or 1


def basis_vector(n: int) -> list[float]:
    """The unit-spike start (1, 0, ..., 0): all sweep experiments use it."""
    x0 = [0.0] * n
    x0[0] = 1.0
    return x0


@dataclass(frozen=True)
class ExperimentConfig:
    """Grids, replication count and budgets for the sweep experiments.

    ``epsilon`` is the L1 hitting threshold; when left unset the
    mixing-time sweep reports both 0.1 and 0.01 so the threshold's
    log-level effect stays visible.
    """

    n_grid: tuple[int, ...]
    k_grid: tuple[int, ...]
    replications: int
    theta_grid: tuple[float, ...] = ()
    a_grid: tuple[float, ...] = ()
    epsilon: "float | None" = None
    master_seed: int = DEFAULT_MASTER_SEED
    max_steps: int = 10_000_000

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_grid", tuple(int(v) for v in self.n_grid))
        object.__setattr__(self, "k_grid", tuple(int(v) for v in self.k_grid))
        object.__setattr__(self, "theta_grid", tuple(float(v) for v in self.theta_grid))
        object.__setattr__(self, "a_grid", tuple(float(v) for v in self.a_grid))
        if not self.n_grid:
            raise ConfigValueError("n_grid: must be nonempty")
        if not self.k_grid:
            raise ConfigValueError("k_grid: must be nonempty")
        for n in self.n_grid:
            if n < 2:
                raise ConfigValueError(f"n_grid: n must be >= 2, got {n}")
        for k in self.k_grid:
            if k < 2:
                raise ConfigValueError(f"k_grid: k must be >= 2, got {k}")
        for theta in self.theta_grid:
            if not theta > 0:
                raise ConfigValueError(f"theta_grid: theta must be > 0, got {theta}")
        if self.replications < 1:
            raise ConfigValueError(f"replications: must be >= 1, got {self.replications}")
        if self.epsilon is not None and not 0.0 < self.epsilon < 2.0:
            raise ConfigValueError(f"epsilon: must be in (0, 2), got {self.epsilon}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigValueError(
                f"master_seed: must be a 64-bit unsigned integer, got {self.master_seed}"
            )
        if self.max_steps < 1:
            raise ConfigValueError(f"max_steps: must be >= 1, got {self.max_steps}")

    def epsilons(self) -> tuple[float, ...]:
        return (self.epsilon,) if self.epsilon is not None else (0.1, 0.01)


@dataclass(frozen=True)
class SummaryStats:
    """Mean, normal-approximation CI and nearest-rank quantiles of a sample."""

    mean: float
    stderr: float
    ci95_lo: float
    ci95_hi: float
    quantiles: dict[float, float]
    r: int


def summarize(samples: Sequence[float]) -> SummaryStats:
    """Summary statistics of a nonempty sample.

    stderr is sd/sqrt(r) (0 for a single observation), the CI is the normal
    approximation mean +- 1.96 stderr, and quantiles use the nearest-rank
    convention: quantile(p) is the element of rank max(1, ceil(p*r)) in the
    sorted sample.
    """
    vals = [float(v) for v in samples]
    if not vals:
        raise ParameterError("summarize needs a nonempty sample")
    r = len(vals)
    mean = math.fsum(vals) / r
    if r > 1:
        sd = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (r - 1))
        stderr = sd / math.sqrt(r)
    else:
        stderr = 0.0
    srt = sorted(vals)
    quantiles = {p: srt[max(1, math.ceil(p * r)) - 1] for p in QUANTILE_LEVELS}
    return SummaryStats(
        mean=mean,
        stderr=stderr,
        ci95_lo=mean - _Z95 * stderr,
        ci95_hi=mean + _Z95 * stderr,
        quantiles=quantiles,
        r=r,
    )


def normal_cdf(z: float) -> float:
    """Standard normal CDF, absolute error well below 1e-7."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _map_trial_chunks(r_total: int, chunk_size: int, fn: Callable[[int, int], object]) -> list:
    """Apply fn(lo, hi) over trial ranges, in order, optionally threaded."""
    chunk_size = max(1, chunk_size)
    bounds = [(lo, min(lo + chunk_size, r_total)) for lo in range(0, r_total, chunk_size)]
    w = min(worker_count(), len(bounds))
    if w > 1:
        with ThreadPoolExecutor(max_workers=w) as ex:
            return list(ex.map(lambda b: fn(*b), bounds))
    return [fn(*b) for b in bounds]


def _t_at_checkpoints(
    n: int,
    k: int,
    checkpoints: Sequence[int],
    replications: int,
    rng_for_trial: Callable[[int], np.random.Generator],
) -> np.ndarray:
    """L1 deviation of R basis-start trials at each checkpoint, (C, R)."""
    x0 = basis_vector(n)
    # bound per-chunk state memory to ~32 MB
    rows_cap = max(1, 4_000_000 // n)
    chunk = min(rows_cap, max(1, math.ceil(replications / worker_count())))

    def one_chunk(lo: int, hi: int) -> np.ndarray:
        rngs = [rng_for_trial(r) for r in range(lo, hi)]
        t, _s = run_trials(n, k, x0, checkpoints, rngs)
        return t

    parts = _map_trial_chunks(replications, chunk, one_chunk)
    return np.concatenate(parts, axis=1)


def theta_steps(n: int, theta: float) -> int:
    """Step budget floor(theta * n * ln n); log is the natural logarithm."""
    return math.floor(theta * n * math.log(n))


def _check_pair(n: int, k: int) -> None:
    if k > n:
        raise ConfigValueError(f"grid point n={n}, k={k} violates k <= n")


def theta_sweep(config: ExperimentConfig) -> list[dict]:
    """Mean L1 deviation after floor(theta * n * ln n) steps, per grid point.

    Each (n, k, theta) point runs ``replications`` fresh trajectories from
    the unit-spike start and summarizes T at the final step.  Returns CSV
    ready rows: n,k,theta,steps,mean_T,stderr,ci_lo,ci_hi,q05..q95,r.
    """
    if not config.theta_grid:
        raise ConfigValueError("theta_grid: must be nonempty for theta-sweep")
    rows = []
    for n in config.n_grid:
        for k in config.k_grid:
            _check_pair(n, k)
            for theta in config.theta_grid:
                steps = theta_steps(n, theta)
                if steps > config.max_steps:
                    raise ConfigValueError(
                        f"max_steps: theta={theta}, n={n} needs {steps} steps"
                        f" > max_steps={config.max_steps}"
                    )
                tvals = _t_at_checkpoints(
                    n,
                    k,
                    [steps],
                    config.replications,
                    lambda r: derive_rng(
                        config.master_seed, STREAM_THETA, n, k, float_bits(theta), r
                    ),
                )[0]
                st = summarize(tvals)
                rows.append(
                    {
                        "n": n,
                        "k": k,
                        "theta": theta,
                        "steps": steps,
                        "mean_T": st.mean,
                        "stderr": st.stderr,
                        "ci_lo": st.ci95_lo,
                        "ci_hi": st.ci95_hi,
                        "q05": st.quantiles[0.05],
                        "q25": st.quantiles[0.25],
                        "q50": st.quantiles[0.5],
                        "q75": st.quantiles[0.75],
                        "q95": st.quantiles[0.95],
                        "r": st.r,
                    }
                )
    return rows


@dataclass(frozen=True)
class HittingTime:
    """First step at which T drops to the threshold, or the censoring cap."""

    steps: int
    censored: bool


def mixing_time_trial(
    params: ChainParams,
    x0: Sequence[float],
    epsilon: float,
    max_steps: int,
    rng: "np.random.Generator | None" = None,
) -> HittingTime:
    """First l with T(l) <= epsilon for one trajectory, capped at max_steps.

    T is nonincreasing along a trajectory and converges to 0, so the hitting
    time is almost surely finite; a trial that exhausts ``max_steps`` is
    reported as censored at the cap rather than dropped.  Float mode only.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    if max_steps < 0:
        raise ParameterError(f"max_steps must be >= 0, got {max_steps}")
    if params.mode is not Mode.FLOAT64:
        raise ParameterError("hitting-time estimation runs in float mode only")
    if len(x0) != params.n:
        raise ParameterError(f"x0 has length {len(x0)}, params have n={params.n}")
    if rng is None:
        rng = derive_rng(params.seed)
    n, k = params.n, params.k
    x = [float(v) for v in x0]
    mean0 = math.fsum(x) / n

    def exact_t() -> float:
        return math.fsum(abs(v - mean0) for v in x)

    t = exact_t()
    if t <= epsilon:
        return HittingTime(0, False)
    # incremental T updates with periodic exact refreshes; a crossing is
    # confirmed against the exact sum before it is reported
    refresh_mask = 4095
    l = 0
    block = 4096
    while l < max_steps:
        m = min(block, max_steps - l)
        idx = subsets_from_uniforms(rng.random((m, k)), n).tolist()
        for ii in idx:
            group_sum = 0.0
            d_old = 0.0
            for i in ii:
                v = x[i]
                group_sum += v
                d_old += abs(v - mean0)
            avg = group_sum / k
            for i in ii:
                x[i] = avg
            t += k * abs(avg - mean0) - d_old
            l += 1
            if t <= epsilon:
                t = exact_t()
                if t <= epsilon:
                    return HittingTime(l, False)
            elif not l & refresh_mask:
                t = exact_t()
    return HittingTime(max_steps, True)


def mixing_time_sweep(config: ExperimentConfig) -> list[dict]:
    """Median hitting time of the unit-spike start, per (n, k, epsilon).

    Censored trials enter the quantiles at the cap value (a lower bound) and
    are additionally reported as a fraction, so step-budget truncation can
    never silently bias the estimates downward.  Rows:
    n,k,epsilon,median_hit,q25,q75,censored_frac,r.
    """
    rows = []
    for n in config.n_grid:
        for k in config.k_grid:
            _check_pair(n, k)
            for eps in config.epsilons():
                params = ChainParams(n=n, k=k, seed=config.master_seed)
                x0 = basis_vector(n)

                def one_chunk(lo: int, hi: int) -> list[HittingTime]:
                    return [
                        mixing_time_trial(
                            params,
                            x0,
                            eps,
                            config.max_steps,
                            rng=derive_rng(
                                config.master_seed,
                                STREAM_MIXING,
                                n,
                                k,
                                float_bits(eps),
                                r,
                            ),
                        )
                        for r in range(lo, hi)
                    ]

                chunk = max(1, math.ceil(config.replications / worker_count()))
                hits: list[HittingTime] = []
                for part in _map_trial_chunks(config.replications, chunk, one_chunk):
                    hits.extend(part)
                st = summarize([h.steps for h in hits])
                rows.append(
                    {
                        "n": n,
                        "k": k,
                        "epsilon": eps,
                        "median_hit": int(st.quantiles[0.5]),
                        "q25": int(st.quantiles[0.25]),
                        "q75": int(st.quantiles[0.75]),
                        "censored_frac": sum(h.censored for h in hits) / len(hits),
                        "r": st.r,
                    }
                )
    return rows


def cutoff_steps(n: int, k: int, a: float) -> int:
    """Profile step index floor(n * (log_k n + a * sqrt(log_k n)) / k)."""
    logk_n = math.log(n) / math.log(k)
    return math.floor(n * (logk_n + a * math.sqrt(logk_n)) / k)


def cutoff_profile(config: ExperimentConfig) -> list[dict]:
    """Mean L1 deviation across the conjectured cutoff window.

    For each (n, k) one batch of ``replications`` trajectories is evaluated
    at the step index of every a in a_grid, next to the limiting reference
    value 2 * Phi(-a).  An a whose step index is negative (very negative a
    at small n) yields a flagged row with no statistics.  Rows:
    n,k,a,steps,mean_T,stderr,ref_2phi,r,flag.
    """
    if not config.a_grid:
        raise ConfigValueError("a_grid: must be nonempty for the cutoff profile")
    rows = []
    for n in config.n_grid:
        for k in config.k_grid:
            _check_pair(n, k)
            steps_by_a = {a: cutoff_steps(n, k, a) for a in config.a_grid}
            valid = sorted({s for s in steps_by_a.values() if s >= 0})
            if valid and valid[-1] > config.max_steps:
                raise ConfigValueError(
                    f"max_steps: cutoff profile at n={n}, k={k} needs {valid[-1]}"
                    f" steps > max_steps={config.max_steps}"
                )
            t_by_step: dict[int, np.ndarray] = {}
            if valid:
                tvals = _t_at_checkpoints(
                    n,
                    k,
                    valid,
                    config.replications,
                    lambda r: derive_rng(config.master_seed, STREAM_CUTOFF, n, k, r),
                )
                t_by_step = {s: tvals[i] for i, s in enumerate(valid)}
            for a in config.a_grid:
                steps = steps_by_a[a]
                ref = 2.0 * normal_cdf(-a)
                if steps < 0:
                    rows.append(
                        {
                            "n": n,
                            "k": k,
                            "a": a,
                            "steps": steps,
                            "mean_T": math.nan,
                            "stderr": math.nan,
                            "ref_2phi": ref,
                            "r": 0,
                            "flag": "skipped_negative_step",
                        }
                    )
                    continue
                st = summarize(t_by_step[steps])
                rows.append(
                    {
                        "n": n,
                        "k": k,
                        "a": a,
                        "steps": steps,
                        "mean_T": st.mean,
                        "stderr": st.stderr,
                        "ref_2phi": ref,
                        "r": st.r,
                        "flag": "ok",
                    }
                )
    return rows


def poisson_run(
    params: ChainParams,
    x0: Sequence[float],
    t: float,
    rng: "np.random.Generator | None" = None,
) -> MetricsSample:
    """Continuous-time state at time t via its discrete embedding.

    The chain run at the event times of a rate-1 Poisson clock equals, in
    law, the discrete chain run for N ~ Poisson(t) steps; N is drawn from
    the exact Poisson distribution (never a normal approximation) and the
    returned sample has l = N.
    """
    if t < 0:
        raise ParameterError(f"t must be >= 0, got {t}")
    if params.mode is not Mode.FLOAT64:
        raise ParameterError("the Poissonized runner runs in float mode only")
    if rng is None:
        rng = derive_rng(params.seed)
    n_events = int(rng.poisson(t))
    samples = run(params, x0, n_events, record_every=max(1, n_events), rng=rng)
    return samples[-1]


def poisson_trials(
    n: int,
    k: int,
    x0: Sequence[float],
    t: float,
    replications: int,
    master_seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized replications of poisson_run.

    Trial r consumes one Poisson draw and then k doubles per event from
    ``derive_rng(master_seed, STREAM_POISSON, n, k, float_bits(t), r)``,
    exactly like a scalar poisson_run on that stream.  Returns (S, N):
    the centered L2 energy at time t and the event count, per trial.
    """
    if t < 0:
        raise ParameterError(f"t must be >= 0, got {t}")
    if replications < 1:
        raise ParameterError(f"replications must be >= 1, got {replications}")
    if len(x0) != n:
        raise ParameterError(f"x0 has length {len(x0)}, expected n={n}")
    base = np.asarray(x0, dtype=np.float64)
    mean0 = math.fsum(base.tolist()) / n
    # memory cap ~24 MB of pre-generated doubles per chunk
    expected_max = t + 6.0 * math.sqrt(t) + 16.0
    rows_cap = max(1, int(3_000_000 / (expected_max * k)))
    chunk = min(rows_cap, max(1, math.ceil(replications / worker_count())))

    def one_chunk(lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
        rngs = [
            derive_rng(master_seed, STREAM_POISSON, n, k, float_bits(t), r)
            for r in range(lo, hi)
        ]
        nr = len(rngs)
        counts = np.array([int(g.poisson(t)) for g in rngs], dtype=np.int64)
        nmax = int(counts.max(initial=0))
        if nmax == 0:
            d = base - mean0
            s0 = float((d * d).sum())
            return np.full(nr, s0), counts
        # process trials in descending event count so the active set is a
        # shrinking prefix of the rows
        order = np.argsort(-counts, kind="stable")
        u = np.zeros((nr, nmax, k))
        for pos, tr in enumerate(order):
            c = int(counts[tr])
            if c:
                u[pos, :c] = rngs[tr].random((c, k))
        idx = subsets_from_uniforms(u, n)
        x = np.tile(base, (nr, 1))
        asc = np.sort(counts)
        rows_full = np.arange(nr)[:, None]
        for s in range(nmax):
            active = nr - int(np.searchsorted(asc, s, side="right"))
            if active == 0:
                break
            ii = idx[:active, s, :]
            rows = rows_full[:active]
            x[rows, ii] = (x[rows, ii].sum(axis=1) / k)[:, None]
        d = x - mean0
        s_perm = (d * d).sum(axis=1)
        s_out = np.empty(nr)
        s_out[order] = s_perm
        return s_out, counts

    parts = _map_trial_chunks(replications, chunk, one_chunk)
    s_all = np.concatenate([p[0] for p in parts])
    n_all = np.concatenate([p[1] for p in parts])
    return s_all, n_all


def poisson_table(
    n: int,
    k: int,
    x0: Sequence[float],
    times: Sequence[float],
    replications: int,
    master_seed: int,
) -> list[dict]:
    """Mean L2 energy at each time t next to the exponential-decay value.

    Rows: n,k,t,mean_S,stderr,predicted_S,mean_N,r.  The prediction is
    exp(-(k-1) t / (n-1)) * S(0), the Poisson mixture of the per-step
    contraction tau^N.
    """
    base = np.asarray(x0, dtype=np.float64)
    mean0 = math.fsum(base.tolist()) / n
    d = base - mean0
    s0 = math.fsum((d * d).tolist())
    rows = []
    for t in times:
        s_vals, n_vals = poisson_trials(n, k, x0, t, replications, master_seed)
        st = summarize(s_vals)
        rows.append(
            {
                "n": n,
                "k": k,
                "t": float(t),
                "mean_S": st.mean,
                "stderr": st.stderr,
                "predicted_S": math.exp(-(k - 1) * float(t) / (n - 1)) * s0,
                "mean_N": float(n_vals.mean()) if len(n_vals) else 0.0,
                "r": st.r,
            }
        )
    return rows
