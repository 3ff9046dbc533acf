"""Command-line entry points.

Subcommands: simulate, verify-prop1, theta-sweep, mixing-time, cutoff,
poisson.  Experiment commands write a CSV table, a JSON run manifest and a
companion PNG figure into --out (or print the CSV to stdout when --out is
omitted).  Exit codes: 0 success, 1 internal error or failed verification,
2 usage/configuration error, 3 exact-arithmetic scale guard.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .chain import (
    ChainParams,
    Mode,
    ParameterError,
    ScaleError,
    derive_rng,
    run,
    sample_k_subset,
    write_replay_log,
)
from .config import config_to_dict, parse_config
from .experiments import (
    DEFAULT_MASTER_SEED,
    ConfigError,
    basis_vector,
    cutoff_profile,
    mixing_time_sweep,
    poisson_table,
    theta_sweep,
)
from .oracle import verify_one_step_contraction
from .output import (
    CUTOFF_COLUMNS,
    MIXING_COLUMNS,
    POISSON_COLUMNS,
    THETA_COLUMNS,
    TRAJECTORY_COLUMNS,
    RunManifest,
    render_csv,
    write_csv,
    write_manifest,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_SCALE = 3


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _resolve_seed(args) -> int:
    if getattr(args, "seed_from_entropy", False):
        seed = int.from_bytes(os.urandom(8), "little")
        print(f"entropy seed: {seed}")
        return seed
    return args.seed


def _parse_x0(text: str, n: int) -> list[float]:
    if text == "basis":
        return basis_vector(n)
    try:
        values = [float(tok) for tok in text.split(",")]
    except ValueError as exc:
        raise ParameterError(f"--x0 must be 'basis' or comma-separated reals, got {text!r}") from exc
    if len(values) != n:
        raise ParameterError(f"--x0 has {len(values)} entries, expected n={n}")
    return values


def _emit(args, name: str, rows, columns, config_echo: dict, master_seed: int,
          started_at: str, plot_fn=None) -> None:
    """Write CSV + manifest (+ figure) into --out, or print CSV to stdout."""
    if args.out is None:
        sys.stdout.write(render_csv(rows, columns))
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    write_csv(rows, columns, csv_path)
    manifest = RunManifest(
        config_echo=config_echo,
        master_seed=master_seed,
        tool_version=__version__,
        started_at=started_at,
        finished_at=_utc_now(),
        row_count=len(rows),
    )
    write_manifest(manifest, out / "manifest.json")
    written = [str(csv_path), str(out / "manifest.json")]
    if plot_fn is not None:
        png_path = out / f"{name}.png"
        plot_fn(rows, png_path)
        written.append(str(png_path))
    print("wrote " + ", ".join(written))


def _cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    mode = Mode.EXACT_RATIONAL if args.mode == "rational" else Mode.FLOAT64
    params = ChainParams(n=args.n, k=args.k, seed=seed, mode=mode)
    x0 = _parse_x0(args.x0, args.n)
    started_at = _utc_now()
    record_every = args.record_every or max(1, args.steps // 1000)
    if args.replay_log is not None:
        rng = derive_rng(seed)
        choices = [sample_k_subset(rng, params.n, params.k) for _ in range(args.steps)]
        write_replay_log(choices, args.replay_log)
    samples = run(params, x0, args.steps, record_every)
    final = samples[-1]
    print(
        f"n={args.n} k={args.k} steps={final.l}"
        f" T={float(final.t_l1):.6g} S={float(final.s_l2):.6g} M={float(final.m_ratio):.6g}"
    )
    rows = [dataclasses.asdict(s) for s in samples]
    echo = {
        "command": "simulate",
        "n": args.n,
        "k": args.k,
        "steps": args.steps,
        "record_every": record_every,
        "mode": mode.value,
        "x0": args.x0,
    }
    plot_fn = None
    if args.out is not None and not args.no_plot:
        from .plots import save_trajectory_plot

        def plot_fn(plot_rows, path, _title=f"n={args.n}, k={args.k}"):
            save_trajectory_plot(plot_rows, path, title=_title)

    _emit(args, "trajectory", rows, TRAJECTORY_COLUMNS, echo, seed, started_at, plot_fn)
    return EXIT_OK


def _cmd_verify_prop1(args) -> int:
    rng = derive_rng(args.seed, 0xE)
    all_pass = True
    for n in range(2, args.n_max + 1):
        for k in range(2, n + 1):
            x0 = [Fraction(1)] + [Fraction(0)] * (n - 1)
            report = verify_one_step_contraction(n, k, x0)
            for _ in range(args.trials):
                if not report.passed:
                    break
                vec = [Fraction(int(v)) for v in rng.integers(-9, 10, size=n)]
                trial = verify_one_step_contraction(n, k, vec)
                if not trial.passed:
                    report = trial
            status = "PASS" if report.passed else "FAIL"
            all_pass = all_pass and report.passed
            lhs = f"{report.lhs.numerator}/{report.lhs.denominator}"
            rhs = f"{report.rhs.numerator}/{report.rhs.denominator}"
            print(f"{n} {k} {lhs} {rhs} {status}")
    return EXIT_OK if all_pass else EXIT_INTERNAL


def _sweep_command(args, runner, columns, name: str, plot_import: str) -> int:
    config = parse_config(args.config)
    if args.seed_from_entropy:
        seed = int.from_bytes(os.urandom(8), "little")
        print(f"entropy seed: {seed}")
        config = dataclasses.replace(config, master_seed=seed)
    elif args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    started_at = _utc_now()
    rows = runner(config)
    plot_fn = None
    if args.out is not None and not args.no_plot:
        from . import plots

        plot_fn = getattr(plots, plot_import)
    _emit(args, name, rows, columns, config_to_dict(config), config.master_seed,
          started_at, plot_fn)
    return EXIT_OK


def _cmd_theta_sweep(args) -> int:
    return _sweep_command(args, theta_sweep, THETA_COLUMNS, "theta_sweep", "save_theta_plot")


def _cmd_mixing_time(args) -> int:
    return _sweep_command(args, mixing_time_sweep, MIXING_COLUMNS, "mixing_time", "save_mixing_plot")


def _cmd_cutoff(args) -> int:
    return _sweep_command(args, cutoff_profile, CUTOFF_COLUMNS, "cutoff", "save_cutoff_plot")


def _cmd_poisson(args) -> int:
    seed = _resolve_seed(args)
    x0 = _parse_x0(args.x0, args.n)
    started_at = _utc_now()
    rows = poisson_table(args.n, args.k, x0, args.t, args.reps, seed)
    echo = {
        "command": "poisson",
        "n": args.n,
        "k": args.k,
        "t": list(args.t),
        "replications": args.reps,
        "x0": args.x0,
    }
    plot_fn = None
    if args.out is not None and not args.no_plot:
        from .plots import save_poisson_plot

        plot_fn = save_poisson_plot
    _emit(args, "poisson", rows, POISSON_COLUMNS, echo, seed, started_at, plot_fn)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kavg",
        description="Simulate and verify the repeated k-group averaging chain.",
    )
    parser.add_argument("--version", action="version", version=f"kavg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_out(p) -> None:
        p.add_argument("--out", default=None, help="output directory (default: CSV to stdout)")
        p.add_argument("--no-plot", action="store_true", help="skip the companion PNG figure")

    def add_seed(p, default=DEFAULT_MASTER_SEED) -> None:
        p.add_argument("--seed", type=int, default=default, help="master seed")
        p.add_argument(
            "--seed-from-entropy",
            action="store_true",
            help="draw the master seed from OS entropy (printed for replay)",
        )

    p = sub.add_parser("simulate", help="run one trajectory and record metrics")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--x0", default="basis", help="'basis' or comma-separated reals")
    p.add_argument("--record-every", type=int, default=0, help="0 = auto (~1000 samples)")
    p.add_argument("--mode", choices=["float64", "rational"], default="float64")
    p.add_argument("--replay-log", default=None, help="write the subset log here")
    add_seed(p)
    add_out(p)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("verify-prop1", help="exact one-step contraction check by enumeration")
    p.add_argument("--n-max", type=int, default=9)
    p.add_argument("--trials", type=int, default=20, help="random integer vectors per (n, k)")
    add_seed(p)
    p.set_defaults(handler=_cmd_verify_prop1)

    p = sub.add_parser("theta-sweep", help="mean T after floor(theta n ln n) steps")
    p.add_argument("--config", required=True)
    add_seed(p, default=None)
    add_out(p)
    p.set_defaults(handler=_cmd_theta_sweep)

    p = sub.add_parser("mixing-time", help="hitting time of the L1 threshold")
    p.add_argument("--config", required=True)
    add_seed(p, default=None)
    add_out(p)
    p.set_defaults(handler=_cmd_mixing_time)

    p = sub.add_parser("cutoff", help="profile of T across the cutoff window")
    p.add_argument("--config", required=True)
    add_seed(p, default=None)
    add_out(p)
    p.set_defaults(handler=_cmd_cutoff)

    p = sub.add_parser("poisson", help="Poissonized chain at one or more times")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--t", type=float, action="append", required=True,
                   help="time (repeatable for several rows)")
    p.add_argument("--reps", type=int, default=1000, help="replications per time")
    p.add_argument("--x0", default="basis")
    add_seed(p)
    add_out(p)
    p.set_defaults(handler=_cmd_poisson)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.handler(args)
    except ScaleError as exc:
        print(f"error (scale guard): {exc}", file=sys.stderr)
        return EXIT_SCALE
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
