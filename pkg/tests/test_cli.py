"""End-to-end tests of the command-line interface."""
import math
import re

from kavg.chain import ChainParams, read_replay_log, replay
from kavg.cli import EXIT_CONFIG, EXIT_INTERNAL, EXIT_OK, EXIT_SCALE, main
from kavg.metrics import l1_deviation
from kavg.output import manifest_stable_view, read_manifest

THETA_CFG = """
n_grid = 64
k_grid = 2
theta_grid = 0.3, 0.9
replications = 6
master_seed = 2026
max_steps = 100000
"""


def _write_cfg(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == EXIT_CONFIG
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_subcommand_is_usage_error():
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "usage" in capsys.readouterr().out.lower()


def test_simulate_full_group_final_t_zero(tmp_path, capsys):
    rc = main(
        [
            "simulate", "--n", "3", "--k", "3", "--steps", "1",
            "--x0", "basis", "--out", str(tmp_path), "--no-plot",
        ]
    )
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert "T=0" in out
    csv_lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert csv_lines[0] == "l,t_l1,s_l2,m_ratio"
    final = csv_lines[-1].split(",")
    assert final[0] == "1"
    assert float(final[1]) == 0.0


def test_simulate_writes_plot_and_manifest(tmp_path):
    rc = main(
        ["simulate", "--n", "16", "--k", "2", "--steps", "200", "--out", str(tmp_path)]
    )
    assert rc == EXIT_OK
    assert (tmp_path / "trajectory.png").exists()
    manifest = read_manifest(tmp_path / "manifest.json")
    rows = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert manifest["row_count"] == len(rows) - 1
    assert manifest["tool_version"]


def test_simulate_replay_log_reproduces_trajectory(tmp_path):
    log = tmp_path / "replay.log"
    rc = main(
        [
            "simulate", "--n", "9", "--k", "3", "--steps", "30",
            "--seed", "31415", "--replay-log", str(log),
            "--out", str(tmp_path), "--no-plot",
        ]
    )
    assert rc == EXIT_OK
    choices = read_replay_log(log)
    assert len(choices) == 30
    params = ChainParams(n=9, k=3, seed=31415)
    final = replay(params, [1.0] + [0.0] * 8, choices)
    final_t = float((tmp_path / "trajectory.csv").read_text().splitlines()[-1].split(",")[1])
    assert math.isclose(l1_deviation(final), final_t, rel_tol=1e-12, abs_tol=1e-15)


def test_simulate_rational_scale_guard_exit_code():
    assert main(["simulate", "--n", "13", "--k", "2", "--steps", "1", "--mode", "rational"]) == EXIT_SCALE
    assert main(["simulate", "--n", "6", "--k", "2", "--steps", "9", "--mode", "rational"]) == EXIT_SCALE


def test_simulate_rational_mode_writes_exact_values_as_floats(tmp_path):
    rc = main(
        [
            "simulate", "--n", "3", "--k", "2", "--steps", "2", "--seed", "8",
            "--mode", "rational", "--out", str(tmp_path), "--no-plot",
        ]
    )
    assert rc == EXIT_OK
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    first = lines[1].split(",")
    # S(0) = 2/3 for the n=3 unit-spike start, printed as a double
    assert math.isclose(float(first[2]), 2 / 3, rel_tol=1e-15)


def test_simulate_bad_parameters_exit_config():
    assert main(["simulate", "--n", "4", "--k", "9", "--steps", "1"]) == EXIT_CONFIG
    assert main(["simulate", "--n", "4", "--k", "2", "--steps", "1", "--x0", "1,2"]) == EXIT_CONFIG


def test_verify_prop1_output_format(capsys):
    rc = main(["verify-prop1", "--n-max", "5", "--trials", "3"])
    assert rc == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    pairs = [(n, k) for n in range(2, 6) for k in range(2, n + 1)]
    assert len(lines) == len(pairs)
    pattern = re.compile(r"^\d+ \d+ -?\d+/\d+ -?\d+/\d+ PASS$")
    for line in lines:
        assert pattern.match(line), line
    assert lines[0].startswith("2 2 ")
    # the n=3, k=2 unit-spike line carries the exact values 1/3 and 1/3
    n3 = [line for line in lines if line.startswith("3 2 ")][0]
    assert n3 == "3 2 1/3 1/3 PASS"


def test_theta_sweep_writes_csv_png_manifest(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, THETA_CFG)
    out = tmp_path / "run1"
    rc = main(["theta-sweep", "--config", str(cfg), "--out", str(out)])
    assert rc == EXIT_OK
    lines = (out / "theta_sweep.csv").read_text().splitlines()
    assert lines[0] == "n,k,theta,steps,mean_T,stderr,ci_lo,ci_hi,q05,q25,q50,q75,q95,r"
    assert len(lines) == 3
    assert (out / "theta_sweep.png").exists()
    manifest = read_manifest(out / "manifest.json")
    assert manifest["row_count"] == 2
    assert manifest["master_seed"] == 2026
    assert manifest["config_echo"]["theta_grid"] == [0.3, 0.9]


def test_theta_sweep_stdout_when_no_out(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, THETA_CFG)
    rc = main(["theta-sweep", "--config", str(cfg)])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("n,k,theta,steps,mean_T")


def test_theta_sweep_byte_identical_reruns(tmp_path):
    cfg = _write_cfg(tmp_path, THETA_CFG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["theta-sweep", "--config", str(cfg), "--out", str(out1), "--no-plot"]) == EXIT_OK
    assert main(["theta-sweep", "--config", str(cfg), "--out", str(out2), "--no-plot"]) == EXIT_OK
    assert (out1 / "theta_sweep.csv").read_bytes() == (out2 / "theta_sweep.csv").read_bytes()
    m1 = manifest_stable_view(read_manifest(out1 / "manifest.json"))
    m2 = manifest_stable_view(read_manifest(out2 / "manifest.json"))
    assert m1 == m2


def test_rerun_from_manifest_echo_reproduces_csv(tmp_path):
    from kavg.experiments import ExperimentConfig, theta_sweep
    from kavg.output import THETA_COLUMNS, render_csv

    cfg = _write_cfg(tmp_path, THETA_CFG)
    out = tmp_path / "run"
    assert main(["theta-sweep", "--config", str(cfg), "--out", str(out), "--no-plot"]) == EXIT_OK
    echo = read_manifest(out / "manifest.json")["config_echo"]
    rebuilt = ExperimentConfig(
        n_grid=tuple(echo["n_grid"]),
        k_grid=tuple(echo["k_grid"]),
        replications=echo["replications"],
        theta_grid=tuple(echo["theta_grid"]),
        a_grid=tuple(echo["a_grid"]),
        epsilon=echo["epsilon"],
        master_seed=echo["master_seed"],
        max_steps=echo["max_steps"],
    )
    regenerated = render_csv(theta_sweep(rebuilt), THETA_COLUMNS)
    assert regenerated.encode() == (out / "theta_sweep.csv").read_bytes()


def test_theta_sweep_seed_override_changes_output(tmp_path):
    cfg = _write_cfg(tmp_path, THETA_CFG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["theta-sweep", "--config", str(cfg), "--out", str(out1), "--no-plot"])
    main(["theta-sweep", "--config", str(cfg), "--out", str(out2), "--no-plot", "--seed", "1"])
    assert (out1 / "theta_sweep.csv").read_bytes() != (out2 / "theta_sweep.csv").read_bytes()
    assert read_manifest(out2 / "manifest.json")["master_seed"] == 1


def test_mixing_time_command(tmp_path):
    cfg = _write_cfg(
        tmp_path,
        "n_grid = 32\nk_grid = 2\nreplications = 5\nepsilon = 0.1\nmax_steps = 50000\n",
    )
    out = tmp_path / "mix"
    rc = main(["mixing-time", "--config", str(cfg), "--out", str(out)])
    assert rc == EXIT_OK
    lines = (out / "mixing_time.csv").read_text().splitlines()
    assert lines[0] == "n,k,epsilon,median_hit,q25,q75,censored_frac,r"
    assert len(lines) == 2
    assert (out / "mixing_time.png").exists()


def test_cutoff_command_with_flagged_row(tmp_path):
    cfg = _write_cfg(
        tmp_path,
        "n_grid = 16\nk_grid = 2\na_grid = -5.0, 0.0\nreplications = 4\n",
    )
    out = tmp_path / "cut"
    rc = main(["cutoff", "--config", str(cfg), "--out", str(out)])
    assert rc == EXIT_OK
    lines = (out / "cutoff.csv").read_text().splitlines()
    assert lines[0] == "n,k,a,steps,mean_T,stderr,ref_2phi,r,flag"
    assert "skipped_negative_step" in lines[1]
    assert lines[2].endswith(",ok")
    assert (out / "cutoff.png").exists()


def test_poisson_command_multiple_times(tmp_path):
    out = tmp_path / "poi"
    rc = main(
        [
            "poisson", "--n", "10", "--k", "2", "--t", "2.0", "--t", "8.0",
            "--reps", "40", "--out", str(out),
        ]
    )
    assert rc == EXIT_OK
    lines = (out / "poisson.csv").read_text().splitlines()
    assert lines[0] == "n,k,t,mean_S,stderr,predicted_S,mean_N,r"
    assert len(lines) == 3
    assert (out / "poisson.png").exists()


def test_config_errors_exit_code(tmp_path):
    bad = _write_cfg(tmp_path, "n_grid = 8\nk_grid = 1\nreplications = 1\n")
    assert main(["theta-sweep", "--config", str(bad)]) == EXIT_CONFIG
    missing = tmp_path / "nope.cfg"
    assert main(["theta-sweep", "--config", str(missing)]) == EXIT_CONFIG
    unknown_key = _write_cfg(tmp_path, THETA_CFG + "bogus = 1\n", name="unk.cfg")
    assert main(["theta-sweep", "--config", str(unknown_key)]) == EXIT_CONFIG


def test_verify_prop1_reports_failure_exit_code(monkeypatch, capsys):
    # force a mismatch to show FAIL lines carry a nonzero exit
    import kavg.cli as cli_mod
    from fractions import Fraction
    from kavg.oracle import ContractionReport

    def broken(n, k, x0):
        return ContractionReport(n=n, k=k, lhs=Fraction(1), rhs=Fraction(2))

    monkeypatch.setattr(cli_mod, "verify_one_step_contraction", broken)
    rc = main(["verify-prop1", "--n-max", "2", "--trials", "0"])
    assert rc == EXIT_INTERNAL
    assert "FAIL" in capsys.readouterr().out
