"""Tests for config parsing, CSV serialization and manifests."""
import dataclasses
import json
import math
import struct

import pytest

from kavg.config import (
    ConfigFileError,
    ConfigKeyError,
    ConfigSyntaxError,
    config_to_dict,
    format_config,
    parse_config,
    parse_config_text,
)
from kavg.experiments import ConfigValueError, DEFAULT_MASTER_SEED, ExperimentConfig
from kavg.metrics import MetricsSample
from kavg.output import (
    TRAJECTORY_COLUMNS,
    RunManifest,
    format_value,
    manifest_stable_view,
    read_manifest,
    render_csv,
    write_csv,
    write_manifest,
)

MINIMAL = """
n_grid = 8
k_grid = 2
theta_grid = 0.5
replications = 1
"""


def test_parse_minimal_config():
    cfg = parse_config_text(MINIMAL)
    assert cfg.n_grid == (8,)
    assert cfg.k_grid == (2,)
    assert cfg.theta_grid == (0.5,)
    assert cfg.replications == 1
    assert cfg.master_seed == DEFAULT_MASTER_SEED
    assert cfg.max_steps == 10_000_000
    assert cfg.epsilon is None


def test_parse_lists_and_comments():
    cfg = parse_config_text(
        """
        # experiment grids
        n_grid = 100, 200, 400   # three sizes
        k_grid = 2, 3
        a_grid = -1.0, 0.0, 1.0
        replications = 7
        epsilon = 0.25
        master_seed = 42
        max_steps = 5000
        """
    )
    assert cfg.n_grid == (100, 200, 400)
    assert cfg.k_grid == (2, 3)
    assert cfg.a_grid == (-1.0, 0.0, 1.0)
    assert cfg.epsilon == 0.25
    assert cfg.master_seed == 42
    assert cfg.max_steps == 5000


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigKeyError, match="theta_gird"):
        parse_config_text(MINIMAL + "theta_gird = 0.5\n")


def test_parse_rejects_k_below_two():
    with pytest.raises(ConfigValueError, match="k_grid"):
        parse_config_text("n_grid = 8\nk_grid = 1\nreplications = 1\n")


def test_parse_rejects_epsilon_out_of_range():
    with pytest.raises(ConfigValueError, match="epsilon"):
        parse_config_text(MINIMAL + "epsilon = 2.5\n")
    with pytest.raises(ConfigValueError, match="epsilon"):
        parse_config_text(MINIMAL + "epsilon = 0\n")


def test_parse_rejects_bad_syntax():
    with pytest.raises(ConfigSyntaxError):
        parse_config_text("n_grid 8\n")
    with pytest.raises(ConfigSyntaxError):
        parse_config_text("n_grid = eight\nk_grid = 2\nreplications = 1\n")
    with pytest.raises(ConfigSyntaxError):
        parse_config_text(MINIMAL + "n_grid = 9\n")  # duplicate
    with pytest.raises(ConfigSyntaxError):
        parse_config_text("= 3\n")


def test_parse_rejects_missing_required():
    with pytest.raises(ConfigValueError, match="replications"):
        parse_config_text("n_grid = 8\nk_grid = 2\n")


def test_parse_missing_file(tmp_path):
    with pytest.raises(ConfigFileError):
        parse_config(tmp_path / "does-not-exist.cfg")


def test_parse_config_file_round_trip(tmp_path):
    cfg = ExperimentConfig(
        n_grid=(64, 128),
        k_grid=(2, 5),
        replications=11,
        theta_grid=(0.1, 0.7213),
        a_grid=(-2.0, 0.0),
        epsilon=0.05,
        master_seed=999,
        max_steps=123456,
    )
    path = tmp_path / "exp.cfg"
    path.write_text(format_config(cfg))
    assert parse_config(path) == cfg


def test_format_round_trip_without_optionals():
    cfg = ExperimentConfig(n_grid=(8,), k_grid=(2,), replications=3)
    assert parse_config_text(format_config(cfg)) == cfg


def test_config_echo_reparses_equal():
    cfg = parse_config_text(MINIMAL)
    echo = config_to_dict(cfg)
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
    assert rebuilt == cfg


# ----------------------------------------------------------------------- CSV

def test_write_csv_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    write_csv([], TRAJECTORY_COLUMNS, path)
    assert path.read_bytes() == b"l,t_l1,s_l2,m_ratio\n"


def test_write_csv_one_metrics_row(tmp_path):
    sample = MetricsSample(l=3, t_l1=0.5, s_l2=0.125, m_ratio=1.0)
    path = tmp_path / "one.csv"
    write_csv([dataclasses.asdict(sample)], TRAJECTORY_COLUMNS, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "l,t_l1,s_l2,m_ratio"
    assert lines[1] == "3,0.5,0.125,1"


def test_float_cells_round_trip_17_digits():
    vals = [1 / 3, 0.1, math.pi, 2 ** -52, 1e300, -7.000000000000001]
    text = render_csv(
        [{"x": v} for v in vals],
        ("x",),
    )
    parsed = [float(line) for line in text.splitlines()[1:]]
    for orig, back in zip(vals, parsed):
        assert struct.pack("<d", orig) == struct.pack("<d", back)


def test_format_value_special_cases():
    assert format_value(math.nan) == "nan"
    assert format_value(math.inf) == "inf"
    assert format_value(-math.inf) == "-inf"
    assert format_value(7) == "7"
    assert format_value("ok") == "ok"
    from fractions import Fraction

    assert format_value(Fraction(1, 2)) == "0.5"


def test_write_csv_is_byte_stable(tmp_path):
    rows = [{"a": i, "b": i / 7} for i in range(10)]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(rows, ("a", "b"), p1)
    write_csv(rows, ("a", "b"), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_write_csv_rejects_schema_mismatch(tmp_path):
    with pytest.raises(ValueError, match="schema"):
        write_csv([{"a": 1, "zzz": 2}], ("a", "b"), tmp_path / "x.csv")


# ------------------------------------------------------------------ manifest

def test_manifest_round_trip_and_stable_view(tmp_path):
    manifest = RunManifest(
        config_echo={"n_grid": [8]},
        master_seed=7,
        tool_version="0.1.0",
        started_at="2026-01-01T00:00:00+00:00",
        finished_at="2026-01-01T00:00:05+00:00",
        row_count=3,
    )
    path = tmp_path / "manifest.json"
    write_manifest(manifest, path)
    payload = read_manifest(path)
    assert payload["row_count"] == 3
    assert payload["master_seed"] == 7
    stable = manifest_stable_view(payload)
    assert "started_at" not in stable and "finished_at" not in stable
    assert json.dumps(stable, sort_keys=True) == json.dumps(
        manifest_stable_view(read_manifest(path)), sort_keys=True
    )
