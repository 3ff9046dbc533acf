"""Deterministic serialization of results: CSV tables and run manifests.

Reals are printed with 17 significant digits so that doubles survive a
round-trip through text; files are UTF-8 with LF line endings.  Two runs
with identical inputs produce byte-identical CSV files; manifests are
byte-identical apart from the two volatile timestamp fields.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

TRAJECTORY_COLUMNS = ("l", "t_l1", "s_l2", "m_ratio")
THETA_COLUMNS = (
    "n", "k", "theta", "steps", "mean_T", "stderr", "ci_lo", "ci_hi",
    "q05", "q25", "q50", "q75", "q95", "r",
)
CUTOFF_COLUMNS = ("n", "k", "a", "steps", "mean_T", "stderr", "ref_2phi", "r", "flag")
MIXING_COLUMNS = ("n", "k", "epsilon", "median_hit", "q25", "q75", "censored_frac", "r")
POISSON_COLUMNS = ("n", "k", "t", "mean_S", "stderr", "predicted_S", "mean_N", "r")

# manifest fields excluded from byte-for-byte comparisons
VOLATILE_MANIFEST_FIELDS = ("started_at", "finished_at")


def format_value(value) -> str:
    """Render one CSV cell; floats get 17 significant digits."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Fraction):
        value = float(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def render_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    """CSV text for rows under a fixed column order; rows must match the schema."""
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for i, row in enumerate(rows):
        extra = set(row) - set(columns)
        missing = set(columns) - set(row)
        if extra or missing:
            raise ValueError(
                f"row {i} does not conform to schema: extra={sorted(extra)},"
                f" missing={sorted(missing)}"
            )
        writer.writerow([format_value(row[c]) for c in columns])
    return buf.getvalue()


def write_csv(rows: Sequence[dict], columns: Sequence[str], path) -> None:
    """Write rows under a fixed column order; byte-stable for fixed inputs."""
    text = render_csv(rows, columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run, plus bookkeeping."""

    config_echo: dict
    master_seed: int
    tool_version: str
    started_at: str
    finished_at: str
    row_count: int


def write_manifest(manifest: RunManifest, path) -> None:
    payload = dataclasses.asdict(manifest)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def manifest_stable_view(payload: dict) -> dict:
    """The manifest without its volatile timestamp fields."""
    return {k: v for k, v in payload.items() if k not in VOLATILE_MANIFEST_FIELDS}
