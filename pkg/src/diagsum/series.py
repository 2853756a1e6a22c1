"""Observable time-series container and its CSV/JSON serialization."""

from __future__ import annotations

import csv
import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import OutputError, ValidationError

CSV_COLUMNS = ("t", "re", "im", "stderr_re", "stderr_im")


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except Exception:
        pass
    return "unknown"


@dataclass
class ObservableSeries:
    """Means and standard errors of an observable over a time grid."""

    times: np.ndarray
    mean_re: np.ndarray
    mean_im: np.ndarray
    stderr_re: np.ndarray
    stderr_im: np.ndarray
    n_samples: int
    seed: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in (
            self.times, self.mean_re, self.mean_im, self.stderr_re, self.stderr_im)]
        lengths = {a.shape for a in arrays}
        if len(lengths) != 1:
            raise ValidationError(f"series arrays disagree in length: {lengths}")
        if np.any(arrays[3] < 0) or np.any(arrays[4] < 0):
            raise ValidationError("standard errors must be nonnegative")
        self.times, self.mean_re, self.mean_im, self.stderr_re, self.stderr_im = arrays


def emit_series(series: ObservableSeries, fmt: str, path) -> None:
    """Write a series as CSV (fixed column schema) or JSON (with provenance)."""
    path = Path(path)
    try:
        if fmt == "csv":
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(CSV_COLUMNS)
                for row in zip(series.times, series.mean_re, series.mean_im,
                               series.stderr_re, series.stderr_im):
                    writer.writerow([repr(v) for v in row])
        elif fmt == "json":
            payload = {
                "columns": list(CSV_COLUMNS),
                "t": series.times.tolist(),
                "re": series.mean_re.tolist(),
                "im": series.mean_im.tolist(),
                "stderr_re": series.stderr_re.tolist(),
                "stderr_im": series.stderr_im.tolist(),
                "n_samples": series.n_samples,
                "seed": series.seed,
                "provenance": dict(series.provenance, git_describe=_git_describe()),
            }
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
        else:
            raise ValidationError(f"unknown series format {fmt!r}")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def load_series_json(path) -> ObservableSeries:
    """Inverse of emit_series(..., 'json', ...); values round-trip exactly."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    return ObservableSeries(
        times=np.array(payload["t"], dtype=float),
        mean_re=np.array(payload["re"], dtype=float),
        mean_im=np.array(payload["im"], dtype=float),
        stderr_re=np.array(payload["stderr_re"], dtype=float),
        stderr_im=np.array(payload["stderr_im"], dtype=float),
        n_samples=payload["n_samples"],
        seed=payload["seed"],
        provenance=payload.get("provenance", {}),
    )
