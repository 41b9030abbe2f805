"""Shared run plumbing for the solvers and baselines.

Every run produces a RunResult: final iterates plus checkpointed diagnostic
series on a common grid, so the harness can persist, aggregate and compare
traces from different algorithms without caring which one produced them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericFailure

DIVERGENCE_LIMIT = 1e12

# Diagnostic series every run reports (missing entries are NaN).
SERIES_FIELDS = (
    "lambda", "alpha", "gamma", "beta", "eta",
    "grad_F_sq", "proxy_sq", "dist_y_sq", "dist_z_sq",
    "potential", "train_loss", "val_loss", "mom_err_z_sq",
)


def checkpoint_cadence(K: int, checkpoint_every: int | None = None) -> int:
    """Steps between recorded rows; default caps a run at about 200 rows."""
    if checkpoint_every is not None:
        if checkpoint_every <= 0:
            raise ValueError("checkpoint_every must be positive")
        return checkpoint_every
    return max(1, math.ceil(K / 200))


@dataclass
class RunResult:
    """Outcome of one seeded run.

    ``checkpoints`` holds the recorded iteration indices (state before the
    step at that index; the trailing index K, when present, is the post-run
    state).  ``series`` maps each SERIES_FIELDS name to an equal-length float
    array.  ``R`` is the uniformly drawn evaluation index and ``x_R`` the
    iterate snapshotted there.
    """

    algorithm: str
    problem_name: str
    seed: int
    K: int
    R: int
    x_R: np.ndarray | None
    x_final: np.ndarray
    y_final: np.ndarray
    z_final: np.ndarray | None
    lambda_final: float
    checkpoints: np.ndarray
    series: dict[str, np.ndarray]
    grad_estimator: str = "none"
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def series_at(self, k: int, name: str) -> float:
        idx = np.nonzero(self.checkpoints == k)[0]
        if len(idx) == 0:
            raise KeyError(f"no checkpoint at k={k}")
        return float(self.series[name][idx[0]])


class TraceBuilder:
    """Accumulates checkpoint rows and finalizes them into arrays."""

    def __init__(self):
        self.ks: list[int] = []
        self.rows: list[dict] = []

    def add(self, k: int, **values) -> dict:
        row = dict(values)
        self.ks.append(k)
        self.rows.append(row)
        return row

    def finalize(self) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        ks = np.array(self.ks, dtype=int)
        series = {}
        for name in SERIES_FIELDS:
            series[name] = np.array(
                [row.get(name, math.nan) for row in self.rows], dtype=float)
        return ks, series


def guard_state(k: int, builder: TraceBuilder, **vectors) -> None:
    """Abort the run if any iterate went non-finite or unbounded.

    Called at checkpoint cadence only; blow-ups between checkpoints surface
    as NaN/Inf here.  The partial trace travels with the exception so the
    harness can persist what was recorded before the failure.
    """
    for name, v in vectors.items():
        if v is None:
            continue
        norm = float(np.max(np.abs(v))) if np.ndim(v) else abs(float(v))
        if not math.isfinite(norm) or norm > DIVERGENCE_LIMIT:
            ks, series = builder.finalize()
            raise NumericFailure(
                f"iterate {name} diverged at k={k} (max abs {norm})",
                k=k, variable=name, magnitude=norm,
                partial_checkpoints=ks, partial_series=series)
