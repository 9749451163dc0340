"""Checkpoint trajectories, best-checkpoint selection, and regret studies.

The wire format is one JSON object per line:
``{"run": int, "epoch": int, "metric": str, "value": number}``.
This JSONL file is the integration boundary with real training code: any
trainer that writes it can use the selector, and nothing here links against
an ML framework.

The study harness reproduces the validation-size mechanism at desk scale:
each trial draws a latent test curve over the checkpoint grid (a
rise-then-decline hump plus per-checkpoint jitter, matching the jagged
trajectories real training produces), observes it through validation noise
that shrinks as 1/sqrt(n_val), selects the best checkpoint per arm, and
records the test regret. Larger validation arms select strictly better.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import TrajectoryFormatError
from .seeds import derive_seed

WIRE_KEYS = {"run", "epoch", "metric", "value"}


@dataclass(frozen=True, eq=False)
class MetricTrajectory:
    """Per-checkpoint metric values for one training run."""

    run: int
    entries: tuple[tuple[int, str, float], ...]  # (epoch, metric, value)

    def __post_init__(self) -> None:
        seen: set[tuple[int, str]] = set()
        for epoch, metric, value in self.entries:
            key = (epoch, metric)
            if key in seen:
                raise TrajectoryFormatError(
                    f"run {self.run}: duplicate value for epoch {epoch}, metric {metric!r}"
                )
            seen.add(key)
        ordered = tuple(sorted(self.entries, key=lambda e: (e[1], e[0])))
        object.__setattr__(self, "entries", ordered)

    def metrics(self) -> list[str]:
        return sorted({m for _, m, _ in self.entries})

    def series(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        """(epochs, values) for a metric, epochs strictly increasing."""
        pairs = [(e, v) for e, m, v in self.entries if m == metric]
        if not pairs:
            raise TrajectoryFormatError(f"run {self.run}: no values for metric {metric!r}")
        epochs = np.array([p[0] for p in pairs], dtype=np.int64)
        values = np.array([p[1] for p in pairs], dtype=np.float64)
        return epochs, values


@dataclass(frozen=True)
class SelectionResult:
    best_epoch: int
    best_value: float
    metric: str
    direction: str
    tie_policy: str = "earliest-epoch"

    def to_dict(self) -> dict:
        return asdict(self)


def _check_wire_record(idx: int, obj) -> tuple[int, int, str, float]:
    if not isinstance(obj, dict):
        raise TrajectoryFormatError(f"line {idx}: expected a JSON object")
    keys = set(obj)
    if keys != WIRE_KEYS:
        extra = sorted(keys - WIRE_KEYS)
        missing = sorted(WIRE_KEYS - keys)
        raise TrajectoryFormatError(
            f"line {idx}: bad keys (missing {missing}, unexpected {extra})"
        )
    run, epoch, metric, value = obj["run"], obj["epoch"], obj["metric"], obj["value"]
    if isinstance(run, bool) or not isinstance(run, int):
        raise TrajectoryFormatError(f"line {idx}: 'run' must be an integer")
    if isinstance(epoch, bool) or not isinstance(epoch, int):
        raise TrajectoryFormatError(f"line {idx}: 'epoch' must be an integer")
    if not isinstance(metric, str):
        raise TrajectoryFormatError(f"line {idx}: 'metric' must be a string")
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise TrajectoryFormatError(f"line {idx}: 'value' must be a finite number")
    return run, epoch, metric, float(value)


def read_trajectories(path: str | Path) -> list[MetricTrajectory]:
    """Parse a JSONL trajectory file; strict about the wire schema."""
    by_run: dict[int, list[tuple[int, str, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for idx, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TrajectoryFormatError(f"line {idx}: invalid JSON: {exc}") from exc
            run, epoch, metric, value = _check_wire_record(idx, obj)
            by_run.setdefault(run, []).append((epoch, metric, value))
    if not by_run:
        raise TrajectoryFormatError(f"{path}: no trajectory records")
    return [MetricTrajectory(run, tuple(recs)) for run, recs in sorted(by_run.items())]


def write_trajectory(traj: MetricTrajectory, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for epoch, metric, value in sorted(traj.entries, key=lambda e: (e[0], e[1])):
            fh.write(
                json.dumps(
                    {"run": traj.run, "epoch": epoch, "metric": metric, "value": value}
                )
                + "\n"
            )


def select_best(
    traj: MetricTrajectory, metric: str, direction: str = "maximize"
) -> SelectionResult:
    """Arg-best epoch for a metric; ties break toward the earliest epoch."""
    if direction not in ("maximize", "minimize"):
        raise ValueError(f"direction must be 'maximize' or 'minimize', got {direction!r}")
    epochs, values = traj.series(metric)
    idx = int(np.argmax(values)) if direction == "maximize" else int(np.argmin(values))
    return SelectionResult(
        best_epoch=int(epochs[idx]),
        best_value=float(values[idx]),
        metric=metric,
        direction=direction,
    )


def regret(
    traj_val: MetricTrajectory,
    traj_test: MetricTrajectory,
    metric: str = "dsc",
    direction: str = "maximize",
) -> float:
    """Test-metric gap between the test-optimal checkpoint and the one the
    validation trajectory selects. Zero iff validation picks a test-optimal
    epoch; never negative."""
    val_epochs, _ = traj_val.series(metric)
    test_epochs, test_values = traj_test.series(metric)
    if val_epochs.shape != test_epochs.shape or (val_epochs != test_epochs).any():
        raise TrajectoryFormatError("validation and test trajectories use different epoch grids")
    sel = select_best(traj_val, metric, direction)
    chosen = float(test_values[np.searchsorted(test_epochs, sel.best_epoch)])
    best = float(test_values.max()) if direction == "maximize" else float(test_values.min())
    return abs(best - chosen) if direction == "minimize" else best - chosen


# --------------------------------------------------------------------------
# selection study harness


@dataclass(frozen=True)
class StudyConfig:
    """Harness parameters (artifact config, not published values)."""

    trials: int = 200
    arms: tuple[int, ...] = (5, 150)
    epoch_start: int = 100
    epoch_step: int = 100
    n_checkpoints: int = 60
    peak_lo: float = 0.25
    peak_hi: float = 0.45
    tau_lo: float = 200.0
    tau_hi: float = 800.0
    onset_lo: float = 1000.0
    onset_hi: float = 3000.0
    decline_lo: float = 2e-5
    decline_hi: float = 6e-5
    checkpoint_jitter: float = 0.025
    obs_sigma: float = 0.12
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.arms or any(n < 1 for n in self.arms):
            raise ValueError("arms must be positive validation sizes")
        if self.n_checkpoints < 2:
            raise ValueError("n_checkpoints must be >= 2")

    def epochs(self) -> np.ndarray:
        return self.epoch_start + self.epoch_step * np.arange(self.n_checkpoints)


def hump_curve(
    epochs: np.ndarray, peak: float, tau: float, onset: float, decline: float
) -> np.ndarray:
    """Rise-plateau-decline test curve: p*(1-exp(-e/tau)) - d*max(0, e-e0)."""
    e = np.asarray(epochs, dtype=np.float64)
    return peak * (1.0 - np.exp(-e / tau)) - decline * np.maximum(0.0, e - onset)


@dataclass
class StudyResult:
    config: dict
    regrets: dict[int, list[float]]

    def median(self, arm: int) -> float:
        return float(np.median(self.regrets[arm]))

    def zero_fraction(self, arm: int) -> float:
        vals = np.asarray(self.regrets[arm])
        return float((vals == 0.0).mean())

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "arms": [
                {
                    "n_val": arm,
                    "median_regret": self.median(arm),
                    "mean_regret": float(np.mean(vals)),
                    "zero_regret_fraction": self.zero_fraction(arm),
                    "regrets": [float(v) for v in vals],
                }
                for arm, vals in sorted(self.regrets.items())
            ],
        }


def simulate_selection_study(cfg: StudyConfig) -> StudyResult:
    """Per-arm regret distributions over seeded trials.

    Each trial draws one latent test curve shared by all arms; each arm
    observes it through i.i.d. noise scaled by obs_sigma / sqrt(n_val) and
    selects its best checkpoint. Per-arm noise comes from arm-keyed
    substreams, so results do not depend on the order arms are listed.
    """
    epochs = cfg.epochs()
    regrets: dict[int, list[float]] = {arm: [] for arm in cfg.arms}
    for trial in range(cfg.trials):
        rng = np.random.default_rng(derive_seed(cfg.seed, "study", trial, "curve"))
        peak = rng.uniform(cfg.peak_lo, cfg.peak_hi)
        tau = rng.uniform(cfg.tau_lo, cfg.tau_hi)
        onset = rng.uniform(cfg.onset_lo, cfg.onset_hi)
        decline = rng.uniform(cfg.decline_lo, cfg.decline_hi)
        f = hump_curve(epochs, peak, tau, onset, decline)
        f = f + cfg.checkpoint_jitter * rng.standard_normal(len(epochs))
        best = float(f.max())
        for arm in cfg.arms:
            arm_rng = np.random.default_rng(
                derive_seed(cfg.seed, "study", trial, "arm", int(arm))
            )
            noise = arm_rng.standard_normal(len(epochs)) * (cfg.obs_sigma / math.sqrt(arm))
            sel = int(np.argmax(f + noise))
            regrets[arm].append(best - float(f[sel]))
    return StudyResult(config=asdict(cfg), regrets=regrets)
