"""Mock training loop emitting checkpoint-metric trajectories.

The mock model stands in for a segmentation network: its validation DSC
follows a rise-then-overfit hump over the checkpoint grid, observed through
noise that shrinks with the validation-set size taken from the manifest
(more validation items, steadier estimates). Output is one JSON object per
line: {"run": int, "epoch": int, "metric": str, "value": number} -- exactly
the selector's wire format.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

DEFAULT_EPOCHS = tuple(range(100, 6001, 100))  # 60 checkpoints


class ShimError(Exception):
    pass


@dataclass(frozen=True)
class ShimConfig:
    manifest_path: str
    out_path: str
    epochs: tuple[int, ...] = DEFAULT_EPOCHS
    mock_model: bool = True
    metric: str = "dsc"
    run: int = 0
    seed: int = 0
    # hump-shape parameters of the mock model
    peak: float = 0.35
    rise_tau: float = 600.0
    overfit_onset: float = 2500.0
    overfit_slope: float = 4e-5
    base_noise: float = 0.25

    def __post_init__(self) -> None:
        if not self.epochs:
            raise ShimError("epochs list is empty")
        if any(b <= a for a, b in zip(self.epochs, self.epochs[1:])):
            raise ShimError("epochs must be strictly increasing")
        if not self.mock_model:
            raise ShimError(
                "only mock-model mode is implemented; hosting a real "
                "training loop is out of scope for the reference shim"
            )


def read_manifest(path: str | Path) -> dict:
    """Load and sanity-check a ctsynth dataset manifest."""
    path = Path(path)
    if not path.is_file():
        raise ShimError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ShimError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != "ctsynth-manifest":
        raise ShimError(f"{path}: not a ctsynth manifest")
    if "items" not in doc or not isinstance(doc["items"], list):
        raise ShimError(f"{path}: manifest has no items list")
    return doc


def usable_item_count(manifest: dict) -> int:
    items = [it for it in manifest["items"] if it.get("status") == "ok"]
    if not items:
        raise ShimError("manifest contains no usable (status ok) items")
    return len(items)


def mock_validation_curve(config: ShimConfig, n_items: int) -> list[float]:
    """Hump-shaped checkpoint metric observed through validation noise."""
    rng = random.Random((config.seed, config.run, n_items).__repr__())
    sigma = config.base_noise / math.sqrt(n_items)
    values = []
    for epoch in config.epochs:
        latent = config.peak * (1.0 - math.exp(-epoch / config.rise_tau))
        latent -= config.overfit_slope * max(0.0, epoch - config.overfit_onset)
        values.append(latent + rng.gauss(0.0, sigma))
    return values


def emit_trajectory(config: ShimConfig) -> Path:
    """Simulate one training run and write its trajectory JSONL."""
    manifest = read_manifest(config.manifest_path)
    n_items = usable_item_count(manifest)
    values = mock_validation_curve(config, n_items)
    out = Path(config.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for epoch, value in zip(config.epochs, values):
            fh.write(
                json.dumps(
                    {
                        "run": config.run,
                        "epoch": epoch,
                        "metric": config.metric,
                        "value": value,
                    }
                )
                + "\n"
            )
    return out
