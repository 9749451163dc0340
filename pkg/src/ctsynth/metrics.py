"""Segmentation and detection evaluation.

DSC measures voxel overlap; lesion sensitivity is per-lesion: each ground
truth lesion (26-connected component) counts as detected when the predicted
mask covers at least ``overlap_frac`` of it. Lesions are stratified by
equivalent-sphere radius into size bins; aggregate DSC gets a seeded
percentile-bootstrap confidence interval over cases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, connected_components
from .dataset import SizeClass
from .errors import ShapeMismatchError
from .shapes import equivalent_radius_mm


def dsc(pred: BinaryMask, gt: BinaryMask) -> float:
    """Dice similarity 2|A&B| / (|A| + |B|); both-empty counts as 1.0."""
    if pred.dims != gt.dims:
        raise ShapeMismatchError(f"pred dims {pred.dims} != gt dims {gt.dims}")
    p = pred.count
    g = gt.count
    if p == 0 and g == 0:
        return 1.0
    inter = int((pred.data & gt.data).sum())
    return 2.0 * inter / (p + g)


@dataclass(frozen=True)
class BinStat:
    name: str
    lo_mm: float
    hi_mm: float
    total: int
    detected: int

    @property
    def sensitivity(self) -> float | None:
        return None if self.total == 0 else self.detected / self.total


@dataclass(frozen=True)
class LesionSensitivity:
    bins: tuple[BinStat, ...]
    unbinned_total: int
    unbinned_detected: int
    overlap_frac: float


def lesion_sensitivity(
    pred: BinaryMask,
    gt: BinaryMask,
    bins: list[SizeClass],
    overlap_frac: float = 0.1,
) -> LesionSensitivity:
    """Per-lesion detection counts stratified by equivalent radius.

    Lesions whose radius falls outside every bin are tallied separately so
    counts always reconcile with the number of ground-truth components.
    """
    if pred.dims != gt.dims:
        raise ShapeMismatchError(f"pred dims {pred.dims} != gt dims {gt.dims}")
    if not 0 < overlap_frac <= 1:
        raise ValueError("overlap_frac must be in (0, 1]")
    voxvol = gt.grid.voxel_volume_mm3
    totals = [0] * len(bins)
    detected = [0] * len(bins)
    un_total = 0
    un_detected = 0
    for comp in connected_components(gt, connectivity=26):
        radius = equivalent_radius_mm(comp.voxel_count, voxvol)
        overlap = int((comp.mask.data & pred.data).sum())
        hit = overlap / comp.voxel_count >= overlap_frac
        for i, b in enumerate(bins):
            if b.contains(radius):
                totals[i] += 1
                detected[i] += int(hit)
                break
        else:
            un_total += 1
            un_detected += int(hit)
    stats = tuple(
        BinStat(b.name, b.lo_mm, b.hi_mm, totals[i], detected[i]) for i, b in enumerate(bins)
    )
    return LesionSensitivity(stats, un_total, un_detected, overlap_frac)


def bootstrap_ci(
    values, level: float = 0.95, resamples: int = 1000, seed: int = 0
) -> tuple[float, float, float]:
    """Percentile bootstrap over case-level resampling: (mean, lo, hi)."""
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise ValueError("bootstrap_ci needs at least one value")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    mean = float(vals.mean())
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, vals.size, size=(resamples, vals.size))
    means = vals[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo = float(np.percentile(means, 100 * alpha))
    hi = float(np.percentile(means, 100 * (1 - alpha)))
    return mean, lo, hi


@dataclass
class EvalReport:
    """Aggregate evaluation over (prediction, ground truth) cases."""

    cases: list[dict]
    mean_dsc: float
    ci_lo: float
    ci_hi: float
    bins: list[dict]
    unbinned: dict
    overlap_frac: float
    ci_level: float
    ci_resamples: int
    ci_seed: int
    detection_mode: str = "per-lesion"
    config: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "cases": self.cases,
            "mean_dsc": self.mean_dsc,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "bins": self.bins,
            "unbinned": self.unbinned,
            "overlap_frac": self.overlap_frac,
            "ci_level": self.ci_level,
            "ci_resamples": self.ci_resamples,
            "ci_seed": self.ci_seed,
            "detection_mode": self.detection_mode,
        }
        if self.config is not None:
            out["config"] = self.config
        return out

    def table(self) -> str:
        lines = [
            f"cases: {len(self.cases)}",
            f"mean DSC: {self.mean_dsc:.4f}  "
            f"({int(self.ci_level * 100)}% CI {self.ci_lo:.4f}-{self.ci_hi:.4f})",
            f"detection: {self.detection_mode}, overlap_frac={self.overlap_frac}",
            f"{'bin':>10} {'range (mm)':>14} {'lesions':>8} {'detected':>9} {'sens':>7}",
        ]
        for b in self.bins:
            sens = "-" if b["total"] == 0 else f"{b['detected'] / b['total']:.3f}"
            lines.append(
                f"{b['name']:>10} {b['lo_mm']:>6.1f}-{b['hi_mm']:<7.1f} "
                f"{b['total']:>8} {b['detected']:>9} {sens:>7}"
            )
        if self.unbinned["total"]:
            lines.append(
                f"{'(outside)':>10} {'':>14} {self.unbinned['total']:>8} "
                f"{self.unbinned['detected']:>9}"
            )
        return "\n".join(lines)


def evaluate_cases(
    cases: list[tuple[str, BinaryMask, BinaryMask]],
    bins: list[SizeClass],
    *,
    overlap_frac: float = 0.1,
    ci_level: float = 0.95,
    ci_resamples: int = 1000,
    ci_seed: int = 0,
    config: dict | None = None,
) -> EvalReport:
    """Evaluate (id, pred, gt) cases into one report."""
    if not cases:
        raise ValueError("no cases to evaluate")
    per_case = []
    totals = {b.name: [0, 0] for b in bins}
    unbinned = [0, 0]
    for case_id, pred, gt in cases:
        per_case.append({"id": case_id, "dsc": dsc(pred, gt)})
        sens = lesion_sensitivity(pred, gt, bins, overlap_frac)
        for b in sens.bins:
            totals[b.name][0] += b.total
            totals[b.name][1] += b.detected
        unbinned[0] += sens.unbinned_total
        unbinned[1] += sens.unbinned_detected
    values = [c["dsc"] for c in per_case]
    mean, lo, hi = bootstrap_ci(values, level=ci_level, resamples=ci_resamples, seed=ci_seed)
    bin_dicts = [
        {
            "name": b.name,
            "lo_mm": b.lo_mm,
            "hi_mm": b.hi_mm,
            "total": totals[b.name][0],
            "detected": totals[b.name][1],
            "sensitivity": (
                None if totals[b.name][0] == 0 else totals[b.name][1] / totals[b.name][0]
            ),
        }
        for b in bins
    ]
    return EvalReport(
        cases=per_case,
        mean_dsc=mean,
        ci_lo=lo,
        ci_hi=hi,
        bins=bin_dicts,
        unbinned={"total": unbinned[0], "detected": unbinned[1]},
        overlap_frac=overlap_frac,
        ci_level=ci_level,
        ci_resamples=ci_resamples,
        ci_seed=ci_seed,
        config=config,
    )
