"""Tumor-spec sampling, offline validation sets, and training streams.

Size classes bin tumors by equivalent-sphere radius; sampling is log-uniform
within the class range (real size distributions skew heavily small, and no
numeric histogram is published, so log-uniform is the neutral default).
Validation sets follow the offline protocol: one tumor per (host volume,
size class) pair. Streams are random-access: item ``i`` is a pure function
of (pool, class_mix, global seed, i), so workers can generate items out of
order and any single item can be reproduced from its manifest entry.
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from ._version import __version__ as _generator_version
from .compose import TumorRecord, TumorSpec, synthesize_tumors
from .core import BinaryMask, LabelMask, VoxelGrid
from .errors import GenerationError
from .niftiio import CtVolume, read_mask, read_volume, write_mask, write_volume
from .placement import PlacementParams
from .seeds import derive_seed
from .shapes import DeformSpec, EllipsoidSpec
from .textures import TextureSpec
from .vessels import VesselParams, segment_vessels

MANIFEST_SCHEMA_VERSION = 1

DEFAULT_ECCENTRICITY_CAPS = {"tiny": 1.0, "small": 1.5, "medium": 2.0, "large": 3.0}


@dataclass(frozen=True)
class SizeClass:
    """A named equivalent-radius bin [lo_mm, hi_mm)."""

    name: str
    lo_mm: float
    hi_mm: float
    eccentricity_cap: float | None = None

    def __post_init__(self) -> None:
        if not 0 < self.lo_mm < self.hi_mm:
            raise ValueError(f"need 0 < lo < hi, got [{self.lo_mm}, {self.hi_mm})")

    @property
    def radius_range_mm(self) -> tuple[float, float]:
        return (self.lo_mm, self.hi_mm)

    @property
    def cap(self) -> float:
        if self.eccentricity_cap is not None:
            return self.eccentricity_cap
        return DEFAULT_ECCENTRICITY_CAPS.get(self.name, 3.0)

    def contains(self, radius_mm: float) -> bool:
        return self.lo_mm <= radius_mm < self.hi_mm


DEFAULT_SIZE_CLASSES = (
    SizeClass("tiny", 2.0, 5.0),
    SizeClass("small", 5.0, 10.0),
    SizeClass("medium", 10.0, 25.0),
    SizeClass("large", 25.0, 44.0),
)


@dataclass(frozen=True)
class HostStats:
    """Liver parenchyma statistics of a host volume."""

    mean_hu: float
    std_hu: float
    min_spacing_mm: float = 1.0


def host_liver_stats(volume: CtVolume, liver: BinaryMask) -> HostStats:
    vals = volume.data[liver.data]
    return HostStats(float(vals.mean()), float(vals.std()), float(min(volume.spacing)))


@dataclass(frozen=True)
class SamplerConfig:
    """Generator defaults that sampling turns into concrete TumorSpecs."""

    # deformation magnitude scales with radius (in voxels), clipped to a band
    # and additionally capped relative to the radius so tiny shapes stay whole
    sigma_d_scale: float = 0.4
    sigma_d_min: float = 2.0
    sigma_d_max: float = 5.0
    sigma_d_rel_cap: float = 0.6
    control_spacing: int = 8
    smooth_sigma: float = 2.5
    # texture: lesions are hypodense; mean sits 30-60 HU below parenchyma,
    # noise std matches the host parenchyma
    mu_offset_lo: float = 30.0
    mu_offset_hi: float = 60.0
    coarse_factor: int = 4
    blur_sigma: float = 1.0
    # post-processing
    mass_effect_strength: float = 0.2
    influence_factor: float = 1.5
    capsule_width_voxels: int = 2
    capsule_delta_hu: float = 20.0
    edge_blend_sigma: float = 1.0


def sample_spec(
    size_class: SizeClass,
    host_stats: HostStats,
    seed: int,
    sampler: SamplerConfig = SamplerConfig(),
) -> TumorSpec:
    """Draw one TumorSpec for a size class; deterministic under the seed.

    The equivalent radius (abc)^(1/3) lands in the class range exactly by
    construction; the tiny class forces a sphere, and larger classes allow
    progressively more eccentricity.
    """
    rng = np.random.default_rng(seed)
    lo, hi = size_class.radius_range_mm
    r = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    cap = size_class.cap
    if cap <= 1.0:
        semis = (r, r, r)
    else:
        # offsets in log space; recentring keeps the product at r^3 exactly
        # while pairwise ratios stay <= cap
        half = 0.5 * math.log(cap)
        offs = rng.uniform(-half, half, size=3)
        offs -= offs.mean()
        semis = tuple(r * math.exp(o) for o in offs)
    r_vox = r / host_stats.min_spacing_mm
    sigma_d = min(sampler.sigma_d_max, max(sampler.sigma_d_min, sampler.sigma_d_scale * r_vox))
    sigma_d = min(sigma_d, sampler.sigma_d_rel_cap * r_vox)
    mu = host_stats.mean_hu - rng.uniform(sampler.mu_offset_lo, sampler.mu_offset_hi)
    return TumorSpec(
        ellipsoid=EllipsoidSpec(*semis),
        deform=DeformSpec(
            sigma_d=sigma_d,
            control_spacing=sampler.control_spacing,
            smooth_sigma=sampler.smooth_sigma,
            seed=derive_seed(seed, "shape"),
        ),
        texture=TextureSpec(
            mu=mu,
            sigma_g=host_stats.std_hu,
            coarse_factor=sampler.coarse_factor,
            blur_sigma=sampler.blur_sigma,
            seed=derive_seed(seed, "texture"),
        ),
        mass_effect_strength=sampler.mass_effect_strength,
        influence_factor=sampler.influence_factor,
        capsule_width_voxels=sampler.capsule_width_voxels,
        capsule_delta_hu=sampler.capsule_delta_hu,
        edge_blend_sigma=sampler.edge_blend_sigma,
        size_class=size_class.name,
        radius_range_mm=size_class.radius_range_mm,
    )


# --------------------------------------------------------------------------
# pools


@dataclass
class PoolEntry:
    """One healthy host: either file paths or in-memory objects."""

    id: str
    volume_path: str | None = None
    liver_path: str | None = None
    volume: CtVolume | None = None
    liver: BinaryMask | None = None

    def load(self) -> tuple[CtVolume, BinaryMask]:
        if self.volume is not None and self.liver is not None:
            return self.volume, self.liver
        if not self.volume_path or not self.liver_path:
            raise ValueError(f"pool entry {self.id!r} has neither data nor paths")
        volume = read_volume(self.volume_path)
        liver = read_mask(self.liver_path).liver()
        return volume, liver


def grid_sha256(grid: VoxelGrid) -> str:
    h = hashlib.sha256()
    h.update(repr(grid.dims).encode())
    h.update(repr(grid.spacing).encode())
    h.update(str(grid.data.dtype).encode())
    h.update(np.ascontiguousarray(grid.data.ravel(order="F")).tobytes())
    return h.hexdigest()


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_pool(path: str | Path) -> list[PoolEntry]:
    """Read a pool description: JSON {"entries": [{id, volume, liver}, ...]}.

    Relative paths resolve against the JSON file's directory.
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    if not isinstance(doc, dict) or "entries" not in doc:
        raise ValueError(f"{path}: expected an object with an 'entries' list")
    base = path.parent
    out = []
    for e in doc["entries"]:
        out.append(
            PoolEntry(
                id=str(e["id"]),
                volume_path=str(base / e["volume"]),
                liver_path=str(base / e["liver"]),
            )
        )
    return out


# --------------------------------------------------------------------------
# synthesis with spec resampling

MAX_RESPEC_ATTEMPTS = 10


def synthesize_with_respec(
    volume: CtVolume,
    liver: BinaryMask,
    classes: list[SizeClass],
    item_seed: int,
    sampler: SamplerConfig,
    placement: PlacementParams,
    vessels: BinaryMask,
    max_respec: int = MAX_RESPEC_ATTEMPTS,
) -> tuple[CtVolume, LabelMask, list[TumorRecord], int]:
    """Synthesize, resampling the tumor specs when placement is exhausted."""
    stats = host_liver_stats(volume, liver)
    last: GenerationError | None = None
    for attempt in range(max_respec):
        specs = [
            sample_spec(c, stats, derive_seed(item_seed, "spec", t, attempt), sampler)
            for t, c in enumerate(classes)
        ]
        pp = replace(placement, seed=derive_seed(item_seed, "placement", attempt))
        try:
            out, label, records = synthesize_tumors(volume, liver, specs, pp, vessels=vessels)
            return out, label, records, attempt + 1
        except GenerationError as exc:
            last = exc
    raise GenerationError(f"item failed after {max_respec} spec resamples: {last}")


# --------------------------------------------------------------------------
# offline validation sets


@dataclass
class DatasetManifest:
    """Reproducibility carrier: every emitted pair is regenerable from it."""

    kind: str
    global_seed: int
    classes: list[str]
    params: dict
    sources: list[dict]
    items: list[dict]
    config: dict = field(default_factory=dict)
    generator_version: str = _generator_version
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "format": "ctsynth-manifest",
            "schema_version": self.schema_version,
            "generator_version": self.generator_version,
            "kind": self.kind,
            "global_seed": self.global_seed,
            "classes": self.classes,
            "params": self.params,
            "sources": self.sources,
            "items": self.items,
            "config": self.config,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != "ctsynth-manifest":
            raise ValueError(f"{path}: not a ctsynth manifest")
        return cls(
            kind=doc["kind"],
            global_seed=doc["global_seed"],
            classes=doc["classes"],
            params=doc["params"],
            sources=doc["sources"],
            items=doc["items"],
            config=doc.get("config", {}),
            generator_version=doc.get("generator_version", "unknown"),
            schema_version=doc.get("schema_version", 1),
        )


def _params_dict(
    sampler: SamplerConfig, placement: PlacementParams, vessel_params: VesselParams
) -> dict:
    return {
        "sampler": asdict(sampler),
        "placement": {
            "max_attempts": placement.max_attempts,
            "vessel_safety_margin_voxels": placement.vessel_safety_margin_voxels,
            "containment": placement.containment,
        },
        "vessels": asdict(vessel_params),
        "max_respec": MAX_RESPEC_ATTEMPTS,
    }


def _params_from_dict(params: dict) -> tuple[SamplerConfig, PlacementParams, VesselParams]:
    sampler = SamplerConfig(**params["sampler"])
    placement = PlacementParams(**params["placement"])
    vessels = VesselParams(**params["vessels"])
    return sampler, placement, vessels


def _validation_item_name(index: int, class_name: str) -> str:
    return f"item_{index:05d}_{class_name}"


def _build_validation_item(args: tuple) -> dict:
    (index, entry, size_class, global_seed, sampler, placement, vessel_params, out_dir) = args
    item_seed = derive_seed(global_seed, "validation", index)
    stem = _validation_item_name(index, size_class.name)
    item: dict = {
        "index": index,
        "source": entry.id,
        "size_class": size_class.name,
        "seed": item_seed,
    }
    try:
        volume, liver = entry.load()
        vessels = segment_vessels(volume, liver, vessel_params)
        out, label, records, attempts = synthesize_with_respec(
            volume, liver, [size_class], item_seed, sampler, placement, vessels
        )
        image_path = Path(out_dir) / f"{stem}_image.nii.gz"
        label_path = Path(out_dir) / f"{stem}_label.nii.gz"
        write_volume(out, image_path)
        write_mask(label, label_path)
        item.update(
            status="ok",
            respec_attempts=attempts,
            image=image_path.name,
            label=label_path.name,
            image_sha256=file_sha256(image_path),
            label_sha256=file_sha256(label_path),
            tumors=[r.to_dict() for r in records],
        )
    except GenerationError as exc:
        item.update(status="failed", error=str(exc))
    return item


def make_validation_set(
    pool: list[PoolEntry],
    classes: list[SizeClass],
    seed: int,
    out_dir: str | Path,
    *,
    sampler: SamplerConfig = SamplerConfig(),
    placement: PlacementParams = PlacementParams(),
    vessel_params: VesselParams = VesselParams(),
    workers: int = 1,
    config_echo: dict | None = None,
) -> DatasetManifest:
    """Emit |pool| x |classes| image/label pairs plus a manifest.

    Output bytes are a pure function of the inputs and seed: independent of
    ``workers`` and identical across re-runs.
    """
    if not pool:
        raise ValueError("pool must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sources = []
    for entry in pool:
        volume, liver = entry.load()
        sources.append(
            {
                "id": entry.id,
                "volume": entry.volume_path,
                "liver": entry.liver_path,
                "volume_sha256": grid_sha256(volume.grid),
                "liver_sha256": grid_sha256(liver.grid),
            }
        )
    tasks = []
    index = 0
    for entry in pool:
        for size_class in classes:
            tasks.append(
                (index, entry, size_class, seed, sampler, placement, vessel_params, str(out_dir))
            )
            index += 1
    if workers <= 1:
        items = [_build_validation_item(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool_exec:
            items = list(pool_exec.map(_build_validation_item, tasks))
    items.sort(key=lambda it: it["index"])
    manifest = DatasetManifest(
        kind="validation",
        global_seed=seed,
        classes=[c.name for c in classes],
        params=_params_dict(sampler, placement, vessel_params),
        sources=sources,
        items=items,
        config=config_echo or {},
    )
    manifest.save(out_dir / "manifest.json")
    return manifest


def rebuild_validation_item(
    manifest: DatasetManifest,
    index: int,
    pool: list[PoolEntry],
    out_dir: str | Path,
) -> tuple[Path, Path]:
    """Regenerate a single pair from its manifest entry (for auditing)."""
    item = next(it for it in manifest.items if it["index"] == index)
    entry = next(e for e in pool if e.id == item["source"])
    size_class = next(
        (c for c in DEFAULT_SIZE_CLASSES if c.name == item["size_class"]),
        None,
    )
    if size_class is None:
        size_class = SizeClass(item["size_class"], 2.0, 44.0)
    sampler, placement, vessel_params = _params_from_dict(manifest.params)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    volume, liver = entry.load()
    vessels = segment_vessels(volume, liver, vessel_params)
    out, label, _, _ = synthesize_with_respec(
        volume, liver, [size_class], item["seed"], sampler, placement, vessels
    )
    stem = _validation_item_name(index, size_class.name)
    image_path = out_dir / f"{stem}_image.nii.gz"
    label_path = out_dir / f"{stem}_label.nii.gz"
    write_volume(out, image_path)
    write_mask(label, label_path)
    return image_path, label_path


# --------------------------------------------------------------------------
# continual training stream


@dataclass
class StreamItem:
    index: int
    source_id: str
    seed: int
    volume: CtVolume
    label: LabelMask
    records: list[TumorRecord]
    respec_attempts: int = 1

    def record_dict(self) -> dict:
        return {
            "index": self.index,
            "source": self.source_id,
            "seed": self.seed,
            "respec_attempts": self.respec_attempts,
            "tumors": [r.to_dict() for r in self.records],
        }


def _mix_probs(classes: list[SizeClass], class_mix: dict[str, float]) -> list[float]:
    unknown = set(class_mix) - {c.name for c in classes}
    if unknown:
        raise ValueError(f"class_mix names not in size classes: {sorted(unknown)}")
    probs = [float(class_mix.get(c.name, 0.0)) for c in classes]
    if any(p < 0 for p in probs):
        raise ValueError("class_mix probabilities must be >= 0")
    total = sum(probs)
    if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-6):
        raise ValueError(f"class_mix must sum to 1, got {total}")
    return probs


def plan_stream_item(
    n_sources: int,
    classes: list[SizeClass],
    class_mix: dict[str, float],
    seed: int,
    index: int,
    tumors_per_volume: tuple[int, int] = (1, 3),
) -> tuple[int, list[str]]:
    """Cheap, pure plan of item ``index``: (source index, class per tumor)."""
    probs = _mix_probs(classes, class_mix)
    lo, hi = tumors_per_volume
    if not 1 <= lo <= hi:
        raise ValueError("tumors_per_volume must satisfy 1 <= lo <= hi")
    rng = np.random.default_rng(derive_seed(seed, "stream", index, "plan"))
    source = int(rng.integers(n_sources))
    k = int(rng.integers(lo, hi + 1))
    picks = rng.choice(len(classes), size=k, p=probs)
    return source, [classes[int(i)].name for i in picks]


def stream_item(
    pool: list[PoolEntry],
    class_mix: dict[str, float],
    seed: int,
    index: int,
    *,
    classes: list[SizeClass] | None = None,
    sampler: SamplerConfig = SamplerConfig(),
    placement: PlacementParams = PlacementParams(),
    vessel_params: VesselParams = VesselParams(),
    tumors_per_volume: tuple[int, int] = (1, 3),
    _host_cache: dict | None = None,
) -> StreamItem:
    """Generate stream item ``index``; pure in (pool, class_mix, seed, index)."""
    classes = list(classes or DEFAULT_SIZE_CLASSES)
    by_name = {c.name: c for c in classes}
    src_idx, chosen = plan_stream_item(
        len(pool), classes, class_mix, seed, index, tumors_per_volume
    )
    entry = pool[src_idx]
    if _host_cache is not None and entry.id in _host_cache:
        volume, liver, vessels = _host_cache[entry.id]
    else:
        volume, liver = entry.load()
        vessels = segment_vessels(volume, liver, vessel_params)
        if _host_cache is not None:
            _host_cache[entry.id] = (volume, liver, vessels)
    item_seed = derive_seed(seed, "stream", index)
    out, label, records, attempts = synthesize_with_respec(
        volume, liver, [by_name[name] for name in chosen], item_seed, sampler, placement, vessels
    )
    return StreamItem(index, entry.id, item_seed, out, label, records, attempts)


def stream(
    pool: list[PoolEntry],
    class_mix: dict[str, float],
    seed: int,
    count: int | None = None,
    **kwargs,
) -> Iterator[StreamItem]:
    """Iterate stream items 0, 1, 2, ... (``count`` items, or unbounded)."""
    cache: dict = {}
    index = 0
    while count is None or index < count:
        yield stream_item(pool, class_mix, seed, index, _host_cache=cache, **kwargs)
        index += 1


def _build_stream_file_item(args: tuple) -> dict:
    (
        index,
        pool,
        class_mix,
        seed,
        classes,
        sampler,
        placement,
        vessel_params,
        tumors_per_volume,
        out_dir,
    ) = args
    try:
        item = stream_item(
            pool,
            class_mix,
            seed,
            index,
            classes=classes,
            sampler=sampler,
            placement=placement,
            vessel_params=vessel_params,
            tumors_per_volume=tumors_per_volume,
        )
    except GenerationError as exc:
        return {"index": index, "status": "failed", "error": str(exc)}
    image_path = Path(out_dir) / f"item_{index:05d}_image.nii.gz"
    label_path = Path(out_dir) / f"item_{index:05d}_label.nii.gz"
    write_volume(item.volume, image_path)
    write_mask(item.label, label_path)
    rec = item.record_dict()
    rec.update(
        status="ok",
        image=image_path.name,
        label=label_path.name,
        image_sha256=file_sha256(image_path),
        label_sha256=file_sha256(label_path),
    )
    return rec


def materialize_stream(
    pool: list[PoolEntry],
    class_mix: dict[str, float],
    seed: int,
    count: int,
    out_dir: str | Path,
    *,
    classes: list[SizeClass] | None = None,
    sampler: SamplerConfig = SamplerConfig(),
    placement: PlacementParams = PlacementParams(),
    vessel_params: VesselParams = VesselParams(),
    tumors_per_volume: tuple[int, int] = (1, 3),
    workers: int = 1,
    config_echo: dict | None = None,
) -> DatasetManifest:
    """Write ``count`` stream items to disk plus records.jsonl and a manifest.

    Output bytes are independent of ``workers`` because items are random
    access.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classes = list(classes or DEFAULT_SIZE_CLASSES)
    sources = []
    for entry in pool:
        volume, liver = entry.load()
        sources.append(
            {
                "id": entry.id,
                "volume": entry.volume_path,
                "liver": entry.liver_path,
                "volume_sha256": grid_sha256(volume.grid),
                "liver_sha256": grid_sha256(liver.grid),
            }
        )
    tasks = [
        (
            i,
            pool,
            class_mix,
            seed,
            classes,
            sampler,
            placement,
            vessel_params,
            tumors_per_volume,
            str(out_dir),
        )
        for i in range(count)
    ]
    if workers <= 1:
        items = [_build_stream_file_item(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool_exec:
            items = list(pool_exec.map(_build_stream_file_item, tasks))
    items.sort(key=lambda it: it["index"])
    with open(out_dir / "records.jsonl", "w", encoding="utf-8") as fh:
        for rec in items:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    params = _params_dict(sampler, placement, vessel_params)
    params["tumors_per_volume"] = list(tumors_per_volume)
    params["class_mix"] = dict(sorted(class_mix.items()))
    manifest = DatasetManifest(
        kind="stream",
        global_seed=seed,
        classes=[c.name for c in classes],
        params=params,
        sources=sources,
        items=items,
        config=config_echo or {},
    )
    manifest.save(out_dir / "manifest.json")
    return manifest
