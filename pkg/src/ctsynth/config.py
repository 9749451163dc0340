"""One structured config file drives every knob of the pipeline.

YAML (JSON works too), strict: unknown keys are rejected at every level,
and a ``schema_version`` field guards against format drift. The effective
config is echoed into every manifest and report so outputs are
self-describing. See README for the full default table.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dataset import DEFAULT_SIZE_CLASSES, SamplerConfig, SizeClass
from .errors import ConfigError
from .niftiio import PreprocessParams
from .placement import PlacementParams
from .selection import StudyConfig
from .vessels import VesselParams

SCHEMA_VERSION = 1


@dataclass
class VesselsSection:
    mode: str = "relative"
    k_sigma: float = 2.0
    absolute_hu: float | None = None
    min_component_voxels: int = 20


@dataclass
class ShapeSection:
    control_spacing: int = 8
    smooth_sigma: float = 2.5
    sigma_d_scale: float = 0.4
    sigma_d_min: float = 2.0
    sigma_d_max: float = 5.0
    sigma_d_rel_cap: float = 0.6


@dataclass
class TextureSection:
    coarse_factor: int = 4
    blur_sigma: float = 1.0
    mu_offset_lo: float = 30.0
    mu_offset_hi: float = 60.0


@dataclass
class TumorSection:
    mass_effect_strength: float = 0.2
    influence_factor: float = 1.5
    capsule_width_voxels: int = 2
    capsule_delta_hu: float = 20.0
    edge_blend_sigma: float = 1.0


@dataclass
class PlacementSection:
    max_attempts: int = 200
    vessel_safety_margin_voxels: int = 1
    containment: float = 1.0


@dataclass
class SizeClassSection:
    name: str
    lo_mm: float
    hi_mm: float
    eccentricity_cap: float | None = None


@dataclass
class StreamSection:
    tumors_min: int = 1
    tumors_max: int = 3


@dataclass
class MetricsSection:
    overlap_frac: float = 0.1
    ci_level: float = 0.95
    bootstrap_resamples: int = 1000
    bootstrap_seed: int = 0


@dataclass
class PreprocessSection:
    clip_min: float = -21.0
    clip_max: float = 189.0
    normalize: bool = True


@dataclass
class StudySection:
    trials: int = 200
    arms: list[int] = field(default_factory=lambda: [5, 150])
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


def _default_classes() -> list[SizeClassSection]:
    return [SizeClassSection(c.name, c.lo_mm, c.hi_mm) for c in DEFAULT_SIZE_CLASSES]


def _default_mix() -> dict:
    return {"tiny": 0.25, "small": 0.25, "medium": 0.25, "large": 0.25}


@dataclass
class Config:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    vessels: VesselsSection = field(default_factory=VesselsSection)
    shape: ShapeSection = field(default_factory=ShapeSection)
    texture: TextureSection = field(default_factory=TextureSection)
    tumor: TumorSection = field(default_factory=TumorSection)
    placement: PlacementSection = field(default_factory=PlacementSection)
    size_classes: list[SizeClassSection] = field(default_factory=_default_classes)
    class_mix: dict = field(default_factory=_default_mix)
    stream: StreamSection = field(default_factory=StreamSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    study: StudySection = field(default_factory=StudySection)

    # ---- conversions to runtime parameter objects ----

    def vessel_params(self) -> VesselParams:
        v = self.vessels
        return VesselParams(v.mode, v.k_sigma, v.absolute_hu, v.min_component_voxels)

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(
            sigma_d_scale=self.shape.sigma_d_scale,
            sigma_d_min=self.shape.sigma_d_min,
            sigma_d_max=self.shape.sigma_d_max,
            sigma_d_rel_cap=self.shape.sigma_d_rel_cap,
            control_spacing=self.shape.control_spacing,
            smooth_sigma=self.shape.smooth_sigma,
            mu_offset_lo=self.texture.mu_offset_lo,
            mu_offset_hi=self.texture.mu_offset_hi,
            coarse_factor=self.texture.coarse_factor,
            blur_sigma=self.texture.blur_sigma,
            mass_effect_strength=self.tumor.mass_effect_strength,
            influence_factor=self.tumor.influence_factor,
            capsule_width_voxels=self.tumor.capsule_width_voxels,
            capsule_delta_hu=self.tumor.capsule_delta_hu,
            edge_blend_sigma=self.tumor.edge_blend_sigma,
        )

    def placement_params(self, seed: int = 0) -> PlacementParams:
        p = self.placement
        return PlacementParams(
            p.max_attempts, p.vessel_safety_margin_voxels, p.containment, seed
        )

    def classes(self) -> list[SizeClass]:
        return [
            SizeClass(c.name, c.lo_mm, c.hi_mm, c.eccentricity_cap) for c in self.size_classes
        ]

    def classes_by_name(self) -> dict[str, SizeClass]:
        return {c.name: c for c in self.classes()}

    def mix(self) -> dict[str, float]:
        return {str(k): float(v) for k, v in self.class_mix.items()}

    def tumors_per_volume(self) -> tuple[int, int]:
        return (self.stream.tumors_min, self.stream.tumors_max)

    def preprocess_params(self) -> PreprocessParams:
        p = self.preprocess
        return PreprocessParams(p.clip_min, p.clip_max, p.normalize)

    def study_config(self, seed: int | None = None, trials: int | None = None) -> StudyConfig:
        s = self.study
        return StudyConfig(
            trials=s.trials if trials is None else trials,
            arms=tuple(s.arms),
            epoch_start=s.epoch_start,
            epoch_step=s.epoch_step,
            n_checkpoints=s.n_checkpoints,
            peak_lo=s.peak_lo,
            peak_hi=s.peak_hi,
            tau_lo=s.tau_lo,
            tau_hi=s.tau_hi,
            onset_lo=s.onset_lo,
            onset_hi=s.onset_hi,
            decline_lo=s.decline_lo,
            decline_hi=s.decline_hi,
            checkpoint_jitter=s.checkpoint_jitter,
            obs_sigma=s.obs_sigma,
            seed=self.seed if seed is None else seed,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version {self.schema_version} unsupported (expected {SCHEMA_VERSION})"
            )
        try:
            self.vessel_params()
            self.placement_params()
            self.preprocess_params()
            self.study_config()
            classes = self.classes()
        except (ValueError, ConfigError) as exc:
            raise ConfigError(str(exc)) from exc
        names = [c.name for c in classes]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate size class names: {names}")
        unknown = set(self.mix()) - set(names)
        if unknown:
            raise ConfigError(f"class_mix references unknown classes: {sorted(unknown)}")
        total = sum(self.mix().values())
        if abs(total - 1.0) > 1e-6:
            raise ConfigError(f"class_mix must sum to 1, got {total}")
        if self.stream.tumors_min < 1 or self.stream.tumors_min > self.stream.tumors_max:
            raise ConfigError("stream.tumors_min must satisfy 1 <= min <= max")


_SECTION_TYPES = {
    "vessels": VesselsSection,
    "shape": ShapeSection,
    "texture": TextureSection,
    "tumor": TumorSection,
    "placement": PlacementSection,
    "stream": StreamSection,
    "metrics": MetricsSection,
    "preprocess": PreprocessSection,
    "study": StudySection,
}


def _coerce(value, annotation: str, path: str):
    if annotation in ("float | None", "Optional[float]"):
        if value is None:
            return None
        annotation = "float"
    if annotation == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if annotation == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if annotation == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if annotation == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build_dataclass(cls, mapping, path):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path or cls.__name__}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(mapping) - set(fields)
    if unknown:
        where = path or "config"
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in mapping.items():
        f = fields[name]
        sub = f"{path}.{name}" if path else name
        if cls is Config and name in _SECTION_TYPES:
            kwargs[name] = _build_dataclass(_SECTION_TYPES[name], value, sub)
        elif cls is Config and name == "size_classes":
            if not isinstance(value, list):
                raise ConfigError(f"{sub}: expected a list")
            kwargs[name] = [
                _build_dataclass(SizeClassSection, v, f"{sub}[{i}]")
                for i, v in enumerate(value)
            ]
        elif cls is Config and name == "class_mix":
            if not isinstance(value, dict):
                raise ConfigError(f"{sub}: expected a mapping")
            kwargs[name] = {
                str(k): _coerce(v, "float", f"{sub}.{k}") for k, v in value.items()
            }
        elif cls is StudySection and name == "arms":
            if not isinstance(value, list) or not value:
                raise ConfigError(f"{sub}: expected a non-empty list of integers")
            kwargs[name] = [_coerce(v, "int", f"{sub}[{i}]") for i, v in enumerate(value)]
        else:
            ann = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
            kwargs[name] = _coerce(value, ann, sub)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc


def config_from_mapping(mapping: dict) -> Config:
    cfg = _build_dataclass(Config, mapping, "")
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> Config:
    """Load and validate a config file; None gives the defaults."""
    if path is None:
        cfg = Config()
        cfg.validate()
        return cfg
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(doc)
