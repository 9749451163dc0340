"""ctsynth: synthetic liver tumors for CT volumes, and the machinery to use
them as large validation sets: offline set construction, continual training
streams, segmentation/detection metrics, and checkpoint selection."""

from ._version import __version__
from .compose import (
    TumorRecord,
    TumorSpec,
    apply_capsule,
    apply_mass_effect,
    influence_region,
    synthesize_tumor,
    synthesize_tumors,
)
from .config import Config, load_config
from .core import (
    BinaryMask,
    Component,
    LabelMask,
    VoxelGrid,
    connected_components,
    dilate,
    erode,
    warp_by_displacement,
)
from .dataset import (
    DEFAULT_SIZE_CLASSES,
    DatasetManifest,
    HostStats,
    PoolEntry,
    SamplerConfig,
    SizeClass,
    StreamItem,
    derive_seed,
    host_liver_stats,
    load_pool,
    make_validation_set,
    materialize_stream,
    rebuild_validation_item,
    sample_spec,
    stream,
    stream_item,
)
from .errors import (
    ConfigError,
    CtSynthError,
    GenerationError,
    PlacementExhaustedError,
    SubResolutionError,
)
from .metrics import EvalReport, bootstrap_ci, dsc, evaluate_cases, lesion_sensitivity
from .niftiio import (
    CtVolume,
    PreprocessParams,
    preprocess,
    read_mask,
    read_volume,
    write_mask,
    write_volume,
)
from .placement import PlacementParams, select_location
from .selection import (
    MetricTrajectory,
    SelectionResult,
    StudyConfig,
    read_trajectories,
    regret,
    select_best,
    simulate_selection_study,
    write_trajectory,
)
from .shapes import (
    DeformSpec,
    EllipsoidSpec,
    elastic_deform,
    equivalent_radius_mm,
    generate_shape,
    make_ellipsoid,
)
from .textures import TextureSpec, generate_texture
from .vessels import VesselParams, segment_vessels

__all__ = [name for name in dir() if not name.startswith("_")]
