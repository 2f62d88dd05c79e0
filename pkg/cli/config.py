"""
Run configuration: built-in defaults, then config.yaml, then command-line overrides.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

from datasets.noise import NoiseSpec
from datasets.synthetic import KITTI_CAMERA, SceneSpec
from evaluation.metrics import EvalConfig
from geometry.camera import CameraIntrinsics
from services.annotation_service import BLOCKER_EPSILON
from services.inference_service import MAX_PROPOSALS, NMS_THRESHOLD
from services.pose_solver import PnPOptions
from training.losses import LossWeights
from utils.config import build_section, load_yaml_config
from utils.errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathsConfig:
    bank: str = "data/shape_bank.json"
    calib: Optional[str] = None
    out: str = "out"


@dataclass(frozen=True)
class InferenceConfig:
    nms_threshold: float = NMS_THRESHOLD
    max_proposals: Optional[int] = MAX_PROPOSALS


@dataclass(frozen=True)
class AnnotationConfig:
    use_dataset_box: bool = False
    epsilon: float = BLOCKER_EPSILON


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    n_images: int = 10
    trials: int = 500
    grad_points: int = 100


@dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    camera: CameraIntrinsics = KITTI_CAMERA
    eval: EvalConfig = field(default_factory=EvalConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    pnp: PnPOptions = field(default_factory=PnPOptions)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    scene: SceneSpec = field(default_factory=SceneSpec)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    annotation: AnnotationConfig = field(default_factory=AnnotationConfig)
    run: RunSettings = field(default_factory=RunSettings)

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready view of the effective configuration."""
        data = dataclasses.asdict(self)
        data["pnp"]["mode"] = self.pnp.mode.value
        data["eval"] = self.eval.to_dict()
        return data


SECTIONS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _section_type(name: str):
    default = RunConfig()
    return type(getattr(default, name))


def _apply(cfg: RunConfig, name: str, section: Optional[Mapping[str, Any]], origin: str) -> RunConfig:
    if name not in SECTIONS:
        raise ConfigError(f"unknown config section '{name}' ({origin})")
    if section is None:
        return cfg
    if not isinstance(section, Mapping):
        raise ConfigError(f"section '{name}' must be a mapping ({origin})")
    section = dict(section)
    base = getattr(cfg, name)
    if name == "loss" and "preset" in section:
        preset = section.pop("preset")
        if preset is not None:
            try:
                base = LossWeights.preset(str(preset))
            except ValidationError as e:
                raise ConfigError(f"{e} ({origin})") from e
    updated = build_section(_section_type(name), section, name, base=base)
    return dataclasses.replace(cfg, **{name: updated})


def load_run_config(path: Optional[str] = None,
                    overrides: Optional[Mapping[str, Mapping[str, Any]]] = None) -> RunConfig:
    """
    Build the effective RunConfig.

    Args:
        path: YAML config file; None uses the built-in defaults only
        overrides: section -> {key: value} from command-line flags (None values ignored)

    Returns:
        RunConfig with defaults <- file <- overrides
    """
    cfg = RunConfig()
    for name, section in load_yaml_config(path).items():
        cfg = _apply(cfg, name, section, path or "config")
    for name, section in (overrides or {}).items():
        cfg = _apply(cfg, name, {k: v for k, v in section.items() if v is not None}, "command line")
    logger.debug(f"Effective config: {cfg.to_dict()}")
    return cfg
