"""Pipeline configuration: JSON in, validated dataclasses out.

All sections are optional except ``scenarios``; missing keys take the defaults
below. ``load_config`` accepts a path or the name of a shipped config
(``demo.json``, ``paperish.json``).
"""

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, TaxelSimError
from .fem import MaterialParams
from .mesh import taxel_grid
from .nn.core import TrainConfig
from .nn.transformer import ClassifierConfig
from .oracle import OracleParams
from .scenario import Indenter, SolverConfig, trajectory_from_spec


def _build(cls, d, section):
    d = dict(d or {})
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigurationError(f"[{section}] unknown keys {sorted(unknown)}")
    try:
        return cls(**d)
    except TaxelSimError as exc:
        raise ConfigurationError(f"[{section}] {exc}") from exc
    except TypeError as exc:
        raise ConfigurationError(f"[{section}] {exc}") from exc


@dataclass(frozen=True)
class MeshConfig:
    dims: tuple = (0.040, 0.024, 0.010)
    resolution: tuple = (12, 7, 3)

    def __post_init__(self):
        if len(self.dims) != 3 or len(self.resolution) != 3:
            raise ConfigurationError("[mesh] dims and resolution need three entries")
        if min(self.dims) <= 0 or min(self.resolution) < 1:
            raise ConfigurationError("[mesh] dims must be > 0 and resolution >= 1")


@dataclass(frozen=True)
class TaxelConfig:
    pitch: float = 0.008
    depth: float = 0.002
    layout: tuple = (4, 2)
    cluster_radius: float = 0.004

    def positions(self, dims):
        return taxel_grid(dims, self.pitch, self.depth, tuple(self.layout))


@dataclass(frozen=True)
class AlignConfig:
    normalize: str = "none"
    band: int = None
    policy: str = "mean"

    def __post_init__(self):
        if self.normalize not in ("none", "zscore") or self.policy not in ("mean", "first"):
            raise ConfigurationError("[align] normalize must be none|zscore and policy mean|first")


@dataclass(frozen=True)
class FeatureConfig:
    cluster_radius: float = 0.004
    top_fraction: float = 0.3
    epsilon_floor: float = 1e-6

    def __post_init__(self):
        if not (self.cluster_radius > 0 and 0 < self.top_fraction <= 1 and self.epsilon_floor > 0):
            raise ConfigurationError("[features] invalid cluster_radius/top_fraction/epsilon_floor")


@dataclass(frozen=True)
class EvalConfig:
    test_fraction: float = 0.2

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ConfigurationError("[eval] test_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class RenderConfig:
    width: int = 64
    height: int = 32
    shape_sigma: float = 0.008
    mode: str = "direct"
    paper_literal_sign: bool = False

    def __post_init__(self):
        if self.mode not in ("direct", "exact") or self.shape_sigma <= 0 or min(self.width, self.height) < 1:
            raise ConfigurationError("[render] invalid grid or RBF options")


@dataclass(frozen=True)
class ClassifyConfig:
    indenters: dict = field(default_factory=dict)
    real_trials_per_class: int = 40
    real_train_fraction: float = 0.5
    sim_trials_per_class: int = 96
    depth_range: tuple = (0.0012, 0.002)
    speed_range: tuple = (0.004, 0.004)
    hold: float = 0.5
    yaw_range: tuple = (0.0, 6.283185307179586)
    jitter: float = 0.003
    frame_rate: float = 30.0
    window: float = 2.0
    train: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.indenters) < 2:
            raise ConfigurationError("[classify] need at least two indenter classes")
        for name, d in self.indenters.items():
            try:
                Indenter.from_dict(d)
            except TaxelSimError as exc:
                raise ConfigurationError(f"[classify] indenter {name!r}: {exc}") from exc
        if self.real_trials_per_class < 2 or self.sim_trials_per_class < 0:
            raise ConfigurationError("[classify] trial counts too small")
        if not 0 < self.real_train_fraction < 1:
            raise ConfigurationError("[classify] real_train_fraction must lie in (0, 1)")
        if self.depth_range[0] <= 0 or self.depth_range[1] < self.depth_range[0]:
            raise ConfigurationError("[classify] invalid depth_range")
        if self.speed_range[0] <= 0 or self.speed_range[1] < self.speed_range[0]:
            raise ConfigurationError("[classify] invalid speed_range")

    @property
    def train_config(self):
        return _build(TrainConfig, self.train, "classify.train")

    @property
    def model_config(self):
        return _build(ClassifierConfig, self.model, "classify.model")


@dataclass
class PipelineConfig:
    name: str
    seed: int
    mesh: MeshConfig
    material: MaterialParams
    taxels: TaxelConfig
    solver: SolverConfig
    oracle: OracleParams
    scenarios: dict
    align: AlignConfig
    features: FeatureConfig
    train: TrainConfig
    eval: EvalConfig
    render: RenderConfig
    classify: ClassifyConfig = None
    raw: dict = field(default_factory=dict)

    @property
    def taxel_positions(self):
        return self.taxels.positions(self.mesh.dims)


SECTIONS = {
    "mesh": MeshConfig, "material": MaterialParams, "taxels": TaxelConfig, "solver": SolverConfig,
    "oracle": OracleParams, "align": AlignConfig, "features": FeatureConfig, "train": TrainConfig,
    "eval": EvalConfig, "render": RenderConfig,
}


def _validate_scenarios(sc, mesh_cfg):
    if not isinstance(sc, dict):
        raise ConfigurationError("[scenarios] must be an object")
    for key in ("indenters", "locations", "trajectories"):
        if not isinstance(sc.get(key), list):
            raise ConfigurationError(f"[scenarios] missing list {key!r}")
    for i, d in enumerate(sc["indenters"]):
        try:
            Indenter.from_dict(d)
        except (TaxelSimError, KeyError, TypeError) as exc:
            raise ConfigurationError(f"[scenarios] indenter {i}: {exc}") from exc
    for i, loc in enumerate(sc["locations"]):
        if len(loc) != 2:
            raise ConfigurationError(f"[scenarios] location {i} must be [dx, dy]")
    for i, t in enumerate(sc["trajectories"]):
        try:
            traj = trajectory_from_spec({**t, "offset": [0.0, 0.0]})
        except (TaxelSimError, KeyError, TypeError) as exc:
            raise ConfigurationError(f"[scenarios] trajectory {i}: {exc}") from exc
        if traj.depth.max() >= 0.5 * mesh_cfg.dims[2]:
            raise ConfigurationError(f"[scenarios] trajectory {i}: depth exceeds half the block height")


def parse_config(raw, seed=None):
    """Validate every section before any work starts."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    known = set(SECTIONS) | {"name", "seed", "scenarios", "classify"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown config sections {sorted(unknown)}")
    parts = {k: _build(cls, raw.get(k), k) for k, cls in SECTIONS.items()}
    if "scenarios" not in raw:
        raise ConfigurationError("[scenarios] section is required")
    _validate_scenarios(raw["scenarios"], parts["mesh"])
    root_seed = int(raw.get("seed", 0) if seed is None else seed)
    if root_seed < 0:
        raise ConfigurationError("seed must be a non-negative integer")
    classify = _build(ClassifyConfig, raw["classify"], "classify") if raw.get("classify") else None
    if classify is not None:
        classify.train_config, classify.model_config  # noqa: B018  validate eagerly
    cfg = PipelineConfig(name=str(raw.get("name", "pipeline")), seed=root_seed, scenarios=raw["scenarios"],
                         classify=classify, raw=raw, **parts)
    np.asarray(cfg.taxel_positions)
    return cfg


def resolve_config_path(path):
    p = Path(path)
    if p.exists():
        return p
    shipped = resources.files("taxelsim") / "configs" / p.name
    if shipped.is_file():
        return Path(str(shipped))
    raise ConfigurationError(f"config file not found: {path}")


def load_config(path, seed=None):
    p = resolve_config_path(path)
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{p}: invalid JSON ({exc})") from exc
    return parse_config(raw, seed)
