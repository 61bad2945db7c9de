"""Pipeline configuration: one versioned JSON document, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .patch_ae import TrainConfig
from .radar_sim import OOD_LABELS, RadarConfig, SceneLabel, SplitSpec
from .scoring import ScoreKind

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    seed: int | None = None
    train_id: int = 2000
    val_id: int = 500
    test_id: int = 500
    test_ood: int = 600
    frames_per_scene: int = 50
    ood_labels: list[str] = field(default_factory=lambda: [lab.name for lab in OOD_LABELS])
    snr_db: float | None = 20.0
    n_clutter: int = 2

    def split_spec(self) -> SplitSpec:
        try:
            labels = tuple(SceneLabel[name] for name in self.ood_labels)
        except KeyError as exc:
            raise ConfigError(f"unknown OOD label {exc}") from None
        if any(lab.is_id for lab in labels):
            raise ConfigError("ood_labels may not contain ID_WALK")
        return SplitSpec(self.train_id, self.val_id, self.test_id, self.test_ood, self.frames_per_scene, labels)


@dataclass
class TrainSection:
    epochs: int = 30
    batch_frames: int = 8
    lr: float = 1e-3
    seed: int | None = None
    shuffle: bool = True


@dataclass
class CalibrationConfig:
    quantile: float = 0.95
    kind: str = "ENERGY"


@dataclass
class PathsConfig:
    workdir: str = "run"


@dataclass
class PipelineConfig:
    version: int = SCHEMA_VERSION
    seed: int = 0
    radar: dict[str, Any] = field(default_factory=dict)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainSection = field(default_factory=TrainSection)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    # -- derived ---------------------------------------------------------------------

    @property
    def radar_config(self) -> RadarConfig:
        return RadarConfig(**self.radar)

    @property
    def dataset_seed(self) -> int:
        return self.seed if self.dataset.seed is None else self.dataset.seed

    @property
    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(t.epochs, t.batch_frames, t.lr, self.seed if t.seed is None else t.seed, t.shuffle)

    @property
    def score_kind(self) -> ScoreKind:
        return ScoreKind(self.calibration.kind)

    @property
    def workdir(self) -> Path:
        p = Path(self.paths.workdir)
        return p if p.is_absolute() else self.base_dir / p

    def path(self, name: str) -> Path:
        return self.workdir / FILES[name]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def digest(self) -> str:
        """Hash of everything that affects outputs (paths excluded)."""
        d = self.to_dict()
        d.pop("paths")
        d["seed"] = self.seed
        d["dataset"]["seed"] = self.dataset_seed
        d["train"]["seed"] = self.train_config.seed
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def manifest(self) -> str:
        return f"radar_ood config={self.digest()} dataset_seed={self.dataset_seed} train_seed={self.train_config.seed}"

    def validate(self) -> "PipelineConfig":
        if self.version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        for name, value in (("seed", self.seed), ("dataset.seed", self.dataset.seed), ("train.seed", self.train.seed)):
            if value is not None and not (isinstance(value, int) and 0 <= value < 2**64):
                raise ConfigError(f"{name} must be an unsigned 64-bit integer")
        try:
            self.radar_config
            self.train_config
            self.score_kind
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if not 0 < self.calibration.quantile < 1:
            raise ConfigError("calibration.quantile must lie in (0, 1)")
        self.dataset.split_spec()
        return self


FILES = {
    "adc_train": "adc_train.radc",
    "adc_val": "adc_val.radc",
    "adc_test": "adc_test.radc",
    "rdi_train": "rdi_train.rdif",
    "rdi_val": "rdi_val.rdif",
    "rdi_test": "rdi_test.rdif",
    "weights": "weights.aewt",
    "encoder": "encoder.aewt",
    "baseline_weights": "baseline.aewt",
    "loss": "loss.csv",
    "baseline_loss": "loss_baseline.csv",
    "scores_val": "scores_val.csv",
    "scores": "scores_test.csv",
    "baseline_scores": "scores_baseline_test.csv",
    "threshold": "threshold.txt",
    "report_json": "report.json",
    "report_txt": "report.txt",
    "fig_roc": "roc.png",
    "fig_scores": "score_distributions.png",
    "fig_samples": "sample_rdis.png",
}


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in dataclasses.fields(cls) if f.name != "base_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        sub = {"dataset": DatasetConfig, "train": TrainSection, "calibration": CalibrationConfig, "paths": PathsConfig}.get(f.name)
        kwargs[f.name] = _build(sub, data[f.name], f"{where}.{f.name}") if cls is PipelineConfig and sub else data[f.name]
    return cls(**kwargs)


def config_from_dict(data: dict, base_dir=".") -> PipelineConfig:
    cfg = _build(PipelineConfig, data, "config")
    radar_fields = {f.name for f in dataclasses.fields(RadarConfig)}
    unknown = set(cfg.radar) - radar_fields
    if unknown:
        raise ConfigError(f"unknown key(s) in config.radar: {', '.join(sorted(unknown))}")
    cfg.base_dir = Path(base_dir)
    return cfg.validate()


def load_config(path=None, seed: int | None = None) -> PipelineConfig:
    if path is None:
        cfg = config_from_dict({})
    else:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        cfg = config_from_dict(data, base_dir=path.parent)
    if seed is not None:
        cfg.seed = seed
        cfg.validate()
    return cfg


def default_config_dict() -> dict:
    return config_from_dict({}).to_dict()
