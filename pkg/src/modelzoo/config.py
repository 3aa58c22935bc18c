"""Experiment configuration files (YAML) and their translation into run objects."""

from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from .nncore import NetworkSpec, mlp, small_cnn
from .optim import OptimConfig
from .tasks.augment import AugmentConfig
from .tasks.idx import load_delimited, read_idx
from .tasks.streams import (
    TaskStream,
    file_sha256,
    file_tasks,
    permute_tasks,
    rotate_tasks,
    split_tasks,
    synthetic_gaussian_tasks,
)
from .zoo import UNIFORM, BOOSTED, Seeds, ZooConfig

LEARNERS = ("zoo", "isolated", "multihead", "zoo-uniform")


class ConfigError(ValueError):
    def __init__(self, path, field: str, message: str):
        super().__init__(f"{path}: {field}: {message}")
        self.path = str(path)
        self.field = field
        self.message = message


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _resolve(v, info: ValidationInfo):
    if v is None:
        return v
    base = (info.context or {}).get("base")
    p = Path(v)
    if base is not None and not p.is_absolute():
        p = Path(base) / p
    if not p.exists():
        raise ValueError(f"file not found: {p}")
    return p


class StreamSection(_Section):
    generator: Literal["split", "rotated", "permuted", "synthetic", "files"]
    dataset: Optional[str] = None
    images: Optional[Path] = None
    labels: Optional[Path] = None
    test_images: Optional[Path] = None
    test_labels: Optional[Path] = None
    csv: Optional[Path] = None
    csv_scale: float = 1.0
    image_shape: Optional[List[int]] = None
    files: List[Path] = Field(default_factory=list)
    labels_per_task: int = 2
    angles_deg: List[float] = Field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0, 40.0])
    n_tasks: int = 5
    samples_per_class: Optional[int] = None
    val_fraction: float = 0.2
    dim: int = 10
    classes: int = 2
    noise_std: float = 0.5

    @field_validator("images", "labels", "test_images", "test_labels", "csv")
    @classmethod
    def _exists(cls, v, info: ValidationInfo):
        return _resolve(v, info)

    @field_validator("files")
    @classmethod
    def _all_exist(cls, v, info: ValidationInfo):
        return [_resolve(p, info) for p in v]

    @model_validator(mode="after")
    def _sources(self):
        if self.generator in ("split", "rotated", "permuted"):
            if self.csv is None and (self.images is None or self.labels is None):
                raise ValueError(f"generator {self.generator!r} needs images+labels (IDX) or csv")
        if self.generator == "files" and not self.files:
            raise ValueError("generator 'files' needs a non-empty files list")
        if (self.test_images is None) != (self.test_labels is None):
            raise ValueError("test_images and test_labels go together")
        if self.generator == "synthetic" and len(self.angles_deg) != self.n_tasks:
            raise ValueError("synthetic streams need one angle per task (angles_deg vs n_tasks)")
        return self


class ZooSection(_Section):
    beta_max: int = Field(5, ge=1)
    replay_fraction: float = Field(1.0, ge=0, le=1)
    epochs_per_episode: Optional[int] = Field(None, ge=0)
    without_replacement: bool = True
    beta_includes_current: bool = True


class OptimSection(_Section):
    lr0: float = Field(0.01, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    weight_decay: float = Field(1e-5, ge=0)
    batch_size: int = Field(16, ge=1)
    epochs: int = Field(200, ge=0)
    dropout_p: float = Field(0.2, ge=0, lt=1)


class AugmentSection(_Section):
    enabled: Optional[bool] = None
    pad: int = Field(4, ge=0)
    random_crop: bool = True
    hflip: bool = False


class NetworkSection(_Section):
    arch: Literal["auto", "small_cnn", "mlp"] = "auto"
    filters: int = Field(80, ge=1)
    hidden: List[int] = Field(default_factory=lambda: [64])


class SeedsSection(_Section):
    data: int = 0
    init: int = 0
    sampling: int = 0


class CompetitionSection(_Section):
    mode: Literal["pairwise", "incremental"] = "pairwise"
    seed: Optional[int] = None


class ExperimentConfig(_Section):
    name: Optional[str] = None
    stream: StreamSection
    learner: Literal["zoo", "isolated", "multihead", "zoo-uniform"] = "zoo"
    zoo: ZooSection = Field(default_factory=ZooSection)
    optim: OptimSection = Field(default_factory=OptimSection)
    augment: AugmentSection = Field(default_factory=AugmentSection)
    network: NetworkSection = Field(default_factory=NetworkSection)
    seeds: SeedsSection = Field(default_factory=SeedsSection)
    competition: CompetitionSection = Field(default_factory=CompetitionSection)
    output: Path = Path("runs")

    # -- derived objects --------------------------------------------------

    @property
    def episode_epochs(self) -> int:
        return self.optim.epochs if self.zoo.epochs_per_episode is None else self.zoo.epochs_per_episode

    def optim_config(self) -> OptimConfig:
        return OptimConfig(**self.optim.model_dump())

    def seeds_obj(self) -> Seeds:
        return Seeds(**self.seeds.model_dump())

    def zoo_config(self) -> ZooConfig:
        replay = 0.0 if self.learner == "isolated" else self.zoo.replay_fraction
        return ZooConfig(
            beta_max=self.zoo.beta_max,
            replay_fraction=replay,
            epochs_per_episode=self.zoo.epochs_per_episode,
            sampling=UNIFORM if self.learner == "zoo-uniform" else BOOSTED,
            without_replacement=self.zoo.without_replacement,
            beta_includes_current=self.zoo.beta_includes_current,
            seeds=self.seeds_obj(),
        )

    def augment_config(self) -> AugmentConfig:
        enabled = self.augment.enabled
        if enabled is None:
            # off by default when each task is seen for a single epoch
            enabled = self.episode_epochs > 1
        return AugmentConfig(enabled, self.augment.pad, self.augment.random_crop, self.augment.hflip)

    def network_spec(self, stream: TaskStream) -> NetworkSpec:
        shape = stream[0].train_x.shape[1:]
        arch = self.network.arch
        if arch == "auto":
            arch = "small_cnn" if len(shape) == 3 else "mlp"
        if arch == "small_cnn":
            return small_cnn(shape, self.network.filters, self.optim.dropout_p)
        return mlp(int(np.prod(shape)), self.network.hidden, self.optim.dropout_p)

    @property
    def dataset(self) -> str:
        return self.stream.dataset or self.stream.generator

    def build_stream(self) -> TaskStream:
        s = self.stream
        seed = self.seeds.data
        if s.generator == "synthetic":
            return synthetic_gaussian_tasks(
                s.n_tasks, s.dim, s.classes, s.angles_deg, s.samples_per_class or 100, seed, s.noise_std, s.val_fraction
            )
        if s.generator == "files":
            return file_tasks(s.files, s.val_fraction, seed)
        x, y, sources = self._load_source(s.images, s.labels, s.csv)
        test = None
        if s.test_images is not None:
            tx, ty, tsrc = self._load_source(s.test_images, s.test_labels, None)
            test = (tx, ty)
            sources += tsrc
        if s.generator == "split":
            stream = split_tasks(x, y, s.labels_per_task, s.val_fraction, seed, s.samples_per_class, test)
        elif s.generator == "rotated":
            stream = rotate_tasks(x, y, s.angles_deg, s.val_fraction, seed, s.samples_per_class, test)
        else:
            stream = permute_tasks(x, y, s.n_tasks, seed, s.val_fraction, s.samples_per_class, test)
        return TaskStream(stream.tasks, stream.generator, stream.params, {str(p): file_sha256(p) for p in sources})

    def _load_source(self, images, labels, csv):
        if csv is not None:
            x, y = load_delimited(csv)
            x = x / self.stream.csv_scale
            if self.stream.image_shape:
                x = x.reshape((len(x),) + tuple(self.stream.image_shape))
            return x, y, [csv]
        x = read_idx(images)
        y = read_idx(labels, scale=False).astype(np.int64)
        if len(x) != len(y):
            raise ValueError(f"{images} holds {len(x)} items but {labels} holds {len(y)}")
        return x, y, [images, labels]

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate a YAML experiment file; relative paths resolve against it."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(path, "<file>", "config file not found") from None
    except yaml.YAMLError as e:
        raise ConfigError(path, "<syntax>", str(e)) from None
    if not isinstance(raw, dict):
        raise ConfigError(path, "<root>", "config must be a mapping")
    raw = dict(raw)
    for key, value in (overrides or {}).items():
        raw[key] = value
    raw.setdefault("name", path.stem)
    from pydantic import ValidationError

    try:
        return ExperimentConfig.model_validate(raw, context={"base": path.parent})
    except ValidationError as e:
        err = e.errors()[0]
        field = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ConfigError(path, field, err["msg"]) from None
