"""Experiment manifests: everything a run needs, in one JSON document.

The manifest ``seed`` is a base offset. Dataset, model and attack seeds in
the document are added to it, so changing one number (or setting
``INTERLAB_SEED``) reseeds the whole pipeline.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional

from interlab.attacks import AttackConfig
from interlab.errors import ConfigError
from interlab.nnengine import DatasetSpec, Model, mlp, residual_mlp

TOOL_VERSION = "0.1.0"
SEED_ENV = "INTERLAB_SEED"
REPORT_SECTIONS = ("loo", "correlation", "lambda", "interaction_only", "propositions", "heatmap")


def _strict(cls, d: Any, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    for key in d:
        if key not in known:
            raise ConfigError(f"{where}.{key}: unknown field")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class ModelSpec:
    name: str
    role: str = "target"  # "source" | "target"
    arch: str = "mlp"  # "mlp" | "residual"
    hidden: tuple = (64, 64)
    blocks: int = 2
    activation: str = "softplus"
    beta: float = 10.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def validate(self, where: str) -> None:
        if self.role not in ("source", "target"):
            raise ConfigError(f"{where}.role: must be 'source' or 'target'")
        if self.arch not in ("mlp", "residual"):
            raise ConfigError(f"{where}.arch: must be 'mlp' or 'residual'")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError(f"{where}.hidden: needs at least one positive width")

    def build(self, input_dim: int, num_classes: int, base_seed: int) -> Model:
        seed = base_seed + self.seed
        if self.arch == "residual":
            return residual_mlp(input_dim, self.hidden[0], num_classes, blocks=self.blocks,
                                activation=self.activation, beta=self.beta, seed=seed, name=self.name)
        return mlp([input_dim, *self.hidden, num_classes], activation=self.activation, beta=self.beta,
                   seed=seed, name=self.name)


@dataclass(frozen=True)
class TrainingSpec:
    epochs: int = 20
    lr: float = 0.05
    batch_size: int = 32


@dataclass(frozen=True)
class CorrelationSpec:
    """(c, p_relax) grid for the optimization attack; tau from a pilot PGD run unless given."""

    points: tuple = ({"p": 2.0, "c": [0, 2, 4, 6, 8, 10]},
                     {"p": 5.0, "c": [0, 2000, 4000, 6000, 8000, 10000]})
    step_size: float = 0.001
    loss: str = "margin"
    opt_steps: int = 1000
    tau: Optional[float] = None
    examples: int = 100

    def pairs(self) -> list:
        return [(float(pt["p"]), float(c)) for pt in self.points for c in pt["c"]]


@dataclass(frozen=True)
class LambdaSpec:
    values: tuple = (0.0, 0.5, 1.0, 2.0)
    steps: int = 100
    examples: int = 200


@dataclass(frozen=True)
class InteractionOnlySpec:
    lam: float = 1.0
    steps: int = 100
    examples: int = 300


@dataclass(frozen=True)
class PropositionSpec:
    steps: int = 10
    examples: int = 50
    hessian_examples: int = 3
    vr_sigma: float = 0.05


@dataclass(frozen=True)
class MeasureSpec:
    estimator: str = "eq4"  # "eq4" | "sampled" | "bruteforce"
    K: int = 32
    batchsize: int = 4
    seed: int = 0


@dataclass(frozen=True)
class ExperimentManifest:
    experiment: str
    seed: int
    dataset: DatasetSpec
    models: tuple
    training: TrainingSpec = TrainingSpec()
    attack: AttackConfig = AttackConfig(grid_L=4, batchsize=4)
    examples: int = 100
    grid_L: int = 4
    measure: MeasureSpec = MeasureSpec()
    correlation: CorrelationSpec = CorrelationSpec()
    lambda_sweep: LambdaSpec = LambdaSpec()
    interaction_only: InteractionOnlySpec = InteractionOnlySpec()
    propositions: PropositionSpec = PropositionSpec()
    heatmap_examples: int = 2
    report_sections: tuple = REPORT_SECTIONS
    out: str = "runs/default"
    tool_version: str = TOOL_VERSION

    # ------------------------------------------------------------------ parsing
    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentManifest":
        if not isinstance(d, dict):
            raise ConfigError("manifest: expected a JSON object")
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"{key}: unknown field")
        for key in ("experiment", "seed", "dataset", "models"):
            if key not in d:
                raise ConfigError(f"{key}: required field is missing")
        if not isinstance(d["seed"], int) or isinstance(d["seed"], bool):
            raise ConfigError("seed: must be an integer")
        models = d["models"]
        if not isinstance(models, list) or not models:
            raise ConfigError("models: expected a non-empty list")
        specs = []
        for k, m in enumerate(models):
            spec = _strict(ModelSpec, m, f"models[{k}]")
            spec.validate(f"models[{k}]")
            specs.append(spec)
        kw = dict(experiment=str(d["experiment"]), seed=d["seed"],
                  dataset=DatasetSpec.from_dict(d["dataset"]), models=tuple(specs))
        sub = {"training": TrainingSpec, "measure": MeasureSpec, "correlation": CorrelationSpec,
               "lambda_sweep": LambdaSpec, "interaction_only": InteractionOnlySpec,
               "propositions": PropositionSpec}
        for key, kind in sub.items():
            if key in d:
                kw[key] = _strict(kind, d[key], key)
        if "attack" in d:
            kw["attack"] = AttackConfig.from_dict(d["attack"], where="attack")
        for key in ("examples", "grid_L", "heatmap_examples", "out", "tool_version"):
            if key in d:
                kw[key] = d[key]
        if "report_sections" in d:
            kw["report_sections"] = tuple(d["report_sections"])
        if "correlation" in d and "points" in d["correlation"]:
            kw["correlation"] = replace(kw["correlation"], points=tuple(d["correlation"]["points"]))
        if "lambda_sweep" in d and "values" in d["lambda_sweep"]:
            kw["lambda_sweep"] = replace(kw["lambda_sweep"], values=tuple(d["lambda_sweep"]["values"]))
        return cls(**kw).validate()

    def validate(self) -> "ExperimentManifest":
        roles = [m.role for m in self.models]
        if roles.count("source") != 1:
            raise ConfigError("models: exactly one model must have role 'source'")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError("models: names must be unique")
        if self.examples < 1:
            raise ConfigError("examples: must be >= 1")
        side = min(self.dataset.height, self.dataset.width)
        if not 1 <= self.grid_L <= side:
            raise ConfigError(f"grid_L: {self.grid_L} does not fit a {self.dataset.height}x{self.dataset.width} raster")
        if self.measure.estimator not in ("eq4", "sampled", "bruteforce"):
            raise ConfigError("measure.estimator: must be 'eq4', 'sampled' or 'bruteforce'")
        for s in self.report_sections:
            if s not in REPORT_SECTIONS:
                raise ConfigError(f"report_sections: unknown section {s!r}")
        for k, pt in enumerate(self.correlation.points):
            if not isinstance(pt, dict) or set(pt) != {"p", "c"}:
                raise ConfigError(f"correlation.points[{k}]: expected {{'p': ..., 'c': [...]}}")
        self.attack.validate(self.dataset.dim)
        return self

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(raw)

    # ------------------------------------------------------------------ output
    def to_dict(self) -> dict:
        d = asdict(self)
        d["models"] = [asdict(m) for m in self.models]
        return json.loads(json.dumps(d))

    def digest(self) -> str:
        """sha256 of the canonical manifest, ignoring the output location."""
        d = self.to_dict()
        d.pop("out", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode("utf-8")).hexdigest()

    def with_env_seed(self, environ=None) -> "ExperimentManifest":
        env = os.environ if environ is None else environ
        if SEED_ENV not in env:
            return self
        try:
            return replace(self, seed=int(env[SEED_ENV]))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}: must be an integer, got {env[SEED_ENV]!r}") from exc

    # ------------------------------------------------------------------ seeded views
    def dataset_spec(self) -> DatasetSpec:
        return replace(self.dataset, seed=self.dataset.seed + self.seed)

    def attack_config(self, **changes) -> AttackConfig:
        cfg = self.attack.replace(seed=self.attack.seed + self.seed, grid_L=self.grid_L,
                                  height=self.dataset.height, width=self.dataset.width)
        return cfg.replace(**changes) if changes else cfg

    @property
    def source(self) -> ModelSpec:
        return next(m for m in self.models if m.role == "source")

    @property
    def targets(self) -> list:
        return [m for m in self.models if m.role == "target"]


def default_manifest(out: str = "runs/default") -> ExperimentManifest:
    """Toy setup: 10-class 8x8 blobs, one source MLP, three held-out targets of other shapes."""
    return ExperimentManifest(
        experiment="toy-default",
        seed=0,
        dataset=DatasetSpec(kind="blobs", num_classes=10, height=8, width=8, spread=0.45, seed=0,
                            n_train=2000, n_test=500),
        models=(
            ModelSpec("source-mlp", "source", "mlp", (64, 64), seed=0),
            ModelSpec("target-mlp-narrow", "target", "mlp", (48,), seed=1),
            ModelSpec("target-resmlp", "target", "residual", (48,), blocks=2, seed=2),
            ModelSpec("target-mlp-wide", "target", "mlp", (96, 96), seed=3),
        ),
        examples=300,
        out=out,
    ).validate()
