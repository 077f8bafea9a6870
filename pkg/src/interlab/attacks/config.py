"""Attack configuration and the per-run trace it produces."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from interlab.errors import ConfigError, MalformedFileError

METHODS = ("single", "pgd", "mi", "vr", "ir", "opt", "interaction-only", "noise")
TRACE_MAGIC = b"ILTRACE\x00"


@dataclass(frozen=True)
class AttackConfig:
    """Hyper-parameters for every perturbation generator.

    ``epsilon=None`` resolves to 16/255 under L-inf and 16*sqrt(n)/255 under L2.
    ``step_rule="auto"`` takes sign steps under L-inf and unit-L2 steps under
    L2; ``"raw"`` adds ``step_size * gradient`` unchanged.
    """

    method: str = "pgd"
    norm: str = "inf"
    epsilon: Optional[float] = None
    step_size: float = 2 / 255
    steps: int = 100
    loss: str = "ce"
    step_rule: str = "auto"
    lam: float = 0.0
    mu_mode: str = "revised"
    mu: float = 1.0
    vr_sigma: float = 0.05
    vr_samples: int = 16
    c: float = 1.0
    p_relax: float = 2.0
    tau: Optional[float] = None
    opt_steps: int = 1000
    grid_L: int = 16
    height: Optional[int] = None
    width: Optional[int] = None
    K: int = 32
    batchsize: int = 32
    noise_sigma: float = 1.0
    seed: int = 0

    def resolved_epsilon(self, n: int) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return 16 / 255 if self.norm == "inf" else 16 * math.sqrt(n) / 255

    def raster(self, n: int) -> tuple[int, int]:
        if self.height is not None and self.width is not None:
            if self.height * self.width != n:
                raise ConfigError(f"height*width = {self.height * self.width} but input has {n} values")
            return self.height, self.width
        side = math.isqrt(n)
        if side * side != n:
            raise ConfigError("height/width are required for non-square inputs")
        return side, side

    def validate(self, n: Optional[int] = None) -> "AttackConfig":
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown attack {self.method!r}")
        if self.norm not in ("inf", "2"):
            raise ConfigError(f"norm: must be 'inf' or '2', got {self.norm!r}")
        if self.loss not in ("ce", "margin"):
            raise ConfigError(f"loss: must be 'ce' or 'margin', got {self.loss!r}")
        if self.step_rule not in ("auto", "raw"):
            raise ConfigError(f"step_rule: must be 'auto' or 'raw', got {self.step_rule!r}")
        if self.mu_mode not in ("revised", "fixed"):
            raise ConfigError(f"mu_mode: must be 'revised' or 'fixed', got {self.mu_mode!r}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon: must be positive")
        if not self.step_size > 0:
            raise ConfigError("step_size: must be positive")
        if self.steps < 1:
            raise ConfigError("steps: must be >= 1")
        if self.lam < 0:
            raise ConfigError("lam: interaction weight must be >= 0")
        if self.method == "interaction-only" and not self.lam > 0:
            raise ConfigError("lam: the interaction-only attack needs lam > 0")
        if self.method == "vr" and (self.vr_samples < 1 or not self.vr_sigma > 0):
            raise ConfigError("vr_samples must be >= 1 and vr_sigma > 0")
        if self.method == "opt":
            if self.c < 0:
                raise ConfigError("c: must be >= 0")
            if self.tau is None or not self.tau > 0:
                raise ConfigError("tau: the optimization attack needs a positive stopping norm")
            if self.p_relax < 1:
                raise ConfigError("p_relax: must be >= 1")
        if self.K < 1 or self.batchsize < 1:
            raise ConfigError("K and batchsize must be >= 1")
        if n is not None and self.method in ("ir", "interaction-only"):
            h, w = self.raster(n)
            if not 1 <= self.grid_L <= min(h, w):
                raise ConfigError(f"grid_L: {self.grid_L} cells per side do not fit a {h}x{w} raster")
            if self.batchsize > self.grid_L ** 2:
                raise ConfigError(f"batchsize: {self.batchsize} exceeds the {self.grid_L ** 2} grid cells")
        return self

    def replace(self, **changes) -> "AttackConfig":
        d = asdict(self)
        d.update(changes)
        return AttackConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict, where: str = "attack") -> "AttackConfig":
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"{where}.{key}: unknown field")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class AttackTrace:
    """Stored perturbations delta^t (row k is step ``step_indices[k]``; row 0 is delta = 0)."""

    method: str
    step_indices: list
    deltas: np.ndarray
    losses: list
    final_delta: np.ndarray
    success: bool
    interaction_losses: Optional[list] = None
    reached_tau: Optional[bool] = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.final_delta.size

    def metadata(self) -> dict:
        return {"method": self.method, "step_indices": list(self.step_indices), "losses": list(self.losses),
                "interaction_losses": self.interaction_losses, "success": bool(self.success),
                "reached_tau": self.reached_tau, "n": self.n, "meta": self.meta}

    def save(self, stem) -> None:
        """Write ``<stem>.json`` (metadata) and ``<stem>.bin`` (stored deltas, final delta last)."""
        stem = Path(stem)
        stem.with_suffix(".json").write_text(json.dumps(self.metadata(), sort_keys=True, indent=1))
        stack = np.vstack([self.deltas, self.final_delta[None, :]])
        write_delta_blob(stem.with_suffix(".bin"), stack)

    @classmethod
    def load(cls, stem) -> "AttackTrace":
        stem = Path(stem)
        meta = json.loads(stem.with_suffix(".json").read_text())
        stack = read_delta_blob(stem.with_suffix(".bin"))
        if stack.shape[1] != meta["n"] or stack.shape[0] != len(meta["step_indices"]) + 1:
            raise MalformedFileError(f"{stem}: blob does not match its metadata")
        return cls(meta["method"], meta["step_indices"], stack[:-1], meta["losses"], stack[-1],
                   meta["success"], meta["interaction_losses"], meta["reached_tau"], meta["meta"])


def write_delta_blob(path, stack: np.ndarray) -> None:
    stack = np.ascontiguousarray(stack, dtype="<f8")
    count, n = stack.shape
    Path(path).write_bytes(TRACE_MAGIC + struct.pack("<II", n, count) + stack.tobytes())


def read_delta_blob(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(TRACE_MAGIC):
        raise MalformedFileError(f"{path}: not a trace blob")
    head = len(TRACE_MAGIC) + 8
    if len(raw) < head:
        raise MalformedFileError(f"{path}: truncated header")
    n, count = struct.unpack("<II", raw[len(TRACE_MAGIC):head])
    if len(raw) - head != 8 * n * count:
        raise MalformedFileError(f"{path}: expected {count}x{n} floats")
    return np.frombuffer(raw, dtype="<f8", offset=head).astype(np.float64).reshape(count, n)
