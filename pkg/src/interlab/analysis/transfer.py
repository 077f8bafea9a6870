"""Transfer utility, success flags and leave-one-out step selection."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from interlab.attacks import AttackTrace
from interlab.errors import ConsistencyError, ShapeError
from interlab.nnengine import Model, forward_batch, margin_from_logits


def _batch(model: Model, X, y, D):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    D = np.atleast_2d(np.asarray(D, dtype=np.float64))
    if X.shape != D.shape:
        raise ShapeError(f"inputs {X.shape} and perturbations {D.shape} differ")
    y = np.broadcast_to(np.asarray(y), (X.shape[0],))
    return X, y, D


def transfer_utilities(target: Model, X, y, D) -> np.ndarray:
    """Target margin at x + delta minus target margin at x, per row."""
    X, y, D = _batch(target, X, y, D)
    clean = margin_from_logits(forward_batch(target, X), y)
    adv = margin_from_logits(forward_batch(target, X + D), y)
    return adv - clean


def transfer_utility(target: Model, x, y: int, delta) -> float:
    return float(transfer_utilities(target, x, y, delta)[0])


def success_flags(target: Model, X, y, D) -> np.ndarray:
    """True where the target's argmax at x + delta differs from y."""
    X, y, D = _batch(target, X, y, D)
    return np.argmax(forward_batch(target, X + D), axis=1) != y


def success_matrix(target: Model, X, y, traces: Sequence[AttackTrace]) -> np.ndarray:
    """(N, T) flags: example i attacked with its stored delta at step k."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(traces) != X.shape[0]:
        raise ConsistencyError(f"{len(traces)} traces for {X.shape[0]} inputs")
    steps = traces[0].step_indices
    rows = []
    for i, tr in enumerate(traces):
        if list(tr.step_indices) != list(steps):
            raise ConsistencyError(f"trace {i} stores different steps from trace 0")
        if tr.n != X.shape[1]:
            raise ConsistencyError(f"trace {i} has n={tr.n} but inputs have n={X.shape[1]}")
        rows.append(success_flags(target, np.repeat(X[i:i + 1], len(steps), axis=0), y[i], tr.deltas))
    return np.array(rows)


def loo_select(success) -> np.ndarray:
    """For each example, the step with the best success rate over all *other* examples.

    Ties go to the smallest step index.
    """
    S = np.asarray(success, dtype=np.float64)
    if S.ndim != 2:
        raise ShapeError("success matrix must be (examples, steps)")
    n = S.shape[0]
    if n < 2:
        raise ValueError("leave-one-out selection needs at least two examples")
    others = (S.sum(axis=0)[None, :] - S) / (n - 1)
    return np.argmax(others, axis=1)  # argmax returns the first maximum


def loo_transferability(success) -> tuple[float, np.ndarray]:
    S = np.asarray(success, dtype=bool)
    picks = loo_select(S)
    return float(S[np.arange(S.shape[0]), picks].mean()), picks


@dataclass
class TransferRecord:
    source: str
    target: str
    clean_margin: float
    perturbed_margin: float
    transfer_utility: float
    success: bool


@dataclass
class TransferReport:
    records: list
    success_rate: float
    loo_steps: list = field(default_factory=list)
    tags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def transfer_report(source_name: str, target: Model, X, y, D, tags=None, loo_steps=None) -> TransferReport:
    X, y, D = _batch(target, X, y, D)
    clean = margin_from_logits(forward_batch(target, X), y)
    logits = forward_batch(target, X + D)
    adv = margin_from_logits(logits, y)
    hit = np.argmax(logits, axis=1) != y
    records = [TransferRecord(source_name, target.name, float(c), float(a), float(a - c), bool(s))
               for c, a, s in zip(clean, adv, hit)]
    steps = [] if loo_steps is None else [int(t) for t in loo_steps]
    return TransferReport(records, float(hit.mean()), steps, dict(tags or {}))
