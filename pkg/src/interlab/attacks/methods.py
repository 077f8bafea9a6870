"""Perturbation generators.

All iterative attacks share one loop: compute an ascent direction at the
current feasible delta, take a step under the configured rule, project back
onto the epsilon ball and the [0, 1] box, record.
"""
from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from interlab.attacks.config import AttackConfig, AttackTrace
from interlab.game.core import GridPartition, SamplingPlan
from interlab.nnengine.model import (
    Model,
    _margin_dlogits,
    backward_batch,
    forward,
    forward_batch,
    input_gradient_batch,
    loss_batch,
    margin_from_logits,
)

MAX_STORED_STEPS = 100


def project(delta, norm: str, epsilon: float, x=None) -> np.ndarray:
    """Clamp to the epsilon ball (per coordinate for L-inf, radial rescale for L2),
    then keep x + delta inside [0, 1]."""
    delta = np.asarray(delta, dtype=np.float64)
    if norm == "inf":
        delta = np.clip(delta, -epsilon, epsilon)
    else:
        size = np.linalg.norm(delta)
        if size > epsilon:
            delta = delta * (epsilon / size)
    if x is not None:
        x = np.asarray(x, dtype=np.float64)
        delta = np.clip(x + delta, 0.0, 1.0) - x
    return delta


def _step(delta: np.ndarray, direction: np.ndarray, cfg: AttackConfig, scale: float) -> np.ndarray:
    if cfg.step_rule == "raw":
        return delta + scale * direction
    if cfg.norm == "inf":
        return delta + scale * np.sign(direction)
    size = np.linalg.norm(direction)
    if size == 0.0:
        return delta.copy()
    return delta + scale * (direction / size)


def _grad(model: Model, X: np.ndarray, y: int, kind: str) -> np.ndarray:
    return input_gradient_batch(model, X, np.full(X.shape[0], y), kind)[1]


def _stored_steps(m: int) -> set:
    if m <= MAX_STORED_STEPS:
        return set(range(m + 1))
    stride = math.ceil(m / MAX_STORED_STEPS)
    return set(range(0, m + 1, stride)) | {m}


def _source_success(model: Model, x, delta, y: int) -> bool:
    return bool(np.argmax(forward(model, x + delta)) != y)


def grid_cells(cfg: AttackConfig, n: int) -> list:
    h, w = cfg.raster(n)
    return GridPartition(h, w, cfg.grid_L).cells()


def interaction_objective(model: Model, x, y: int, delta, cells, batch_masks) -> tuple[float, np.ndarray]:
    """Sampled batch interaction and its gradient in delta.

    value = mean_k [v(all) - v(all minus B_k) - v(B_k) + v(empty)], with v the
    margin utility; v(empty) has no delta dependence.
    """
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    n = x.size
    indicator = np.zeros((len(cells), n))
    for k, c in enumerate(cells):
        indicator[k, c] = 1.0
    pix = batch_masks.astype(np.float64) @ indicator  # (K, n)
    K = pix.shape[0]
    rest = 1.0 - pix
    X = np.vstack([(x + delta)[None, :], x + rest * delta, x + pix * delta, x[None, :]])
    logits = forward_batch(model, X)
    labels = np.full(X.shape[0], y)
    v = margin_from_logits(logits, labels)
    value = float(np.mean(v[0] - v[1:1 + K] - v[1 + K:1 + 2 * K] + v[-1]))
    gx = backward_batch(model, X[:-1], _margin_dlogits(logits[:-1], labels[:-1]))
    # per-batch differences first so exactly cancelling terms stay exactly zero
    grad = np.mean(gx[0] - rest * gx[1:1 + K] - pix * gx[1 + K:1 + 2 * K], axis=0)
    return value, grad


def _iterate(model: Model, x, y: int, cfg: AttackConfig,
             direction: Callable[[int, np.ndarray], np.ndarray],
             interaction: Optional[Callable[[np.ndarray], float]] = None) -> AttackTrace:
    x = np.asarray(x, dtype=np.float64)
    eps = cfg.resolved_epsilon(x.size)
    keep = _stored_steps(cfg.steps)
    delta = np.zeros_like(x)
    steps, deltas, inter = [0], [delta.copy()], []
    if interaction is not None:
        inter.append(interaction(delta))
    for t in range(1, cfg.steps + 1):
        delta = project(_step(delta, direction(t, delta), cfg, cfg.step_size), cfg.norm, eps, x)
        if t in keep:
            steps.append(t)
            deltas.append(delta.copy())
            if interaction is not None:
                inter.append(interaction(delta))
    D = np.array(deltas)
    losses = loss_batch(model, x + D, np.full(len(D), y), cfg.loss).tolist()
    return AttackTrace(cfg.method, steps, D, losses, delta, _source_success(model, x, delta, y),
                       interaction_losses=inter if interaction is not None else None,
                       meta={"loss": cfg.loss, "epsilon": eps, "norm": cfg.norm, "seed": cfg.seed})


def attack_single(model: Model, x, y: int, cfg: AttackConfig) -> AttackTrace:
    """One gradient at the clean input with step size alpha * m."""
    x = np.asarray(x, dtype=np.float64)
    eps = cfg.resolved_epsilon(x.size)
    g = _grad(model, x[None, :], y, cfg.loss)[0]
    delta = project(_step(np.zeros_like(x), g, cfg, cfg.step_size * cfg.steps), cfg.norm, eps, x)
    D = np.vstack([np.zeros_like(x), delta])
    losses = loss_batch(model, x + D, np.full(2, y), cfg.loss).tolist()
    return AttackTrace("single", [0, 1], D, losses, delta, _source_success(model, x, delta, y),
                       meta={"loss": cfg.loss, "epsilon": eps, "norm": cfg.norm, "seed": cfg.seed})


def attack_pgd(model: Model, x, y: int, cfg: AttackConfig) -> AttackTrace:
    x = np.asarray(x, dtype=np.float64)
    return _iterate(model, x, y, cfg, lambda t, d: _grad(model, (x + d)[None, :], y, cfg.loss)[0])


def attack_mi(model: Model, x, y: int, cfg: AttackConfig) -> AttackTrace:
    """Momentum attack.

    revised: g^t = (t-1)/t g^{t-1} + 1/t grad (a running mean of gradients);
    fixed:   g^t = mu g^{t-1} + grad / ||grad||_1.
    """
    x = np.asarray(x, dtype=np.float64)
    acc = np.zeros_like(x)

    def direction(t, d):
        nonlocal acc
        g = _grad(model, (x + d)[None, :], y, cfg.loss)[0]
        if cfg.mu_mode == "revised":
            mu = (t - 1) / t
            acc = mu * acc + (1 - mu) * g
        else:
            l1 = np.abs(g).sum()
            acc = cfg.mu * acc + (g / l1 if l1 > 0 else g)
        return acc

    return _iterate(model, x, y, cfg, direction)


def smoothed_gradient(grad_fn: Callable[[np.ndarray], np.ndarray], point, sigma: float, samples: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo estimate of E_xi[grad(point + xi)], xi ~ N(0, sigma^2 I).

    ``grad_fn`` maps a (B, n) batch of points to (B, n) gradients.
    """
    point = np.asarray(point, dtype=np.float64)
    xi = sigma * rng.standard_normal((samples, point.size))
    return grad_fn(point + xi).mean(axis=0)


def attack_vr(model: Model, x, y: int, cfg: AttackConfig) -> AttackTrace:
    """Gradients averaged over Gaussian draws around the current point."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)

    def direction(t, d):
        return smoothed_gradient(lambda Z: _grad(model, Z, y, cfg.loss), x + d, cfg.vr_sigma,
                                 cfg.vr_samples, rng)

    return _iterate(model, x, y, cfg, direction)


def _interaction_tools(model: Model, x, y: int, cfg: AttackConfig):
    cells = grid_cells(cfg, x.size)
    plan = SamplingPlan(K=cfg.K, batchsize=cfg.batchsize, seed=cfg.seed)
    plan.validate(len(cells))
    rng = np.random.default_rng(cfg.seed)
    # a separate fixed sample is used only to log the objective per stored step
    log_masks = SamplingPlan(K=cfg.K, batchsize=cfg.batchsize, seed=cfg.seed + 1).draw(len(cells))

    def grad_fn(d):
        return interaction_objective(model, x, y, d, cells, plan.draw(len(cells), rng))[1]

    def log_fn(d):
        return interaction_objective(model, x, y, d, cells, log_masks)[0]

    return grad_fn, log_fn


def attack_ir(model: Model, x, y: int, cfg: AttackConfig) -> AttackTrace:
    """Ascend loss - lam * sampled interaction; batches are resampled every step."""
    x = np.asarray(x, dtype=np.float64)
    cfg.validate(x.size)
    grad_int, log_int = _interaction_tools(model, x, y, cfg)

    def direction(t, d):
        g = _grad(model, (x + d)[None, :], y, cfg.loss)[0]
        return g - cfg.lam * grad_int(d)

    return _iterate(model, x, y, cfg, direction, log_int)


def attack_interaction_only(model: Model, x, y: int, cfg: AttackConfig) -> AttackTrace:
    """Descend the sampled interaction alone, no classification loss.

    delta = 0 is a stationary point of the interaction (every coalition sees
    the same input), so the first gradient is taken at a seeded jitter drawn
    uniformly from [-step_size, step_size]^n. The update itself starts from 0.
    """
    x = np.asarray(x, dtype=np.float64)
    cfg.validate(x.size)
    grad_int, log_int = _interaction_tools(model, x, y, cfg)
    jitter = np.random.default_rng([cfg.seed, 1]).uniform(-cfg.step_size, cfg.step_size, x.size)

    def direction(t, d):
        if t == 1:
            d = np.clip(x + jitter, 0.0, 1.0) - x
        return -cfg.lam * grad_int(d)

    return _iterate(model, x, y, cfg, direction, log_int)


def attack_opt(model: Model, x, y: int, cfg: AttackConfig) -> AttackTrace:
    """Gradient descent on -loss + c * ||delta||_p^p inside the box.

    Stops at the first step with ||delta||_2 >= tau; that delta is scaled back
    onto the tau sphere. ``opt_steps`` bounds the run.
    """
    x = np.asarray(x, dtype=np.float64)
    cfg.validate()
    p = cfg.p_relax
    keep = _stored_steps(cfg.opt_steps)
    delta = np.zeros_like(x)
    steps, deltas = [0], [delta.copy()]
    reached = False
    t = 0
    for t in range(1, cfg.opt_steps + 1):
        g = _grad(model, (x + delta)[None, :], y, cfg.loss)[0]
        penalty = cfg.c * p * np.abs(delta) ** (p - 1) * np.sign(delta)
        delta = np.clip(x + delta + cfg.step_size * (g - penalty), 0.0, 1.0) - x
        size = np.linalg.norm(delta)
        if size >= cfg.tau:
            delta = delta * (cfg.tau / size)
            reached = True
        if t in keep or reached:
            steps.append(t)
            deltas.append(delta.copy())
        if reached:
            break
    D = np.array(deltas)
    losses = loss_batch(model, x + D, np.full(len(D), y), cfg.loss).tolist()
    return AttackTrace("opt", steps, D, losses, delta, _source_success(model, x, delta, y),
                       reached_tau=reached,
                       meta={"loss": cfg.loss, "c": cfg.c, "p_relax": p, "tau": cfg.tau,
                             "steps_taken": t, "seed": cfg.seed})


def noise_baseline(x, cfg: AttackConfig) -> np.ndarray:
    """epsilon * sign(xi), xi ~ N(0, noise_sigma^2 I); L2 budgets spread epsilon over all coordinates."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    xi = cfg.noise_sigma * rng.standard_normal(x.size)
    eps = cfg.resolved_epsilon(x.size)
    scale = eps if cfg.norm == "inf" else eps / math.sqrt(x.size)
    return np.clip(x + scale * np.sign(xi), 0.0, 1.0) - x


def attack_noise(model: Model, x, y: int, cfg: AttackConfig) -> AttackTrace:
    x = np.asarray(x, dtype=np.float64)
    delta = noise_baseline(x, cfg)
    D = np.vstack([np.zeros_like(x), delta])
    losses = loss_batch(model, x + D, np.full(2, y), cfg.loss).tolist()
    return AttackTrace("noise", [0, 1], D, losses, delta, _source_success(model, x, delta, y),
                       meta={"seed": cfg.seed})


_DISPATCH = {
    "single": attack_single, "pgd": attack_pgd, "mi": attack_mi, "vr": attack_vr, "ir": attack_ir,
    "opt": attack_opt, "interaction-only": attack_interaction_only, "noise": attack_noise,
}


def run_attack(model: Model, x, y: int, cfg: AttackConfig) -> AttackTrace:
    cfg.validate(np.asarray(x).size)
    return _DISPATCH[cfg.method](model, x, y, cfg)
