"""Train / attack / measure / report stages driven by an ExperimentManifest."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from interlab.analysis import (
    attack_all,
    correlation_sweep,
    heatmap_rows,
    interaction_heatmap,
    interaction_only_curve,
    lambda_sweep,
    loo_transferability,
    pilot_tau,
    proposition_suite,
    success_matrix,
    transfer_report,
    write_csv,
    write_json,
)
from interlab.attacks import AttackTrace
from interlab.errors import ConfigError, ConsistencyError, DependencyError
from interlab.game import (
    CoalitionGame,
    GridPartition,
    SamplingPlan,
    mean_interaction_eq4,
    mean_interaction_sampled,
    pairwise_mean_bruteforce,
)
from interlab.manifest import ExperimentManifest
from interlab.nnengine import Dataset, Model, accuracy, load_dataset, load_model, save_model, train

MODEL_SUFFIX = ".ilm"


def load_data(manifest: ExperimentManifest) -> Dataset:
    return load_dataset(manifest.dataset_spec())


def examples(manifest: ExperimentManifest, data: Dataset, count: Optional[int] = None):
    count = manifest.examples if count is None else count
    count = min(count, data.x_test.shape[0])
    return data.x_test[:count], data.y_test[:count].astype(np.int64)


def grid_of(manifest: ExperimentManifest) -> GridPartition:
    return GridPartition(manifest.dataset.height, manifest.dataset.width, manifest.grid_L)


# ---------------------------------------------------------------------- train

def train_zoo(manifest: ExperimentManifest, data: Dataset, jobs: int = 1) -> tuple[dict, dict]:
    """Returns ({name: model}, {name: {"train": acc, "test": acc}}) in manifest order."""
    from interlab.analysis import pmap

    tasks = [(spec, manifest, data) for spec in manifest.models]
    trained = pmap(_train_one, tasks, jobs)
    models = {m.name: m for m in trained}
    accs = {m.name: {"train": accuracy(m, data.x_train, data.y_train),
                     "test": accuracy(m, data.x_test, data.y_test)} for m in trained}
    return models, accs


def _train_one(args) -> Model:
    spec, manifest, data = args
    base = spec.build(data.x_train.shape[1], data.num_classes, manifest.seed)
    t = manifest.training
    return train(base, data.x_train, data.y_train, epochs=t.epochs, lr=t.lr,
                 seed=manifest.seed + spec.seed, batch_size=t.batch_size)


def model_path(out: Path, name: str) -> Path:
    return Path(out) / "models" / f"{name}{MODEL_SUFFIX}"


def save_zoo(models: dict, out: Path, digest: str) -> list:
    paths = []
    for name, m in models.items():
        p = model_path(out, name)
        p.parent.mkdir(parents=True, exist_ok=True)
        save_model(m, p, meta={"manifest_hash": digest})
        paths.append(p)
    return paths


def load_zoo(manifest: ExperimentManifest, out: Path, config_hint: str = "<manifest>") -> dict:
    missing = [m.name for m in manifest.models if not model_path(out, m.name).exists()]
    if missing:
        raise DependencyError(f"missing model files for {', '.join(missing)}; "
                              f"run `interlab train --config {config_hint}` first")
    return {m.name: load_model(model_path(out, m.name)) for m in manifest.models}


# ---------------------------------------------------------------------- attack

def trace_dir(out: Path, method: str) -> Path:
    return Path(out) / "traces" / method


def run_attacks(manifest: ExperimentManifest, source: Model, X, y, jobs: int = 1) -> list:
    return attack_all(source, X, y, manifest.attack_config(), jobs)


def save_traces(traces: list, directory: Path, digest: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, tr in enumerate(traces):
        tr.meta = dict(tr.meta, manifest_hash=digest, example=i)
        tr.save(directory / f"ex{i:05d}")


def load_traces(directory: Path) -> list:
    stems = sorted(p.with_suffix("") for p in Path(directory).glob("ex*.json"))
    return [AttackTrace.load(s) for s in stems]


# ---------------------------------------------------------------------- measure

def measure_traces(manifest: ExperimentManifest, source: Model, X, y, traces: list) -> dict:
    if len(traces) != X.shape[0]:
        raise ConsistencyError(f"{len(traces)} traces but {X.shape[0]} examples in the manifest")
    grid = grid_of(manifest)
    cells = grid.cells()
    spec = manifest.measure
    values, errors = [], []
    for i, tr in enumerate(traces):
        if tr.n != source.input_dim:
            raise ConsistencyError(f"trace {i} has n={tr.n} but model {source.name} expects {source.input_dim}")
        game = CoalitionGame(source, X[i], tr.final_delta, int(y[i]), cells)
        if spec.estimator == "eq4":
            rep = mean_interaction_eq4(game)
        elif spec.estimator == "bruteforce":
            if game.n_players > 12:
                raise ConfigError("measure.estimator: brute force is limited to 12 players")
            rep = pairwise_mean_bruteforce(game)
        else:
            rep = mean_interaction_sampled(game, SamplingPlan(spec.K, spec.batchsize, spec.seed + manifest.seed))
        values.append(rep.mean_interaction)
        errors.append(rep.std_error)
    return {"estimator": spec.estimator, "normalized": spec.estimator != "sampled",
            "num_players": len(cells), "per_example": values, "std_errors": errors,
            "mean_interaction": float(np.mean(values)), "source": source.name,
            "method": traces[0].method if traces else None}


# ---------------------------------------------------------------------- report

def report(manifest: ExperimentManifest, models: dict, data: Dataset, out: Path, digest: str,
           traces: Optional[list] = None, jobs: int = 1, sections=None) -> dict:
    """Write every requested report section under ``out/report``; returns a summary."""
    sections = manifest.report_sections if sections is None else sections
    rdir = Path(out) / "report"
    rdir.mkdir(parents=True, exist_ok=True)
    source = models[manifest.source.name]
    targets = [models[t.name] for t in manifest.targets]
    grid = grid_of(manifest)
    summary = {}
    tags = {"setup": "desk-scale toy models", "source": source.name, "targets": [t.name for t in targets]}

    if "loo" in sections:
        if traces is None:
            raise DependencyError("LOO tables need attack traces; run `interlab attack` first")
        X, y = examples(manifest, data, len(traces))
        loo = {}
        for t in targets:
            S = success_matrix(t, X, y, traces)
            rate, picks = loo_transferability(S)
            D = np.array([tr.deltas[k] for tr, k in zip(traces, picks)])
            rep = transfer_report(source.name, t, X, y, D, tags={"method": traces[0].method}, loo_steps=picks)
            rep.success_rate = rate
            loo[t.name] = rep.to_dict()
        write_json(rdir / "loo.json", {"tags": tags, "targets": loo}, digest)
        summary["loo"] = {k: v["success_rate"] for k, v in loo.items()}

    if "correlation" in sections:
        spec = manifest.correlation
        pairs = spec.pairs()
        if len(pairs) < 3:
            raise ConfigError("correlation.points: the sweep needs at least 3 (c, p) points")
        X, y = examples(manifest, data, spec.examples)
        tau = spec.tau if spec.tau is not None else pilot_tau(source, X, y, manifest.attack_config(method="pgd"), jobs)
        base = manifest.attack_config(method="opt", loss=spec.loss, step_size=spec.step_size,
                                      opt_steps=spec.opt_steps, tau=tau)
        sweep = correlation_sweep(source, targets, X, y, [], [], tau, grid, base, jobs, pairs=pairs)
        write_json(rdir / "correlation.json", {"tags": tags, "sweep": sweep.to_dict()}, digest)
        write_csv(rdir / "fig1.csv", ["target", "p_relax", "c", "mean_interaction", "mean_transfer_utility"],
                  sweep.csv_rows(), digest)
        summary["correlation"] = {k: v.r for k, v in sweep.correlations.items()}

    if "lambda" in sections:
        spec = manifest.lambda_sweep
        X, y = examples(manifest, data, spec.examples)
        lam = lambda_sweep(source, targets, X, y, spec.values, grid,
                           manifest.attack_config(method="ir", steps=spec.steps), jobs)
        write_json(rdir / "lambda.json", {"tags": tags, "sweep": lam.to_dict()}, digest)
        write_csv(rdir / "fig3a.csv", ["target", "lambda", "loo_rate", "final_rate", "mean_interaction"],
                  lam.csv_rows(), digest)
        summary["lambda"] = lam.to_dict()

    if "interaction_only" in sections:
        spec = manifest.interaction_only
        X, y = examples(manifest, data, spec.examples)
        curve = interaction_only_curve(source, targets, X, y,
                                       manifest.attack_config(method="interaction-only", lam=spec.lam,
                                                              steps=spec.steps), jobs)
        write_json(rdir / "interaction_only.json", {"tags": tags, "curve": curve.to_dict()}, digest)
        write_csv(rdir / "fig3b.csv", ["target", "epoch", "success_rate"], curve.csv_rows(), digest)
        summary["interaction_only"] = {"loo": curve.loo_rate, "noise": curve.noise_rate}

    if "propositions" in sections:
        spec = manifest.propositions
        X, y = examples(manifest, data, spec.examples)
        cfg = manifest.attack_config(method="pgd", steps=spec.steps, vr_sigma=spec.vr_sigma)
        prop = proposition_suite([source, *targets], X, y, cfg, grid, spec.hessian_examples, jobs)
        write_json(rdir / "propositions.json", {"tags": tags, "suite": prop.to_dict()}, digest)
        summary["propositions"] = {t.name: t.verdict for t in prop.trends}

    if "heatmap" in sections:
        if traces is None:
            raise DependencyError("heatmaps need attack traces; run `interlab attack` first")
        X, y = examples(manifest, data, len(traces))
        for i in range(min(manifest.heatmap_examples, len(traces))):
            H = interaction_heatmap(source, X[i], int(y[i]), traces[i].final_delta, grid, seed=manifest.seed)
            write_csv(rdir / f"heatmap_ex{i:05d}.csv", ["row", "col", "value"], heatmap_rows(H), digest)
        summary["heatmap"] = min(manifest.heatmap_examples, len(traces))
    return summary

