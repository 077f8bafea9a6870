"""Experiment drivers: correlation sweep, lambda sweep, interaction-only curve, proposition trends.

Work is split into per-configuration or per-example tasks that run through
``pmap``; results come back in submission order, so reports do not depend
on the number of workers.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np

from interlab.analysis.stats import Correlation, PairedTrend, histogram, paired_trend, pearson
from interlab.analysis.transfer import loo_transferability, success_flags, success_matrix, transfer_utilities
from interlab.attacks import AttackConfig, noise_baseline, run_attack
from interlab.errors import ConfigError, UnsupportedActivationError
from interlab.game import CoalitionGame, GridPartition, mean_interaction_eq4, neighbor_interactions
from interlab.nnengine import Model, full_hessian, input_gradient


def pmap(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map over a process pool; ``jobs <= 1`` stays in-process."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def match_magnitude(delta, reference) -> np.ndarray:
    """Rescale ``delta`` to the L2 norm of ``reference`` (zero stays zero)."""
    delta = np.asarray(delta, dtype=np.float64)
    size = np.linalg.norm(delta)
    if size == 0:
        return delta.copy()
    return delta * (np.linalg.norm(reference) / size)


def grid_interaction(model: Model, x, y: int, delta, grid: GridPartition) -> float:
    """Average pairwise interaction between grid cells, exact via the 2P + 2 identity."""
    return mean_interaction_eq4(CoalitionGame(model, x, delta, y, grid.cells())).mean_interaction


def grid_interactions(model: Model, X, y, D, grid: GridPartition) -> np.ndarray:
    return np.array([grid_interaction(model, x, int(t), d, grid) for x, t, d in zip(X, y, D)])


def interaction_heatmap(model: Model, x, y: int, delta, grid: GridPartition, samples: int = 100,
                        seed: int = 0) -> np.ndarray:
    """Per-cell mean interaction with adjacent cells, shaped (L, L)."""
    game = CoalitionGame(model, x, delta, y, grid.cells())
    return neighbor_interactions(game, grid, samples=samples, seed=seed)


def heatmap_rows(matrix) -> list:
    matrix = np.asarray(matrix)
    return [(r, c, float(matrix[r, c])) for r in range(matrix.shape[0]) for c in range(matrix.shape[1])]


def _attack_examples(args) -> list:
    model, X, y, cfg = args
    return [run_attack(model, x, int(t), cfg.replace(seed=cfg.seed + i)) for i, (x, t) in enumerate(zip(X, y))]


def attack_all(model: Model, X, y, cfg: AttackConfig, jobs: int = 1) -> list:
    """Attack every example; example i uses seed ``cfg.seed + i``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    cfg.validate(X.shape[1])
    chunks = np.array_split(np.arange(X.shape[0]), max(1, min(jobs, X.shape[0])))
    tasks = [(model, X[idx], np.asarray(y)[idx], cfg.replace(seed=cfg.seed + int(idx[0]) if idx.size else cfg.seed))
             for idx in chunks if idx.size]
    return [tr for part in pmap(_attack_examples, tasks, jobs) for tr in part]


def pilot_tau(source: Model, X, y, cfg: AttackConfig = AttackConfig(), jobs: int = 1) -> float:
    """Median L2 size of PGD perturbations at the configured budget."""
    traces = attack_all(source, X, y, cfg.replace(method="pgd"), jobs)
    return float(np.median([np.linalg.norm(t.final_delta) for t in traces]))


# correlation sweep ----------------------------------------------------------------

@dataclass
class CorrelationPoint:
    c: float
    p_relax: float
    mean_interaction: float
    mean_transfer_utility: dict  # target name -> mean over the kept examples
    reached_fraction: float


@dataclass
class CorrelationSweep:
    points: list
    correlations: dict  # target name -> Correlation
    kept_examples: list
    tau: float
    source: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["correlations"] = {k: v.to_dict() for k, v in self.correlations.items()}
        return d

    def csv_rows(self) -> list:
        return [(t, pt.p_relax, pt.c, pt.mean_interaction, pt.mean_transfer_utility[t])
                for pt in self.points for t in sorted(pt.mean_transfer_utility)]


def correlation_sweep(source: Model, targets: Sequence[Model], X, y, c_values, p_values, tau: float,
                      grid: GridPartition, base: AttackConfig = AttackConfig(method="opt", loss="margin"),
                      jobs: int = 1, pairs: Optional[Sequence] = None) -> CorrelationSweep:
    """Optimization attacks over a (c, p) grid, each stopped at ||delta||_2 = tau.

    ``pairs`` (a list of (p, c)) replaces the product of ``p_values`` and
    ``c_values`` when the c grid differs per p. Means are taken over the
    examples that reach tau under every setting, so all points share one
    example set.
    """
    if pairs is None:
        pairs = product(p_values, c_values)
    grid_pts = [(float(p), float(c)) for p, c in pairs]
    if len(grid_pts) < 3:
        raise ConfigError("sweep: needs at least 3 (c, p_relax) points")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    cfgs = [base.replace(method="opt", c=c, p_relax=p, tau=tau) for p, c in grid_pts]
    for cfg in cfgs:
        cfg.validate(X.shape[1])
    runs = pmap(_attack_examples, [(source, X, y, cfg) for cfg in cfgs], jobs)
    reached = np.array([[bool(t.reached_tau) for t in run] for run in runs])
    keep = np.flatnonzero(reached.all(axis=0))
    points = []
    for (p, c), run in zip(grid_pts, runs):
        D = np.array([run[i].final_delta for i in keep]).reshape(len(keep), X.shape[1])
        inter = float(grid_interactions(source, X[keep], y[keep], D, grid).mean()) if keep.size else float("nan")
        tu = {t.name: float(transfer_utilities(t, X[keep], y[keep], D).mean()) if keep.size else float("nan")
              for t in targets}
        points.append(CorrelationPoint(c, p, inter, tu, float(reached[len(points)].mean())))
    corr = {}
    for t in targets:
        if keep.size:
            corr[t.name] = pearson([pt.mean_interaction for pt in points],
                                   [pt.mean_transfer_utility[t.name] for pt in points])
        else:
            corr[t.name] = Correlation(None, False, len(points))
    return CorrelationSweep(points, corr, keep.tolist(), float(tau), source.name)


# lambda sweep ---------------------------------------------------------------------

@dataclass
class LambdaSweep:
    rows: list  # dicts: lam, target, loo_rate, final_rate
    mean_interaction: dict  # lam -> mean grid interaction of the final delta on the source
    source: str

    def to_dict(self) -> dict:
        return {"rows": self.rows, "mean_interaction": {str(k): v for k, v in self.mean_interaction.items()},
                "source": self.source}

    def rate(self, lam: float, target: str, key: str = "loo_rate") -> float:
        return next(r[key] for r in self.rows if r["lam"] == lam and r["target"] == target)

    def csv_rows(self) -> list:
        return [(r["target"], r["lam"], r["loo_rate"], r["final_rate"], self.mean_interaction[r["lam"]])
                for r in self.rows]


def lambda_sweep(source: Model, targets: Sequence[Model], X, y, lambdas, grid: GridPartition,
                 base: AttackConfig = AttackConfig(method="ir"), jobs: int = 1) -> LambdaSweep:
    lambdas = [float(v) for v in lambdas]
    if 0.0 not in lambdas:
        raise ConfigError("lambdas: must include 0 (the PGD baseline)")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    rows, inter = [], {}
    for lam in lambdas:
        traces = attack_all(source, X, y, base.replace(method="ir", lam=lam), jobs)
        final = np.array([t.final_delta for t in traces])
        inter[lam] = float(grid_interactions(source, X, y, final, grid).mean())
        for t in targets:
            S = success_matrix(t, X, y, traces)
            rate, _ = loo_transferability(S)
            rows.append({"lam": lam, "target": t.name, "loo_rate": rate, "final_rate": float(S[:, -1].mean())})
    return LambdaSweep(rows, inter, source.name)


# interaction-only curve -----------------------------------------------------------

@dataclass
class InteractionOnlyCurve:
    steps: list
    curves: dict  # target -> per-step success rate
    loo_rate: dict  # target -> LOO transferability
    noise_rate: dict  # target -> success rate of the noise baseline
    clean_error: dict
    source: str

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_rows(self) -> list:
        out = []
        for t in sorted(self.curves):
            out += [(t, s, r) for s, r in zip(self.steps, self.curves[t])]
            out.append((t, "noise", self.noise_rate[t]))
        return out

    def beats_noise(self) -> bool:
        """Mean LOO transferability over targets at least the mean noise rate."""
        return float(np.mean(list(self.loo_rate.values()))) >= float(np.mean(list(self.noise_rate.values())))


def interaction_only_curve(source: Model, targets: Sequence[Model], X, y, cfg: AttackConfig,
                           jobs: int = 1) -> InteractionOnlyCurve:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    cfg = cfg.replace(method="interaction-only", lam=cfg.lam if cfg.lam > 0 else 1.0)
    traces = attack_all(source, X, y, cfg, jobs)
    noise = np.array([noise_baseline(x, cfg.replace(seed=cfg.seed + i)) for i, x in enumerate(X)])
    curves, loo, noise_rate, clean = {}, {}, {}, {}
    for t in targets:
        S = success_matrix(t, X, y, traces)
        curves[t.name] = S.mean(axis=0).tolist()
        loo[t.name], _ = loo_transferability(S)
        noise_rate[t.name] = float(success_flags(t, X, y, noise).mean())
        clean[t.name] = float(success_flags(t, X, y, np.zeros_like(X)).mean())
    return InteractionOnlyCurve(list(traces[0].step_indices), curves, loo, noise_rate, clean, source.name)


# proposition trends ---------------------------------------------------------------

def multi_step_leading_term(g, H, alpha: float, m: int) -> float:
    """Leading term of E_{a != b}[I_ab(multi) - I_ab(single)] for a quadratic loss:
    alpha^3 (m-1) m^2 / 2 * mean_{a != b} [g_a H_ab (H g)_b + g_b H_ab (H g)_a].
    """
    g = np.asarray(g, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    Hg = H @ g
    U = (g[:, None] * H * Hg[None, :]) + (H * g[None, :] * Hg[:, None])
    n = g.size
    off = ~np.eye(n, dtype=bool)
    return float(alpha ** 3 * (m - 1) * m ** 2 / 2 * U[off].mean())


def _proposition_example(args) -> dict:
    model, x, y, cfg, grid, seed = args
    base = cfg.replace(seed=seed)
    multi = run_attack(model, x, y, base.replace(method="pgd")).final_delta
    single = run_attack(model, x, y, base.replace(method="single")).final_delta
    gauss = np.random.default_rng([seed, 2]).standard_normal(x.size)
    vr = run_attack(model, x, y, base.replace(method="vr")).final_delta
    mi = run_attack(model, x, y, base.replace(method="mi", mu_mode="revised")).final_delta

    def I(d):
        return grid_interaction(model, x, y, d, grid)

    i_multi = I(multi)
    return {
        "multi": i_multi,
        "single": I(match_magnitude(single, multi)),
        "gaussian": I(match_magnitude(gauss, multi)),
        "vr": I(match_magnitude(vr, multi)),
        "mi": I(match_magnitude(mi, multi)),
    }


def _hessian_example(args) -> tuple[np.ndarray, np.ndarray]:
    model, x, y, loss = args
    H = full_hessian(model, x, y, loss)
    g = input_gradient(model, x, y, loss)
    off = ~np.eye(x.size, dtype=bool)
    denom = g @ H  # sum_a g_a H_ab
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = g * np.diag(H) / denom
    return np.abs(H[off]), ratio[np.isfinite(ratio)]


@dataclass
class PropositionReport:
    trends: list  # PairedTrend
    interactions: dict  # method -> per-pair values
    hessian_abs: Optional[dict] = None
    hessian_ratio: Optional[dict] = None
    models: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def trend(self, name: str) -> PairedTrend:
        return next(t for t in self.trends if t.name == name)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trends"] = [t.to_dict() for t in self.trends]
        return d


COMPARISONS = (
    ("multi-vs-single", "multi", "single", 1),
    ("multi-vs-gaussian", "multi", "gaussian", 1),
    ("vr-vs-pgd", "vr", "multi", -1),
    ("mi-vs-pgd", "mi", "multi", -1),
)


def proposition_suite(models: Sequence[Model], X, y, cfg: AttackConfig, grid: GridPartition,
                      hessian_examples: int = 5, jobs: int = 1, n_boot: int = 2000) -> PropositionReport:
    """Paired interaction comparisons over every (model, input) pair, all magnitude-matched to PGD."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    tasks = [(m, X[i], int(y[i]), cfg, grid, cfg.seed + i) for m in models for i in range(X.shape[0])]
    results = pmap(_proposition_example, tasks, jobs)
    values = {k: [r[k] for r in results] for k in ("multi", "single", "gaussian", "vr", "mi")}
    trends = [paired_trend(name, np.array(values[a]) - np.array(values[b]), sign, n_boot=n_boot)
              for name, a, b, sign in COMPARISONS]
    report = PropositionReport(trends, values, models=[m.name for m in models], config=cfg.to_dict())
    smooth = [m for m in models if all(a.kind == "softplus" for a in m.activations())]
    if hessian_examples > 0 and smooth:
        htasks = [(m, X[i], int(y[i]), cfg.loss) for m in smooth for i in range(min(hessian_examples, X.shape[0]))]
        parts = pmap(_hessian_example, htasks, jobs)
        report.hessian_abs = histogram(np.concatenate([p[0] for p in parts]))
        report.hessian_ratio = histogram(np.concatenate([p[1] for p in parts]))
    elif hessian_examples > 0:
        raise UnsupportedActivationError("Hessian measurements need softplus models")
    return report
