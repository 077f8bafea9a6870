"""Self-check battery: Shapley axioms, the average-interaction identity, the
two interaction definitions, the quadratic interaction lemma, and gradient
checks. Each suite returns per-check diagnostics."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from interlab.attacks import interaction_objective
from interlab.game import (
    CoalitionGame,
    GridPartition,
    QuadraticGame,
    SamplingPlan,
    TableGame,
    interaction_alt_exact,
    interaction_exact,
    interaction_matrix,
    mean_interaction_eq4,
    pairwise_mean_bruteforce,
    shapley_all,
)
from interlab.nnengine import full_hessian, input_gradient, loss, mlp, residual_mlp


@dataclass
class Check:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    cases: int


@dataclass
class SuiteResult:
    suite: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, errors, tolerance: float) -> None:
        errors = np.asarray(errors, dtype=np.float64)
        worst = float(errors.max()) if errors.size else 0.0
        self.checks.append(Check(name, bool(errors.size) and worst < tolerance, worst, tolerance, int(errors.size)))

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "checks": [asdict(c) for c in self.checks]}


def _random_game(P: int, rng: np.random.Generator) -> TableGame:
    return TableGame(rng.standard_normal(2 ** P))


def suite_shapley(seed: int = 0, games: int = 30) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("shapley")
    eff, lin, dummy, sym = [], [], [], []
    for _ in range(games):
        P = int(rng.integers(2, 9))
        u, w = _random_game(P, rng), _random_game(P, rng)
        phi_u, phi_w = shapley_all(u), shapley_all(w)
        eff.append(abs(phi_u.sum() - (u.table[-1] - u.table[0])))
        a, b = rng.standard_normal(2)
        phi_mix = shapley_all(TableGame(a * u.table + b * w.table))
        lin.append(np.max(np.abs(phi_mix - (a * phi_u + b * phi_w))))
        # player d adds a fixed amount to every coalition it joins
        d = int(rng.integers(P))
        codes = np.arange(2 ** P)
        t = u.table.copy()
        t[(codes >> d) & 1 == 1] = t[(codes >> d) & 1 == 0] + 0.7
        dummy.append(abs(shapley_all(TableGame(t))[d] - 0.7))
        # symmetrize players 0 and 1 by averaging the table with its swap
        swap = (codes & ~3) | ((codes & 1) << 1) | ((codes >> 1) & 1)
        s = shapley_all(TableGame(0.5 * (u.table + u.table[swap])))
        sym.append(abs(s[0] - s[1]))
    res.add("efficiency", eff, 1e-10)
    res.add("linearity", lin, 1e-10)
    res.add("dummy", dummy, 1e-10)
    res.add("symmetry", sym, 1e-10)
    return res


def suite_eq4(seed: int = 0, games: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("eq4")
    errs = []
    for _ in range(games):
        game = _random_game(int(rng.integers(4, 13)), rng)
        errs.append(abs(mean_interaction_eq4(game).mean_interaction - pairwise_mean_bruteforce(game).mean_interaction))
    res.add("eq4-vs-bruteforce", errs, 1e-9)
    return res


def suite_definitions(seed: int = 0, games: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("definitions")
    errs = []
    for _ in range(games):
        P = int(rng.integers(2, 9))
        game = _random_game(P, rng)
        i, j = rng.choice(P, size=2, replace=False)
        errs.append(abs(interaction_exact(game, int(i), int(j)) - interaction_alt_exact(game, int(i), int(j))))
    res.add("merged-vs-conditional", errs, 1e-10)
    return res


def suite_quadratic(seed: int = 0, cases: int = 20) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("quadratic")
    quad = []
    for _ in range(cases):
        n = int(rng.integers(3, 8))
        A = rng.standard_normal((n, n))
        game = QuadraticGame(rng.standard_normal(n), A + A.T, rng.standard_normal(n))
        M = interaction_matrix(game)
        Q = np.outer(game.delta, game.delta) * game.hessian
        off = ~np.eye(n, dtype=bool)
        quad.append(np.max(np.abs(M[off] - Q[off])))
    res.add("quadratic-exact", quad, 1e-10)
    smooth = []
    for k in range(cases):
        n = 6
        model = mlp([n, 8, 3], beta=2.0, seed=seed + k)
        x = rng.uniform(0.3, 0.7, n)
        y = int(rng.integers(3))
        delta = 1e-3 * rng.standard_normal(n)
        H = full_hessian(model, x, y, "margin")
        M = interaction_matrix(CoalitionGame(model, x, delta, y))
        Q = np.outer(delta, delta) * H
        off = ~np.eye(n, dtype=bool)
        smooth.append(np.linalg.norm(M[off] - Q[off]) / np.linalg.norm(Q[off]))
    res.add("softplus-small-delta", smooth, 0.05)
    return res


def _central_diff(f: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def suite_gradients(seed: int = 0, cases: int = 20) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("gradients")
    lerr, ierr = [], []
    for k in range(cases):
        model = residual_mlp(16, 12, 4, seed=seed + k) if k % 2 else mlp([16, 12, 12, 4], seed=seed + k)
        x = rng.uniform(0.2, 0.8, 16)
        y = int(rng.integers(4))
        kind = "ce" if k % 4 < 2 else "margin"
        g = input_gradient(model, x, y, kind)
        lerr.append(_rel(g, _central_diff(lambda z: loss(model, z, y, kind), x, 1e-6)))
        cells = GridPartition(4, 4, 2).cells()
        masks = SamplingPlan(K=6, batchsize=2, seed=seed + k).draw(len(cells))
        delta = 0.2 * rng.standard_normal(16)
        _, gi = interaction_objective(model, x, y, delta, cells, masks)
        fd = _central_diff(lambda d: interaction_objective(model, x, y, d, cells, masks)[0], delta, 1e-6)
        ierr.append(_rel(gi, fd))
    res.add("loss-gradient", lerr, 1e-4)
    res.add("interaction-objective-gradient", ierr, 1e-3)
    return res


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "shapley": suite_shapley,
    "eq4": suite_eq4,
    "definitions": suite_definitions,
    "quadratic": suite_quadratic,
    "gradients": suite_gradients,
}


def run_suites(names=None, seed: int = 0) -> list:
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    return [SUITES[n](seed=seed) for n in names]
