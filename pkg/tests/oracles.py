"""Independent brute-force references used by the test suite.

Nothing here imports the estimators it checks: Shapley values come from
averaging marginal contributions over every player ordering, and pairwise
interactions from the merged-player definition evaluated with that same
ordering average.
"""
import itertools
import math

import numpy as np


def shapley_by_orderings(v, players):
    """v: callable on frozenset. Returns {player: phi}."""
    players = list(players)
    phi = {p: 0.0 for p in players}
    count = 0
    for order in itertools.permutations(players):
        seen = frozenset()
        for p in order:
            phi[p] += v(seen | {p}) - v(seen)
            seen = seen | {p}
        count += 1
    return {p: phi[p] / count for p in players}


def interaction_by_orderings(v, n, i, j):
    """phi(S_ij | merged game) - phi(i | j removed) - phi(j | i removed)."""
    others = [k for k in range(n) if k not in (i, j)]
    merged = "ij"

    def v_merged(S):
        real = {k for k in S if k != merged}
        if merged in S:
            real |= {i, j}
        return v(frozenset(real))

    phi_pair = shapley_by_orderings(v_merged, others + [merged])[merged]
    phi_i = shapley_by_orderings(v, [k for k in range(n) if k != j])[i]
    phi_j = shapley_by_orderings(v, [k for k in range(n) if k != i])[j]
    return phi_pair - phi_i - phi_j


def table_to_setfn(table):
    def v(S):
        return float(table[sum(1 << k for k in S)])
    return v


def random_table(P, rng):
    return rng.standard_normal(2 ** P)


def softplus(z, beta):
    return np.log1p(np.exp(-np.abs(beta * z))) / beta + np.maximum(z, 0.0)


def straight_line_forward(W1, b1, W2, b2, beta, x):
    """Two-layer softplus net written out element by element."""
    hidden = []
    for r in range(W1.shape[0]):
        z = b1[r]
        for c in range(W1.shape[1]):
            z += W1[r, c] * x[c]
        hidden.append(float(softplus(np.array(z), beta)))
    out = []
    for r in range(W2.shape[0]):
        z = b2[r]
        for c in range(W2.shape[1]):
            z += W2[r, c] * hidden[c]
        out.append(z)
    return np.array(out)


def explicit_softmax_ce(logits, y):
    e = [math.exp(v) for v in logits]
    return -math.log(e[y] / sum(e))


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def pearson_two_pass(a, b):
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    sab = sum((p - ma) * (q - mb) for p, q in zip(a, b))
    saa = sum((p - ma) ** 2 for p in a)
    sbb = sum((q - mb) ** 2 for q in b)
    return sab / math.sqrt(saa * sbb)
