"""Coalition games over perturbation units.

Coalitions are boolean masks over players (cells). ``values`` takes a
``(B, P)`` mask array and returns ``B`` utilities; everything downstream
(exact enumeration, sampled estimators) goes through that one call.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from interlab.errors import ConfigError, InvalidPairError, ShapeError
from interlab.nnengine.model import Model, forward_batch, margin_from_logits

_CHUNK = 4096


class Game:
    """A value function over subsets of ``n_players`` players."""

    n_players: int

    def values(self, masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, coalition) -> float:
        """Utility of one coalition given as a mask or an iterable of player indices."""
        return float(self.values(self.as_mask(coalition)[None, :])[0])

    def as_mask(self, coalition) -> np.ndarray:
        arr = np.asarray(coalition)
        if arr.dtype == bool:
            if arr.shape != (self.n_players,):
                raise ShapeError(f"mask must have length {self.n_players}")
            return arr
        mask = np.zeros(self.n_players, dtype=bool)
        idx = np.asarray(list(coalition), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_players):
            raise InvalidPairError(f"cell index out of range [0, {self.n_players}): {idx}")
        mask[idx] = True
        return mask


class TableGame(Game):
    """Game given by an explicit table of 2**P values indexed by subset bitmask.

    Bit k of the index is set when player k is in the coalition.
    """

    def __init__(self, table):
        table = np.asarray(table, dtype=np.float64)
        P = int(round(np.log2(table.size))) if table.size else -1
        if table.ndim != 1 or P < 0 or 2 ** P != table.size:
            raise ShapeError(f"table length {table.size} is not a power of two")
        self.table = table
        self.n_players = P

    def values(self, masks):
        masks = np.atleast_2d(masks)
        weights = 1 << np.arange(self.n_players, dtype=np.int64)
        return self.table[masks.astype(np.int64) @ weights]

    def to_json(self) -> str:
        return json.dumps({"P": self.n_players, "values": self.table.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "TableGame":
        doc = json.loads(text)
        game = cls(doc["values"])
        if game.n_players != doc["P"]:
            raise ShapeError(f"table holds {game.n_players} players but P={doc['P']}")
        return game

    @classmethod
    def from_game(cls, game: Game) -> "TableGame":
        from interlab.game.exact import all_values

        return cls(all_values(game))


class FunctionGame(Game):
    """Wraps ``fn(mask) -> float``; handy for hand-written toy games."""

    def __init__(self, fn: Callable[[np.ndarray], float], n_players: int):
        self.fn = fn
        self.n_players = n_players

    def values(self, masks):
        return np.array([self.fn(m) for m in np.atleast_2d(masks)], dtype=np.float64)


class _MaskedPerturbationGame(Game):
    """Shared plumbing: cells map players to input coordinates of ``delta``."""

    def __init__(self, delta, cells: Optional[Sequence] = None):
        self.delta = np.asarray(delta, dtype=np.float64)
        n = self.delta.size
        if cells is None:
            cells = [np.array([k]) for k in range(n)]
        self.cells = [np.asarray(c, dtype=np.int64) for c in cells]
        check_partition(self.cells, n)
        self.n_players = len(self.cells)
        self._indicator = np.zeros((self.n_players, n))
        for k, c in enumerate(self.cells):
            self._indicator[k, c] = 1.0

    def pixel_masks(self, masks) -> np.ndarray:
        return np.atleast_2d(masks).astype(np.float64) @ self._indicator


class CoalitionGame(_MaskedPerturbationGame):
    """v(S) = max_{k != y} h_k(x + delta^(S)) - h_y(x + delta^(S)).

    ``delta^(S)`` keeps ``delta`` on the pixels of cells in S and is zero
    elsewhere, so v(empty) only depends on the clean input.
    """

    def __init__(self, model: Model, x, delta, y: int, cells: Optional[Sequence] = None):
        super().__init__(delta, cells)
        self.model = model
        self.x = np.asarray(x, dtype=np.float64)
        self.y = int(y)
        if self.x.shape != self.delta.shape or self.x.size != model.input_dim:
            raise ShapeError("x, delta and the model input size must agree")

    def values(self, masks):
        masks = np.atleast_2d(masks)
        out = np.empty(masks.shape[0])
        for start in range(0, masks.shape[0], _CHUNK):
            pm = self.pixel_masks(masks[start:start + _CHUNK])
            logits = forward_batch(self.model, self.x + pm * self.delta)
            out[start:start + _CHUNK] = margin_from_logits(logits, self.y)
        return out


class QuadraticGame(_MaskedPerturbationGame):
    """v(S) = const + g.d + 0.5 d.H.d with d = delta^(S); an exact second-order toy."""

    def __init__(self, grad, hessian, delta, cells: Optional[Sequence] = None, const: float = 0.0):
        super().__init__(delta, cells)
        self.grad = np.asarray(grad, dtype=np.float64)
        self.hessian = np.asarray(hessian, dtype=np.float64)
        self.const = float(const)

    def values(self, masks):
        d = self.pixel_masks(masks) * self.delta
        return self.const + d @ self.grad + 0.5 * np.einsum("bi,ij,bj->b", d, self.hessian, d)


def check_partition(cells: Sequence[np.ndarray], n: int):
    if not cells:
        raise ShapeError("a game needs at least one player")
    seen = np.zeros(n, dtype=np.int64)
    for c in cells:
        if c.size == 0:
            raise ShapeError("cells must be nonempty")
        if c.min() < 0 or c.max() >= n:
            raise ShapeError(f"cell covers pixels outside [0, {n})")
        np.add.at(seen, c, 1)
    if not np.all(seen == 1):
        raise ShapeError("cells must be disjoint and cover every pixel exactly once")


@dataclass(frozen=True)
class GridPartition:
    """L x L grid over a height x width raster (row-major pixel order).

    When a side is not divisible by L the leading rows/columns of cells get
    the extra pixel. Cell (p, q) has player index p * L + q.
    """

    height: int
    width: int
    L: int = 16

    def __post_init__(self):
        if not (1 <= self.L <= min(self.height, self.width)):
            raise ConfigError(f"grid L={self.L} does not fit a {self.height}x{self.width} raster")

    @property
    def n_cells(self) -> int:
        return self.L * self.L

    def cells(self) -> list[np.ndarray]:
        rows = np.array_split(np.arange(self.height), self.L)
        cols = np.array_split(np.arange(self.width), self.L)
        return [(r[:, None] * self.width + c[None, :]).ravel() for r in rows for c in cols]

    def cell_index(self, p: int, q: int) -> int:
        return p * self.L + q

    def neighbors(self, k: int) -> list[int]:
        p, q = divmod(k, self.L)
        out = []
        for dp, dq in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            a, b = p + dp, q + dq
            if 0 <= a < self.L and 0 <= b < self.L:
                out.append(a * self.L + b)
        return out


@dataclass(frozen=True)
class SamplingPlan:
    """K sampled batches of ``batchsize`` players each.

    With ``disjoint=True`` batches are consecutive chunks of one random
    permutation (reshuffled when exhausted) instead of independent draws.
    """

    K: int = 32
    batchsize: int = 32
    seed: int = 0
    disjoint: bool = False

    def validate(self, n_players: int):
        if self.K < 1:
            raise ConfigError("sampling plan needs K >= 1")
        if not 1 <= self.batchsize <= n_players:
            raise ConfigError(f"batchsize {self.batchsize} must lie in [1, {n_players}]")

    def draw(self, n_players: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """(K, P) boolean masks, one per sampled batch."""
        self.validate(n_players)
        rng = np.random.default_rng(self.seed) if rng is None else rng
        masks = np.zeros((self.K, n_players), dtype=bool)
        if self.disjoint:
            pool = np.empty(0, dtype=np.int64)
            for k in range(self.K):
                if pool.size < self.batchsize:
                    pool = np.concatenate([pool, rng.permutation(n_players)])
                masks[k, pool[:self.batchsize]] = True
                pool = pool[self.batchsize:]
        else:
            for k in range(self.K):
                masks[k, rng.choice(n_players, size=self.batchsize, replace=False)] = True
        return masks


@dataclass
class InteractionReport:
    mean_interaction: float
    estimator: str  # "exact-eq4" | "sampled" | "brute-force"
    normalized: bool  # True when the 1/(P-1) factor is applied
    num_players: int
    per_player_terms: Optional[list] = None
    std_error: Optional[float] = None
    plan: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def load_game_table(path) -> TableGame:
    return TableGame.from_json(Path(path).read_text())
