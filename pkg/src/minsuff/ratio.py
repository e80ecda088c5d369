"""Likelihood-ratio proportionality, induced partitions, and the canonical statistic."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

from .model import (
    Corpus,
    Model,
    ParamGrid,
    SpecError,
    Statistic,
    Vector,
    apply_statistic,
    log_density,
    statistic_values_equal,
)

__all__ = [
    "DEFAULT_TOL",
    "MixtureSpec",
    "Partition",
    "PartitionMismatch",
    "ProportionalityVerdict",
    "UnionFind",
    "canonical_statistic",
    "log_table",
    "proportional",
    "proportional_from_logs",
    "ratio_partition",
    "refines",
    "statistic_partition",
]

DEFAULT_TOL = 1e-9
NEG_INF = float("-inf")
POS_INF = float("inf")


class PartitionMismatch(ValueError):
    pass


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> bool:
        a, b = self.find(i), self.find(j)
        if a == b:
            return False
        if self.rank[a] < self.rank[b]:
            a, b = b, a
        elif self.rank[a] == self.rank[b]:
            self.rank[a] += 1
        self.parent[b] = a
        return True

    def groups(self) -> tuple[tuple[int, ...], ...]:
        blocks: dict[int, list[int]] = {}
        for i in range(len(self.parent)):
            blocks.setdefault(self.find(i), []).append(i)
        return tuple(sorted(tuple(b) for b in blocks.values()))


@dataclass(frozen=True)
class ProportionalityVerdict:
    """Outcome of the test ``y in D(x, grid)``."""

    in_D: bool
    h: float | None
    log_spread: float
    witness_theta: Vector | None = None
    zero_pattern_conflict: Vector | None = None

    def to_json(self) -> dict:
        return {
            "in_D": self.in_D,
            "h": self.h,
            "log_spread": self.log_spread,
            "witness_theta": self.witness_theta,
            "zero_pattern_conflict": self.zero_pattern_conflict,
        }


@dataclass(frozen=True)
class Partition:
    """Disjoint index blocks covering ``range(size)`` of a labelled corpus."""

    blocks: tuple[tuple[int, ...], ...]
    corpus_label: str
    ambiguous: bool = False

    def __post_init__(self):
        seen = sorted(i for b in self.blocks for i in b)
        if seen != list(range(len(seen))):
            raise ValueError("blocks must cover every index exactly once")

    @classmethod
    def from_blocks(cls, blocks, corpus_label: str, ambiguous: bool = False) -> Partition:
        norm = tuple(sorted(tuple(sorted(b)) for b in blocks if b))
        return cls(norm, corpus_label, ambiguous)

    @property
    def size(self) -> int:
        return sum(len(b) for b in self.blocks)

    def block_of(self, i: int) -> tuple[int, ...]:
        for b in self.blocks:
            if i in b:
                return b
        raise IndexError(i)

    def labelled(self, points: Sequence) -> list[list]:
        return [[points[i] for i in b] for b in self.blocks]

    def to_json(self, points: Sequence | None = None) -> dict:
        out = {"corpus": self.corpus_label, "blocks": [list(b) for b in self.blocks]}
        if points is not None:
            out["points"] = self.labelled(points)
        if self.ambiguous:
            out["ambiguous"] = True
        return out


def _workers() -> int:
    raw = os.environ.get("MINSUFF_THREADS")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise SpecError(f"MINSUFF_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise SpecError(f"MINSUFF_THREADS must be a positive integer, got {raw!r}")
    return n


def parallel_map(fn, items: Sequence, workers: int | None = None) -> list:
    """Order-preserving map, threaded when ``MINSUFF_THREADS`` allows it."""
    workers = _workers() if workers is None else workers
    if workers <= 1 or len(items) < 64:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def log_table(m: Model, grid: ParamGrid, points: Sequence[Sequence[float]]) -> list[list[float]]:
    """``table[k][j] = log f_{grid[j]}(points[k])``."""
    return parallel_map(lambda x: [log_density(m, theta, x) for theta in grid.points], list(points))


def proportional_from_logs(
    lx: Sequence[float], ly: Sequence[float], thetas: Sequence[Vector], tol: float
) -> ProportionalityVerdict:
    """Decide proportionality from precomputed log-densities over ``thetas``."""
    ratios: list[float] = []
    ratio_thetas: list[Vector] = []
    conflict = None
    blowup = None
    for a, b, theta in zip(lx, ly, thetas):
        zero_a, zero_b = a == NEG_INF, b == NEG_INF
        if zero_a != zero_b:
            if conflict is None:
                conflict = theta
            continue
        if zero_a:
            continue
        inf_a, inf_b = a == POS_INF, b == POS_INF
        if inf_a or inf_b:
            if inf_a != inf_b and blowup is None:
                blowup = theta
            continue
        ratios.append(b - a)
        ratio_thetas.append(theta)
    spread = max(ratios) - min(ratios) if ratios else 0.0
    if conflict is not None:
        return ProportionalityVerdict(False, None, spread, None, conflict)
    if blowup is not None:
        return ProportionalityVerdict(False, None, spread, blowup, None)
    if spread > tol:
        mean = math.fsum(ratios) / len(ratios)
        k = max(range(len(ratios)), key=lambda j: abs(ratios[j] - mean))
        return ProportionalityVerdict(False, None, spread, ratio_thetas[k], None)
    if not ratios:
        return ProportionalityVerdict(True, 1.0, 0.0)
    mean = math.fsum(ratios) / len(ratios)
    try:
        h = math.exp(mean)
    except OverflowError:
        h = POS_INF
    return ProportionalityVerdict(True, h, spread)


def proportional(
    m: Model, grid: ParamGrid, x: Sequence[float], y: Sequence[float], tol: float = DEFAULT_TOL
) -> ProportionalityVerdict:
    """Is ``f_theta(y) = h * f_theta(x)`` for one ``h in (0, inf)`` and every grid theta?

    Zero patterns must agree exactly; the finite log-ratios must have a spread
    of at most ``tol``.  ``h`` is the exponential of the mean log-ratio.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lx = [log_density(m, theta, x) for theta in grid.points]
    ly = [log_density(m, theta, y) for theta in grid.points]
    return proportional_from_logs(lx, ly, grid.points, tol)


def _pairs_in_order(n: int):
    return list(combinations(range(n), 2))


def ratio_partition(m: Model, grid: ParamGrid, corpus: Corpus, tol: float = DEFAULT_TOL) -> Partition:
    """Connected components of the ``in_D`` graph on the corpus."""
    table = log_table(m, grid, corpus.points)
    pairs = _pairs_in_order(len(corpus))
    linked = parallel_map(
        lambda ij: proportional_from_logs(table[ij[0]], table[ij[1]], grid.points, tol).in_D, pairs
    )
    uf = UnionFind(len(corpus))
    for (i, j), edge in zip(pairs, linked):
        if edge:
            uf.union(i, j)
    return Partition(uf.groups(), corpus.label)


def statistic_partition(s: Statistic, corpus: Corpus) -> Partition:
    """Group corpus points with equal statistic values.

    Closeness under a positive tolerance need not be transitive; in that case
    the transitive closure is used and ``ambiguous`` is set.
    """
    values = [apply_statistic(s, x) for x in corpus.points]
    n = len(values)
    close = [[False] * n for _ in range(n)]
    uf = UnionFind(n)
    for i, j in _pairs_in_order(n):
        if statistic_values_equal(values[i], values[j], s.equality_tolerance):
            close[i][j] = close[j][i] = True
            uf.union(i, j)
    ambiguous = False
    if s.equality_tolerance > 0:
        for c in range(n):
            near = [i for i in range(n) if close[c][i]]
            if any(not close[a][b] for a, b in combinations(near, 2)):
                ambiguous = True
                break
    return Partition(uf.groups(), corpus.label, ambiguous)


def refines(p: Partition, q: Partition) -> bool:
    """True iff every block of ``p`` lies inside a block of ``q``."""
    if p.corpus_label != q.corpus_label or p.size != q.size:
        raise PartitionMismatch(f"partitions of {p.corpus_label!r} and {q.corpus_label!r}")
    owner = {}
    for k, block in enumerate(q.blocks):
        for i in block:
            owner[i] = k
    return all(len({owner[i] for i in block}) == 1 for block in p.blocks)


@dataclass(frozen=True)
class MixtureSpec:
    """Weights of the dominating mixture ``sum_n w_n P_{theta_n}`` over a grid."""

    grid: ParamGrid
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.weights:
            raw = [2.0 ** -(k + 1) for k in range(len(self.grid))]
            total = math.fsum(raw)
            object.__setattr__(self, "weights", tuple(w / total for w in raw))
        if len(self.weights) != len(self.grid):
            raise SpecError("mixture needs one weight per grid point")
        if any(not w > 0 for w in self.weights):
            raise SpecError("mixture weights must be positive")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise SpecError("mixture weights must sum to 1")


def canonical_statistic(m: Model, mix: MixtureSpec, x: Sequence[float]) -> Vector:
    """``(f_{theta_n}(x) / f(x))_n`` with ``f`` the mixture density.

    When ``f(x) = 0`` every component density vanishes and the zero vector is
    returned.  An infinite component density also gives zeros for the
    affected coordinates, so ``+inf`` is never returned.
    """
    logs = [log_density(m, theta, x) for theta in mix.grid.points]
    if any(l == POS_INF for l in logs):
        return tuple(0.0 for _ in logs)
    terms = [math.log(w) + l for w, l in zip(mix.weights, logs) if l != NEG_INF]
    if not terms:
        return tuple(0.0 for _ in logs)
    top = max(terms)
    log_mix = top + math.log(math.fsum(math.exp(t - top) for t in terms))
    return tuple(0.0 if l == NEG_INF else math.exp(l - log_mix) for l in logs)
