"""Exact rational arithmetic on finite sample spaces.

No floating point is used anywhere in this module: masses are
:class:`fractions.Fraction` and every comparison is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterator, Mapping, NamedTuple, Sequence

from .model import SpecError, _load_doc, _validate
from .ratio import Partition, refines

__all__ = [
    "FiniteModel",
    "Finding",
    "LabelStatistic",
    "all_partitions",
    "demo_pfanzagl",
    "is_function_of",
    "is_sufficient_partition",
    "load_finite_model",
    "minimal_partition",
    "pfanzagl_model",
    "tv_distance",
    "tv_sequence",
]


class Finding(NamedTuple):
    holds: bool
    witness: dict | None = None


def _q(value) -> Fraction:
    if isinstance(value, float):
        raise SpecError(f"floats are not accepted in exact models: {value!r}")
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError, TypeError):
        raise SpecError(f"not a rational: {value!r}") from None


def qstr(q: Fraction) -> str:
    return str(q)


@dataclass(frozen=True)
class FiniteModel:
    """Probability table ``pmf[theta_index][point_index]`` over a finite space."""

    points: tuple[str, ...]
    probe: tuple[Fraction, ...]
    pmf: tuple[tuple[Fraction, ...], ...]
    label: str = "finite"

    def __post_init__(self):
        if not self.points:
            raise SpecError("a finite model needs at least one point")
        if len(set(self.points)) != len(self.points):
            raise SpecError("point labels must be distinct")
        if not self.probe or len(set(self.probe)) != len(self.probe):
            raise SpecError("probe parameters must be non-empty and distinct")
        if len(self.pmf) != len(self.probe):
            raise SpecError("pmf needs one row per probe parameter")
        for theta, row in zip(self.probe, self.pmf):
            if len(row) != len(self.points):
                raise SpecError("pmf rows need one entry per point")
            if any(p < 0 for p in row):
                raise SpecError(f"negative mass at theta={theta}")
            if sum(row, Fraction(0)) != 1:
                raise SpecError(f"masses at theta={theta} sum to {sum(row, Fraction(0))}, not 1")

    @classmethod
    def from_function(cls, points: Sequence[str], probe: Sequence, mass, label: str = "finite") -> FiniteModel:
        probe = tuple(_q(t) for t in probe)
        pmf = tuple(tuple(_q(mass(theta, x)) for x in points) for theta in probe)
        return cls(tuple(points), probe, pmf, label)

    def index_of_theta(self, theta) -> int:
        key = _q(theta)
        try:
            return self.probe.index(key)
        except ValueError:
            raise SpecError(f"unknown probe parameter {theta!r}") from None

    def column(self, i: int) -> tuple[Fraction, ...]:
        return tuple(row[i] for row in self.pmf)

    def to_json(self) -> dict:
        return {
            "points": list(self.points),
            "probe": [qstr(t) for t in self.probe],
            "pmf": [[qstr(p) for p in row] for row in self.pmf],
        }


FINITE_SCHEMA = {
    "type": "object",
    "required": ["points", "probe", "pmf"],
    "properties": {
        "label": {"type": "string"},
        "points": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "probe": {"type": "array", "items": {"type": ["string", "integer"]}, "minItems": 1},
        "pmf": {"type": "array", "items": {"type": "array", "items": {"type": ["string", "integer"]}}},
    },
}


def load_finite_model(document) -> FiniteModel:
    doc = _load_doc(document)
    _validate(doc, FINITE_SCHEMA, "finite model")
    return FiniteModel(
        tuple(doc["points"]),
        tuple(_q(t) for t in doc["probe"]),
        tuple(tuple(_q(p) for p in row) for row in doc["pmf"]),
        doc.get("label", "finite"),
    )


@dataclass(frozen=True)
class LabelStatistic:
    """A statistic with a finite label codomain, given point by point."""

    values: Mapping[str, str]
    name: str = "T"

    def __call__(self, point: str) -> str:
        return self.values[point]

    @classmethod
    def identity(cls, fm: FiniteModel) -> LabelStatistic:
        return cls({p: p for p in fm.points}, "identity")

    def check_total(self, fm: FiniteModel) -> None:
        missing = [p for p in fm.points if p not in self.values]
        if missing:
            raise SpecError(f"statistic {self.name!r} is undefined at {missing}")

    def partition(self, fm: FiniteModel) -> Partition:
        self.check_total(fm)
        blocks: dict[str, list[int]] = {}
        for i, p in enumerate(fm.points):
            blocks.setdefault(self.values[p], []).append(i)
        return Partition.from_blocks(blocks.values(), fm.label)


def _check_partition(fm: FiniteModel, p: Partition) -> None:
    if p.size != len(fm.points) or p.corpus_label != fm.label:
        raise SpecError("partition does not partition the model's points")


def is_sufficient_partition(fm: FiniteModel, p: Partition) -> Finding:
    """Are the within-block conditionals free of the parameter?

    Only parameters that give the block positive mass constrain its
    conditional distribution.
    """
    _check_partition(fm, p)
    for block in p.blocks:
        conditionals = []
        for t, row in enumerate(fm.pmf):
            mass = sum((row[i] for i in block), Fraction(0))
            if mass > 0:
                conditionals.append((t, tuple(row[i] / mass for i in block)))
        for (t0, c0), (t1, c1) in zip(conditionals, conditionals[1:]):
            if c0 != c1:
                k = next(k for k in range(len(block)) if c0[k] != c1[k])
                return Finding(
                    False,
                    {
                        "block": [fm.points[i] for i in block],
                        "thetas": [qstr(fm.probe[t0]), qstr(fm.probe[t1])],
                        "point": fm.points[block[k]],
                        "conditionals": [qstr(c0[k]), qstr(c1[k])],
                    },
                )
    return Finding(True)


def _ratio_key(column: Sequence[Fraction]) -> tuple:
    # zero pattern plus the column scaled so its first positive entry is 1
    pivot = next((v for v in column if v != 0), None)
    if pivot is None:
        return tuple(column)
    return tuple(v / pivot for v in column)


def minimal_partition(fm: FiniteModel) -> Partition:
    """Exact constant-ratio classes over the probe.

    Relative to the probe: a degenerate probe (one parameter, say) yields a
    coarser partition than the true minimal sufficient one.
    """
    blocks: dict[tuple, list[int]] = {}
    for i in range(len(fm.points)):
        blocks.setdefault(_ratio_key(fm.column(i)), []).append(i)
    return Partition.from_blocks(blocks.values(), fm.label)


def is_function_of(t: LabelStatistic, s: LabelStatistic, fm: FiniteModel) -> Finding:
    """Does ``s(x) == s(y)`` imply ``t(x) == t(y)`` for all points?"""
    t.check_total(fm)
    s.check_total(fm)
    for x, y in combinations(fm.points, 2):
        if s(x) == s(y) and t(x) != t(y):
            return Finding(False, {"pair": [x, y], "s": [s(x), s(y)], "t": [t(x), t(y)]})
    return Finding(True)


def tv_distance(fm: FiniteModel, theta_a, theta_b) -> Fraction:
    """``1/2 * sum_x |p_a(x) - p_b(x)|``, exactly."""
    a = fm.pmf[fm.index_of_theta(theta_a)]
    b = fm.pmf[fm.index_of_theta(theta_b)]
    return sum((abs(u - v) for u, v in zip(a, b)), Fraction(0)) / 2


def tv_sequence(fm: FiniteModel, theta, sequence: Sequence) -> tuple[list[Fraction], bool]:
    """Total variation distances from ``theta`` along ``sequence``.

    The flag reports whether the distances are non-increasing, the finite
    shadow of convergence in total variation.
    """
    dists = [tv_distance(fm, s, theta) for s in sequence]
    return dists, all(b <= a for a, b in zip(dists, dists[1:]))


def all_partitions(n: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Every set partition of ``range(n)`` (Bell-number many)."""
    if n == 0:
        yield ()
        return

    def grow(i: int, blocks: list[list[int]]):
        if i == n:
            yield tuple(tuple(b) for b in blocks)
            return
        for b in blocks:
            b.append(i)
            yield from grow(i + 1, blocks)
            b.pop()
        blocks.append([i])
        yield from grow(i + 1, blocks)
        blocks.pop()

    yield from grow(0, [])


# --------------------------------------------------------------------------
# the four-point counterexample


def pfanzagl_model(probe: Sequence = ("1/4", "1/2", "3/4")) -> FiniteModel:
    """Masses theta/3, 2theta/3, (1-theta)/3, 2(1-theta)/3 on points 1..4."""

    def mass(theta: Fraction, x: str) -> Fraction:
        return {
            "1": theta / 3,
            "2": 2 * theta / 3,
            "3": (1 - theta) / 3,
            "4": 2 * (1 - theta) / 3,
        }[x]

    return FiniteModel.from_function(("1", "2", "3", "4"), probe, mass, label="four-point")


def _table(fm: FiniteModel, scale: Fraction = Fraction(1)) -> dict:
    return {qstr(t): {x: qstr(p * scale) for x, p in zip(fm.points, row)} for t, row in zip(fm.probe, fm.pmf)}


def demo_pfanzagl(scale_by_four: bool = False) -> dict:
    """Rebuild the four-point model and check every link of the argument.

    Returns a findings dictionary with ``reproduced`` true when all five steps
    come out as expected: T and U are both sufficient, U passes the
    separation hypothesis, U is not a function of T, and the exact
    likelihood-ratio partition equals T's and is strictly coarser than U's.
    """
    fm = pfanzagl_model()
    T = LabelStatistic({"1": "1", "2": "1", "3": "0", "4": "0"}, "indicator_{1,2}")
    U = LabelStatistic.identity(fm)
    t_part, u_part = T.partition(fm), U.partition(fm)

    # (1) Neyman-Fisher split p = g(T) h with g(1)=theta, g(0)=1-theta
    h = {"1": Fraction(1, 3), "2": Fraction(2, 3), "3": Fraction(1, 3), "4": Fraction(2, 3)}
    factor_ok = all(
        p == (theta if T(x) == "1" else 1 - theta) * h[x]
        for theta, row in zip(fm.probe, fm.pmf)
        for x, p in zip(fm.points, row)
    )
    t_suff = is_sufficient_partition(fm, t_part)
    conditionals = {}
    for block in t_part.blocks:
        for theta, row in zip(fm.probe, fm.pmf):
            mass = sum((row[i] for i in block), Fraction(0))
            conditionals.setdefault(qstr(theta), {}).update({fm.points[i]: qstr(row[i] / mass) for i in block})
    step1 = {
        "holds": t_suff.holds and factor_ok,
        "factorization_exact": factor_ok,
        "h": {x: qstr(v) for x, v in h.items()},
        "conditionals_given_T": conditionals,
    }

    # (2) identity statistic
    u_suff = is_sufficient_partition(fm, u_part)
    step2 = {"holds": u_suff.holds}

    # (3) separation: p_theta vectors differ between distinct points
    columns = {x: [qstr(v) for v in fm.column(i)] for i, x in enumerate(fm.points)}
    separated = all(fm.column(i) != fm.column(j) for i, j in combinations(range(len(fm.points)), 2))
    step3 = {"holds": separated, "separation_table": _table(fm), "density_vectors": columns}

    # (4) U is not a function of T
    fn = is_function_of(U, T, fm)
    step4 = {"holds": not fn.holds, "U_function_of_T": fn.holds, "witness": fn.witness}

    # (5) the exact likelihood-ratio partition
    minimal = minimal_partition(fm)
    strict = refines(u_part, minimal) and not refines(minimal, u_part)
    step5 = {
        "holds": minimal.blocks == t_part.blocks and strict,
        "minimal_partition": minimal.labelled(fm.points),
        "T_partition": t_part.labelled(fm.points),
        "U_partition": u_part.labelled(fm.points),
        "U_strictly_finer": strict,
    }

    steps = {
        "1_T_sufficient": step1,
        "2_U_sufficient": step2,
        "3_U_separates": step3,
        "4_U_not_function_of_T": step4,
        "5_minimal_is_T": step5,
    }
    reproduced = all(s["holds"] for s in steps.values())
    findings = {
        "model": fm.to_json(),
        "steps": steps,
        "tv_distances": {
            f"{qstr(a)}|{qstr(b)}": qstr(tv_distance(fm, a, b)) for a, b in combinations(fm.probe, 2)
        },
        "reproduced": reproduced,
        "status": "criterion_refuted" if reproduced else "not_reproduced",
        "conclusion": (
            "U separates points through p_theta and is sufficient, yet it is not a function of the "
            "sufficient statistic T; the separation-based criterion would certify U as minimal, "
            "which the exact likelihood-ratio partition {{1,2},{3,4}} contradicts"
        ),
    }
    if scale_by_four:
        findings["densities_wrt_normalized_counting"] = _table(fm, Fraction(4))
    return findings
