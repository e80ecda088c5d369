"""Density-version perturbations of the Gaussian product model.

Zeroing the density at one sample point per parameter value leaves every
measure unchanged (each change sits on a Lebesgue-null singleton) but
destroys pointwise proportionality over the perturbed parameters.  The
relation over a parameter grid that avoids the perturbed values is untouched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

from .criteria import Factorization, check_method_31
from .expr import parse
from .model import Corpus, Model, Override, ParamGrid, SpecError, Statistic, Vector, _load_doc, _validate, log_density
from .ratio import DEFAULT_TOL, proportional

__all__ = ["VersionAssignment", "demo_versions", "gaussian_model", "load_assignment", "perturb"]


@dataclass(frozen=True)
class VersionAssignment:
    """Finitely many ``(theta, x)`` cells where the density is set to 0."""

    pairs: tuple[tuple[Vector, Vector], ...]

    def __post_init__(self):
        thetas = [t for t, _ in self.pairs]
        if len(set(thetas)) != len(thetas):
            raise SpecError("an assignment maps each theta to a single sample point")

    @property
    def thetas(self) -> tuple[Vector, ...]:
        return tuple(t for t, _ in self.pairs)


ASSIGNMENT_SCHEMA = {
    "type": "object",
    "required": ["pairs"],
    "properties": {
        "pairs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["theta", "x"],
                "properties": {"theta": {"type": "array", "items": {"type": "number"}}, "x": {"type": "array", "items": {"type": "number"}}},
            },
        }
    },
}


def load_assignment(document) -> VersionAssignment:
    doc = _load_doc(document)
    _validate(doc, ASSIGNMENT_SCHEMA, "version assignment")
    return VersionAssignment(
        tuple((tuple(map(float, p["theta"])), tuple(map(float, p["x"]))) for p in doc["pairs"])
    )


def perturb(m: Model, a: VersionAssignment) -> Model:
    """``m`` with its density zeroed at exactly the assignment's cells."""
    existing = {(o.theta, o.x) for o in m.version_overrides}
    added = []
    for theta, x in a.pairs:
        theta, x = tuple(map(float, theta)), tuple(map(float, x))
        if len(theta) != m.param_dim or len(x) != m.sample_dim:
            raise SpecError("assignment dimensions do not match the model")
        if (theta, x) in existing:
            raise SpecError(f"override already present at theta={list(theta)}, x={list(x)}")
        added.append(Override(theta, x, 0.0))
    return replace(m, version_overrides=m.version_overrides + tuple(added))


def gaussian_model(n: int) -> Model:
    """i.i.d. N(theta, 1) sample of size ``n``."""
    text = "(2*pi)^(-n/2) * exp(-sum{i}(x[i]^2)/2 + theta[0]*sum{i}(x[i]) - n*theta[0]^2/2)"
    return Model(f"normal-location-{n}", n, 1, parse(text, n, 1))


def _sum_statistic(n: int) -> Statistic:
    return Statistic.build("sum", ["sum{i}(x[i])"], sample_dim=n)


def _equal_sums(x: Sequence[float], y: Sequence[float]) -> bool:
    a, b = sum(x), sum(y)
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def default_corpus(n: int) -> Corpus:
    """Three points with coordinate sum 0: ``(k, 0, ..., 0, -k)`` for k = 1, 0, 2."""
    return Corpus(tuple(tuple(float(v) for v in [k] + [0] * (n - 2) + [-k]) for k in (1, 0, 2)), f"equal-sum-{n}")


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=str)


def demo_versions(n: int = 2, corpus: Corpus | None = None, theta0: ParamGrid | None = None) -> dict:
    if n < 2:
        raise SpecError("the demo needs n >= 2")
    corpus = corpus or default_corpus(n)
    if corpus.sample_dim != n:
        raise SpecError(f"corpus points must have length {n}")
    pts = corpus.points
    eq_pairs = [(i, j) for i in range(len(pts)) for j in range(i + 1, len(pts)) if pts[i] != pts[j] and _equal_sums(pts[i], pts[j])]
    if not eq_pairs:
        raise SpecError("the corpus has no pair of distinct points with equal coordinate sums")

    model = gaussian_model(n)
    # theta_k = k + 1/2 stands in for one value of a surjection onto the sample space
    assign_thetas = [(float(Fraction(2 * k + 1, 2)),) for k in range(len(pts))]
    assignment = VersionAssignment(tuple(zip(assign_thetas, pts)))
    perturbed = perturb(model, assignment)
    agrid = ParamGrid(tuple(assign_thetas), "assignment-thetas")

    theta0 = theta0 or ParamGrid.of([-1, "1/3", 2], "theta0")
    if set(theta0.points) & set(assign_thetas):
        raise SpecError("theta0 must avoid the perturbed parameter values")

    pairs_report = []
    unperturbed_ok = perturbed_ok = True
    for i, j in eq_pairs:
        x, y = pts[i], pts[j]
        before = proportional(model, agrid, x, y, DEFAULT_TOL)
        after = proportional(perturbed, agrid, x, y, DEFAULT_TOL)
        conflicts = [
            theta
            for theta in agrid.points
            if (log_density(perturbed, theta, x) == float("-inf")) != (log_density(perturbed, theta, y) == float("-inf"))
        ]
        theta_y = assign_thetas[j]
        expected_h = _expected_h(x, y)
        unperturbed_ok &= before.in_D and abs(before.h - expected_h) <= 1e-12 * expected_h
        perturbed_ok &= (not after.in_D) and theta_y in conflicts
        pairs_report.append(
            {
                "x": list(x),
                "y": list(y),
                "unperturbed": before.to_json(),
                "expected_h": expected_h,
                "perturbed": after.to_json(),
                "conflict_thetas": [list(t) for t in conflicts],
                "theta_y": list(theta_y),
                "witness": {
                    "theta": list(theta_y),
                    "log_f_x": log_density(perturbed, theta_y, x),
                    "log_f_y": log_density(perturbed, theta_y, y),
                },
            }
        )

    # every distinct pair collapses once the assignment covers the corpus
    collapse = all(
        not proportional(perturbed, agrid, pts[i], pts[j], DEFAULT_TOL).in_D
        for i in range(len(pts))
        for j in range(len(pts))
        if pts[i] != pts[j]
    )

    # measure-level evidence: the two versions differ on the overridden cells only
    cells = []
    for theta in agrid.points:
        for x in pts:
            if log_density(model, theta, x) != log_density(perturbed, theta, x):
                cells.append({"theta": list(theta), "x": list(x)})
    locality = len(cells) == len(assignment.pairs) and all(
        (tuple(c["theta"]), tuple(c["x"])) in set(assignment.pairs) for c in cells
    )

    stat = _sum_statistic(n)
    fac = Factorization.build(
        "exp(theta[0]*x[0] - %d*theta[0]^2/2)" % n,
        "(2*pi)^(-n/2) * exp(-sum{i}(x[i]^2)/2)",
        model,
        stat,
    )
    v_before = check_method_31(model, stat, theta0, corpus, DEFAULT_TOL, fac).to_json()
    v_after = check_method_31(perturbed, stat, theta0, corpus, DEFAULT_TOL, fac).to_json()
    robust = _canon(v_before) == _canon(v_after)

    reproduced = unperturbed_ok and perturbed_ok and collapse and locality and robust
    return {
        "n": n,
        "corpus": [list(p) for p in pts],
        "assignment": [{"theta": list(t), "x": list(x)} for t, x in assignment.pairs],
        "equal_sum_pairs": pairs_report,
        "unperturbed_all_in_D": unperturbed_ok,
        "perturbed_all_conflict": perturbed_ok,
        "relation_collapses_to_diagonal": collapse,
        "changed_cells": cells,
        "changes_confined_to_null_singletons": locality,
        "method31_theta0": [list(t) for t in theta0.points],
        "method31_before": v_before,
        "method31_after": v_after,
        "method31_identical": robust,
        "reproduced": reproduced,
        "status": "criterion_collapses" if reproduced else "not_reproduced",
        "scope": (
            "a finite assignment defeats pointwise proportionality only on the covered corpus; "
            "the contradiction for all measurable maps is argued, not computed"
        ),
    }


def _expected_h(x: Sequence[float], y: Sequence[float]) -> float:
    return math.exp(-0.5 * (sum(v * v for v in y) - sum(v * v for v in x)))
