import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minsuff.model import Corpus, ParamGrid, SpecError, log_density
from minsuff.ratio import proportional
from minsuff.versions import VersionAssignment, demo_versions, gaussian_model, load_assignment, perturb

BASE = gaussian_model(2)
GRID = [(t / 4,) for t in range(-8, 9)]
XS = [(a / 2, b / 2) for a in range(-4, 5) for b in range(-4, 5)]


def _table(m):
    return {(t, x): log_density(m, t, x) for t in GRID for x in XS}


def test_empty_assignment_changes_nothing():
    assert _table(perturb(BASE, VersionAssignment(()))) == _table(BASE)


def test_single_override_changes_one_cell():
    m = perturb(BASE, VersionAssignment((((0.5,), (1.0, -1.0)),)))
    before, after = _table(BASE), _table(m)
    diff = [k for k in before if before[k] != after[k]]
    assert diff == [((0.5,), (1.0, -1.0))]
    assert after[diff[0]] == -math.inf


def test_table_diff_counts_assignment_cells():
    pairs = (((-1.0,), (0.0, 0.0)), ((0.25,), (1.5, -2.0)), ((1.75,), (-0.5, 0.5)))
    m = perturb(BASE, VersionAssignment(pairs))
    before, after = _table(BASE), _table(m)
    assert sum(before[k] != after[k] for k in before) == len(pairs)


def test_assignment_thetas_must_be_distinct():
    with pytest.raises(SpecError):
        VersionAssignment((((1.0,), (0.0, 0.0)), ((1.0,), (1.0, 1.0))))


def test_clashing_override_rejected():
    a = VersionAssignment((((0.5,), (1.0, -1.0)),))
    with pytest.raises(SpecError, match="already"):
        perturb(perturb(BASE, a), a)


def test_assignment_json():
    a = load_assignment(json.dumps({"pairs": [{"theta": [0.5], "x": [1, -1]}]}))
    assert a.pairs == (((0.5,), (1.0, -1.0)),)
    with pytest.raises(SpecError):
        load_assignment({"pairs": [{"theta": [0.5]}]})


def test_demo_default_corpus():
    d = demo_versions(2)
    assert d["reproduced"]
    first = d["equal_sum_pairs"][0]
    assert (first["x"], first["y"]) == ([1.0, -1.0], [0.0, 0.0])
    # log-ratio -1/2 (0 - 2) = 1 at every theta
    assert abs(first["unperturbed"]["h"] - math.e) <= 1e-12 * math.e
    assert not first["perturbed"]["in_D"]
    assert first["theta_y"] in first["conflict_thetas"]
    assert first["perturbed"]["zero_pattern_conflict"] is not None
    assert len(d["changed_cells"]) == 3
    assert d["method31_before"] == d["method31_after"]
    assert d["method31_before"]["status"] == "verified_on_probe"


def test_demo_needs_equal_sum_pair():
    with pytest.raises(SpecError):
        demo_versions(2, Corpus.of([[0, 0], [1, 1]], "distinct-sums"))


def test_demo_rejects_overlapping_theta0():
    with pytest.raises(SpecError):
        demo_versions(2, theta0=ParamGrid.of([0.5, 2]))


def test_demo_higher_dimension():
    assert demo_versions(3)["reproduced"]


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), min_size=2, max_size=5, unique=True),
    st.lists(st.integers(-12, 12), min_size=1, max_size=4, unique=True),
)
def test_robustness_for_disjoint_theta0(points, grid):
    pts = [(a / 2, b / 2) for a, b in points]
    assignment = VersionAssignment(tuple(((k + 0.5,), p) for k, p in enumerate(pts)))
    theta0 = ParamGrid.of([g / 3 for g in grid if g / 3 not in {k + 0.5 for k in range(len(pts))}] or [100.0])
    m = perturb(BASE, assignment)
    for x in pts:
        for y in pts:
            assert proportional(m, theta0, x, y) == proportional(BASE, theta0, x, y)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), min_size=2, max_size=5, unique=True))
def test_collapse_when_assignment_covers_corpus(points):
    pts = [(a / 2, b / 2) for a, b in points]
    assignment = VersionAssignment(tuple(((k + 0.5,), p) for k, p in enumerate(pts)))
    m = perturb(BASE, assignment)
    grid = ParamGrid(assignment.thetas, "assignment")
    for x in pts:
        for y in pts:
            assert proportional(m, grid, x, y).in_D == (x == y)
