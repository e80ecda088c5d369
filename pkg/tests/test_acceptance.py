"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also collected into the terminal summary.
"""

import io
import json
import math
import time
from contextlib import contextmanager
from fractions import Fraction as Q
from itertools import product

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES

from minsuff.cli import run
from minsuff.finite import (
    LabelStatistic,
    all_partitions,
    is_function_of,
    is_sufficient_partition,
    minimal_partition,
    pfanzagl_model,
    tv_distance,
)
from minsuff.fixtures import FIXTURES, load
from minsuff.model import ParamGrid, apply_statistic, log_density
from minsuff.ratio import MixtureSpec, Partition, canonical_statistic, proportional, ratio_partition, refines

TOL = 1e-9


@contextmanager
def criterion(number, label, budget_s=None):
    start = time.perf_counter()
    try:
        yield
        elapsed = time.perf_counter() - start
        if budget_s is not None:
            assert elapsed < budget_s, f"took {elapsed:.3f} s, budget {budget_s} s"
    except BaseException as err:
        line = f"FAIL criterion {number}: {label} ({type(err).__name__}: {err})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        raise
    line = f"PASS criterion {number}: {label} ({elapsed * 1000:.0f} ms)"
    ACCEPTANCE_LINES.append(line)
    print(line)


def invoke(*argv):
    out = io.StringIO()
    code = run(list(argv), stdout=out)
    return code, json.loads(out.getvalue())


# --------------------------------------------------------------------------
# 1


def test_criterion_1_four_point_counterexample():
    with criterion(1, "four-point counterexample reproduced exactly", budget_s=1.0):
        code, report = invoke("demo", "pfanzagl")
        assert code == 0
        d = report["findings"][0]
        assert d["steps"]["5_minimal_is_T"]["minimal_partition"] == [["1", "2"], ["3", "4"]]
        table = d["steps"]["3_U_separates"]["separation_table"]
        for theta in (Q(1, 4), Q(1, 2), Q(3, 4)):
            expected = [theta / 3, 2 * theta / 3, (1 - theta) / 3, 2 * (1 - theta) / 3]
            assert [Q(table[str(theta)][k]) for k in "1234"] == expected
        assert d["steps"]["4_U_not_function_of_T"]["witness"]["pair"] == ["1", "2"]

        # the same facts in-process, as exact rationals
        fm = pfanzagl_model()
        assert minimal_partition(fm).blocks == ((0, 1), (2, 3))
        T = LabelStatistic({"1": "a", "2": "a", "3": "b", "4": "b"}, "T")
        finding = is_function_of(LabelStatistic.identity(fm), T, fm)
        assert not finding.holds and finding.witness["pair"] == ["1", "2"]


# --------------------------------------------------------------------------
# 2


def test_criterion_2_version_collapse(tmp_path):
    corpus = tmp_path / "corpus.json"
    corpus.write_text(json.dumps({"label": "three-points", "points": [[1, -1], [0, 0], [2, -2]]}))
    with criterion(2, "density-version perturbation collapses the criterion", budget_s=1.0):
        code, report = invoke("demo", "versions", "--n", "2", "--corpus", str(corpus))
        assert code == 0
        d = report["findings"][0]
        pairs = d["equal_sum_pairs"]
        assert pairs
        assert all(p["unperturbed"]["in_D"] for p in pairs)
        first = next(p for p in pairs if (p["x"], p["y"]) == ([1.0, -1.0], [0.0, 0.0]))
        assert abs(first["unperturbed"]["h"] - math.e) <= 1e-12 * math.e
        for p in pairs:
            assert not p["perturbed"]["in_D"]
            assert p["perturbed"]["zero_pattern_conflict"] is not None
        before = json.dumps(d["method31_before"], sort_keys=True)
        after = json.dumps(d["method31_after"], sort_keys=True)
        assert before == after


# --------------------------------------------------------------------------
# 3


def cofactor_det(m):
    if len(m) == 1:
        return m[0][0]
    return sum((-1) ** j * a * cofactor_det([r[:j] + r[j + 1 :] for r in m[1:]]) for j, a in enumerate(m[0]))


def test_criterion_3_rank_test_on_normal_scale_family():
    with criterion(3, "rank test: determinant matches cofactor oracle, dependent mutant inconclusive", budget_s=1.0):
        code, report = invoke("check", "m33", "--fixture", "ex46")
        assert code == 0
        w = report["findings"][0]
        assert w["rank"] == 3
        thetas = [Q(t[0]).limit_denominator() for t in w["witness_thetas"]]
        assert sorted(thetas) == [1, 2, 3]
        # natural parameters 1/theta and -1/(2 theta^2), hand-expanded exactly
        exact = cofactor_det([[Q(1), 1 / t, -1 / (2 * t * t)] for t in thetas])
        assert abs(exact) == Q(1, 36)
        assert abs(w["determinant"] - float(exact)) <= 1e-12 * abs(float(exact))

        code, report = invoke("check", "m33", "--fixture", "ex46", "--mutant")
        assert code == 2
        assert report["verdict"]["status"] == "inconclusive"


# --------------------------------------------------------------------------
# 4


EXAMPLES = ["ex41", "ex42", "ex43", "ex44", "ex45"]
_fixture_seconds = []


@pytest.mark.parametrize("name", EXAMPLES)
def test_criterion_4_fixture_suite(name):
    method = FIXTURES[name].method
    with criterion(4, f"{name} ({method}) verified, mutant refuted with a witness"):
        start = time.perf_counter()
        code, report = invoke("check", method, "--fixture", name, "--tol", str(TOL))
        assert code == 0 and report["verdict"]["status"] == "verified_on_probe"
        code, report = invoke("check", method, "--fixture", name, "--mutant", "--tol", str(TOL))
        assert code == 1 and report["verdict"]["status"] == "refuted"
        w = report["findings"][0]

        # re-derive the witness independently of the checker
        lf = load(name)
        grid = lf.grid if method == "m31" else lf.probe
        in_D = proportional(lf.model, grid, w["x"], w["y"], TOL).in_D
        same_T = apply_statistic(lf.mutant, w["x"]) == apply_statistic(lf.mutant, w["y"])
        assert in_D != same_T
        _fixture_seconds.append(time.perf_counter() - start)
        if len(_fixture_seconds) == len(EXAMPLES):
            assert sum(_fixture_seconds) < 10.0


# --------------------------------------------------------------------------
# 5


CONTINUOUS = [n for n in FIXTURES if n != "fourpoint"]


def _sub_grid(rng, grid):
    idx = sorted(rng.choice(len(grid), size=rng.integers(1, len(grid) + 1), replace=False))
    return ParamGrid(tuple(grid.points[i] for i in idx), "sub")


def _enlarge(rng, grid, full):
    # midpoints of the full grid stay inside the parameter space
    extra = []
    for _ in range(rng.integers(1, 4)):
        i = rng.integers(0, len(full) - 1) if len(full) > 1 else 0
        a, b = full.points[i], full.points[min(i + 1, len(full) - 1)]
        extra.append(tuple((u + v) / 2 for u, v in zip(a, b)))
    extra += list(full.points[: rng.integers(0, len(full) + 1)])
    return grid.union(ParamGrid(tuple(dict.fromkeys(extra)), "extra"))


def test_criterion_5_equivalence_relation_properties():
    with criterion(5, "equivalence-relation properties over 1000 random instances"):
        rng = np.random.default_rng(2024)
        loaded = {n: load(n) for n in FIXTURES}
        blocks = {n: ratio_partition(lf.model, lf.grid, lf.corpus, TOL) for n, lf in loaded.items()}
        names = sorted(loaded)
        failures = []
        triggered = {"symmetry": 0, "transitivity": 0, "monotonicity": 0}
        for trial in range(1000):
            name = names[rng.integers(len(names))]
            lf, part = loaded[name], blocks[name]
            pts = lf.corpus.points
            grid = _sub_grid(rng, lf.grid)
            i = int(rng.integers(len(pts)))
            if rng.random() < 0.5:
                block = part.block_of(i)
                j, k = (int(block[rng.integers(len(block))]) for _ in range(2))
            else:
                j, k = (int(rng.integers(len(pts))) for _ in range(2))
            x, y, z = pts[i], pts[j], pts[k]

            same = proportional(lf.model, grid, x, x, TOL)
            if not (same.in_D and same.h == 1.0):
                failures.append((trial, "reflexivity", name, x))

            xy, yx = proportional(lf.model, grid, x, y, TOL), proportional(lf.model, grid, y, x, TOL)
            if xy.in_D != yx.in_D:
                failures.append((trial, "symmetry", name, x, y))
            elif xy.in_D:
                triggered["symmetry"] += 1
                if not math.exp(-2 * TOL) <= xy.h * yx.h <= math.exp(2 * TOL):
                    failures.append((trial, "symmetry-h", name, x, y, xy.h * yx.h))

            yz = proportional(lf.model, grid, y, z, TOL)
            if xy.in_D and yz.in_D:
                triggered["transitivity"] += 1
                if not proportional(lf.model, grid, x, z, 2 * TOL).in_D:
                    failures.append((trial, "transitivity", name, x, y, z))

            bigger = _enlarge(rng, grid, lf.grid)
            if proportional(lf.model, bigger, x, y, TOL).in_D:
                triggered["monotonicity"] += 1
                if not xy.in_D:
                    failures.append((trial, "monotonicity", name, x, y))
        assert failures == []
        # every premise fired often enough for the checks to mean something
        assert min(triggered.values()) >= 100, triggered


# --------------------------------------------------------------------------
# 6


def _sufficient_oracle(pmf, blocks):
    """Conditional law within each block is the same for every parameter with positive block mass."""
    for block in blocks:
        seen = None
        for row in pmf:
            mass = sum(row[i] for i in block)
            if mass == 0:
                continue
            cond = tuple(row[i] / mass for i in block)
            if seen is None:
                seen = cond
            elif cond != seen:
                return False
    return True


def test_criterion_6_finite_exact_coarsest_sufficiency():
    with criterion(6, "all 15 partitions: sufficient ones refine the minimal partition, exact TV axioms"):
        fm = pfanzagl_model()
        thetas = [Q(1, 4), Q(1, 2), Q(3, 4)]
        pmf = [(t / 3, 2 * t / 3, (1 - t) / 3, 2 * (1 - t) / 3) for t in thetas]
        minimal = minimal_partition(fm)
        assert minimal.blocks == ((0, 1), (2, 3))
        parts = list(all_partitions(4))
        assert len(parts) == 15
        sufficient = 0
        for blocks in parts:
            p = Partition.from_blocks(blocks, fm.label)
            holds = is_sufficient_partition(fm, p).holds
            assert holds == _sufficient_oracle(pmf, p.blocks)
            if holds:
                sufficient += 1
                assert refines(p, minimal)
        assert sufficient == 4

        assert tv_distance(fm, Q(1, 4), Q(1, 2)) == Q(1, 4)
        for probe in (fm, pfanzagl_model([Q(k, 8) for k in range(9)])):
            for a, b, c in product(probe.probe, repeat=3):
                assert tv_distance(probe, a, a) == 0
                assert tv_distance(probe, a, b) == tv_distance(probe, b, a) >= 0
                assert tv_distance(probe, a, c) <= tv_distance(probe, a, b) + tv_distance(probe, b, c)


# --------------------------------------------------------------------------
# 7


def _log_mixture(model, mix, x):
    logs = [log_density(model, t, x) for t in mix.grid.points]
    if any(l == math.inf for l in logs):
        return math.inf
    terms = [math.log(w) + l for w, l in zip(mix.weights, logs) if l != -math.inf]
    if not terms:
        return -math.inf
    top = max(terms)
    return top + math.log(math.fsum(math.exp(t - top) for t in terms))


def _canonical_equal(cx, cy, tol):
    if [c == 0 for c in cx] != [c == 0 for c in cy]:
        return False
    return all(abs(math.log(a) - math.log(b)) <= tol for a, b in zip(cx, cy) if a != 0)


def test_criterion_7_canonical_statistic_matches_ratio_relation():
    with criterion(7, "canonical-statistic equality <=> in_D on every continuous fixture corpus"):
        failures, equal_pairs, distinct_pairs = [], 0, 0
        for name in CONTINUOUS:
            lf = load(name)
            mix = MixtureSpec(lf.grid)
            pts = [x for x in lf.corpus.points if math.isfinite(_log_mixture(lf.model, mix, x))]
            canon = [canonical_statistic(lf.model, mix, x) for x in pts]
            for a, x in enumerate(pts):
                for b, y in enumerate(pts):
                    in_D = proportional(lf.model, lf.grid, x, y, TOL).in_D
                    same = _canonical_equal(canon[a], canon[b], TOL)
                    if in_D != same:
                        failures.append((name, x, y, in_D, same))
                    if a != b:
                        equal_pairs += same
                        distinct_pairs += not same
        assert failures == []
        assert equal_pairs > 0 and distinct_pairs > 0
