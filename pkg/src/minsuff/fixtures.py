"""Shipped fixtures: models, statistics, grids and corpora for the worked examples.

Every fixture is a bundle of JSON-ready documents, so the in-process objects
and the files written by ``minsuff fixtures export`` are the same thing.
Sample coordinates are multiples of 1/64, which keeps sums and means exact in
binary floating point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cache
from pathlib import Path

import numpy as np

from .criteria import ExpFamSpec, Factorization, expfam_model, load_expfam, load_factorization
from .model import Corpus, Model, ParamGrid, SpecError, Statistic, load_corpus, load_grid, load_model, load_statistic

__all__ = ["Fixture", "LoadedFixture", "FIXTURES", "export", "get", "load"]

STEP = 64


def _dyadic(v: float) -> float:
    return round(v * STEP) / STEP


def _steps(lo: float, hi: float, step: float) -> list[float]:
    count = int(round((hi - lo) / step))
    return [lo + k * step for k in range(count + 1)]


@dataclass(frozen=True)
class Fixture:
    name: str
    title: str
    method: str  # m31, m32 or m33
    documents: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LoadedFixture:
    fixture: Fixture
    model: Model
    statistic: Statistic | None
    mutant: Statistic | None
    grid: ParamGrid
    corpus: Corpus | None
    probe: ParamGrid | None = None
    factorization: Factorization | None = None
    mutant_factorization: Factorization | None = None
    expfam: ExpFamSpec | None = None
    expfam_mutant: ExpFamSpec | None = None


def _grid(label, values):
    return {"label": label, "points": [[v] for v in values]}


def _corpus(label, points):
    return {"label": label, "points": [list(map(float, p)) for p in points]}


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


# --------------------------------------------------------------------------
# corpora


def _cauchy_scale_points() -> list[tuple]:
    rng = _rng(41)
    base = [tuple(_dyadic(v) for v in rng.uniform(-3, 3, size=3)) for _ in range(12)]
    twins = []
    for p in base[:6]:
        perm = rng.permutation(3)
        signs = rng.choice([-1.0, 1.0], size=3)
        signs[0] = -1.0  # at least one sign flip
        twins.append(tuple(float(signs[k] * p[perm[k]]) for k in range(3)))
    return base + twins


def _truncated_exp_points() -> list[tuple]:
    rng = _rng(42)
    mins = [-0.875, -0.375, 0.125, 0.625, 1.125, 1.625, 2.125, 2.625]
    pts = []
    for m in mins:
        other = _dyadic(m + rng.uniform(0.25, 2.0))
        pts.append((m, other) if rng.random() < 0.5 else (other, m))
    for m in mins[::2]:
        # twin: same minimum, different other coordinate
        pts.append((_dyadic(m + rng.uniform(2.25, 3.0)), m))
    return pts


def _half_normal_points() -> list[tuple]:
    rng = _rng(43)
    mins = [-1.375, -0.875, -0.375, 0.125, 0.625, 1.125, 1.625, 2.125]
    pts = []
    for m in mins:
        a, b = sorted(_dyadic(m + rng.uniform(0.25, 2.0)) for _ in range(2))
        if a == b:
            b += 1 / 8
        pts.append((m, a, b))
    for m, a, b in pts[:4]:
        d = _dyadic((b - a) / 4) or 1 / STEP
        # twin: same min and sum, so the same mean, but a different maximum
        pts.append((a + d, m, b - d))
    return pts


def _triangle_points() -> list[tuple]:
    rng = _rng(44)
    tops = [0.875, 1.875, 2.375, 3.375, 4.125, 5.125]

    def pair(total):
        u = _dyadic(total * rng.uniform(0.2, 0.8))
        return (u, total - u)

    pts = []
    for s in tops:
        small = _dyadic(s * rng.uniform(0.2, 0.9))
        a, b = pair(s), pair(small)
        pts.append(a + b if rng.random() < 0.5 else b + a)
    for s in tops[::2]:
        small = _dyadic(s * rng.uniform(0.05, 0.15))
        pts.append(pair(small) + pair(s))
    return pts


def _cauchy_location_points() -> list[tuple]:
    rng = _rng(45)
    base = [tuple(_dyadic(v) for v in rng.uniform(-3, 3, size=3)) for _ in range(10)]
    twins = [tuple(p[k] for k in rng.permutation(3)) for p in base[:5]]
    # equal sum of the two smallest and equal maximum, different order statistics
    collision = [(0.0, 2.0, 5.0), (1.0, 1.0, 5.0)]
    return base + twins + collision


def _gamma_points() -> list[tuple]:
    rng = _rng(46)
    pts = [(0.0, 2.0), (0.0, 1.0), (2.0, 0.0)]
    base = [tuple(_dyadic(v) for v in rng.uniform(-2, 2, size=2)) for _ in range(8)]
    base = [p for p in base if p[0] * p[1] != 0]
    twins = [(-p[1], p[0]) for p in base[:4]]
    return pts + base + twins


def _normal_points(n: int, seed: int) -> list[tuple]:
    rng = _rng(seed)
    pts = [(1.0, -1.0), (0.0, 0.0), (2.0, -2.0)]
    base = [tuple(_dyadic(v) for v in rng.uniform(-2, 2, size=n)) for _ in range(6)]
    twins = [(p[1], p[0]) for p in base[:3]]
    return pts + base + twins


# --------------------------------------------------------------------------
# fixtures


def _build() -> dict[str, Fixture]:
    out: dict[str, Fixture] = {}

    def add(fx: Fixture):
        out[fx.name] = fx

    cauchy_scale = "prod{i}(1/(pi*theta[0]*(1+(x[i]/theta[0])^2)))"
    add(
        Fixture(
            "ex41",
            "Cauchy scale family (symmetric densities), sorted absolute values",
            "m31",
            {
                "model": {"name": "cauchy-scale-3", "sample_dim": 3, "param_dim": 1, "density": cauchy_scale},
                "statistic": {"name": "sorted-abs", "sorted": ["abs(x[i])"]},
                "mutant": {"name": "sorted-signed", "sorted": ["x[i]"]},
                "grid": _grid("scales", ["1/2", 1, "3/2", 2, 3]),
                "corpus": _corpus("ex41-corpus", _cauchy_scale_points()),
                "factorization": {"g": cauchy_scale, "h": "1"},
            },
            {"statistic": "verified_on_probe", "mutant": "refuted"},
        )
    )

    trunc = "exp(n*theta[0] - sum{i}(x[i])) * ind(min{i}(x[i]) > theta[0])"
    add(
        Fixture(
            "ex42",
            "Truncated exponential, f(x)=exp(-x) on (theta, inf), sample minimum",
            "m31",
            {
                "model": {"name": "truncated-exp-2", "sample_dim": 2, "param_dim": 1, "density": trunc},
                "statistic": {"name": "min", "components": ["min{i}(x[i])"]},
                "mutant": {"name": "min-max", "components": ["min{i}(x[i])", "max{i}(x[i])"]},
                "grid": _grid("quarter-steps", _steps(-1, 3, 0.25)),
                "corpus": _corpus("ex42-corpus", _truncated_exp_points()),
                "factorization": {"g": "exp(2*theta[0]) * ind(x[0] > theta[0])", "h": "exp(-sum{i}(x[i]))"},
            },
            {"statistic": "verified_on_probe", "mutant": "refuted"},
        )
    )

    half = "(2/pi)^(n/2) * exp(-sum{i}((x[i]-theta[0])^2)/2) * ind(min{i}(x[i]) >= theta[0])"
    add(
        Fixture(
            "ex43",
            "Normal truncated at its location, (mean, minimum)",
            "m31",
            {
                "model": {"name": "half-normal-location-3", "sample_dim": 3, "param_dim": 1, "density": half},
                "statistic": {"name": "mean-min", "components": ["sum{i}(x[i])/n", "min{i}(x[i])"]},
                "mutant": {
                    "name": "mean-min-max",
                    "components": ["sum{i}(x[i])/n", "min{i}(x[i])", "max{i}(x[i])"],
                },
                "grid": _grid("quarter-steps", _steps(-2, 3, 0.25)),
                "corpus": _corpus("ex43-corpus", _half_normal_points()),
                "factorization": {
                    "g": "(2/pi)^(3/2) * exp(3*theta[0]*x[0] - 3*theta[0]^2/2) * ind(x[1] >= theta[0])",
                    "h": "exp(-sum{i}(x[i]^2)/2)",
                },
            },
            {"statistic": "verified_on_probe", "mutant": "refuted"},
        )
    )

    # sample layout (x1, y1, x2, y2); max pair sum as (a + b + |a - b|)/2
    s1, s2 = "(x[0]+x[1])", "(x[2]+x[3])"
    top = f"({s1}+{s2}+abs({s1}-{s2}))/2"
    bottom = f"({s1}+{s2}-abs({s1}-{s2}))/2"
    positive = "x[0] > 0 and x[1] > 0 and x[2] > 0 and x[3] > 0"
    add(
        Fixture(
            "ex44",
            "Uniform on the triangle x, y > 0, x + y < theta, two pairs, largest pair sum",
            "m31",
            {
                "model": {
                    "name": "triangle-uniform-2",
                    "sample_dim": 4,
                    "param_dim": 1,
                    "density": f"4*theta[0]^(-4) * ind({positive}) * ind({top} < theta[0])",
                },
                "statistic": {"name": "max-pair-sum", "components": [top]},
                "mutant": {"name": "max-and-min-pair-sum", "components": [top, bottom]},
                "grid": _grid("half-steps", _steps(0.5, 6, 0.5)),
                "corpus": _corpus("ex44-corpus", _triangle_points()),
                "factorization": {"g": "4*theta[0]^(-4) * ind(x[0] < theta[0])", "h": f"ind({positive})"},
            },
            {"statistic": "verified_on_probe", "mutant": "refuted"},
        )
    )

    add(
        Fixture(
            "ex45",
            "Cauchy location family, order statistics",
            "m32",
            {
                "model": {
                    "name": "cauchy-location-3",
                    "sample_dim": 3,
                    "param_dim": 1,
                    "density": "prod{i}(1/(pi*(1+(x[i]-theta[0])^2)))",
                },
                "statistic": {"name": "order-statistics", "sorted": ["x[i]"]},
                "mutant": {
                    "name": "merged-lower-pair",
                    "components": ["sum{i}(x[i]) - max{i}(x[i])", "max{i}(x[i])"],
                },
                "grid": _grid("quarter-steps", _steps(-2, 2, 0.25)),
                "probe": _grid("irrational-probe", ["-sqrt(2)", "1/3", "sqrt(2)"]),
                "corpus": _corpus("ex45-corpus", _cauchy_location_points()),
            },
            {"statistic": "verified_on_probe", "mutant": "refuted"},
        )
    )

    ef = {
        "k": 2,
        "eta": ["1/theta[0]", "-1/(2*theta[0]^2)"],
        "B": "2*log(theta[0])",
        "T": ["sum{i}(x[i])", "sum{i}(x[i]^2)"],
        "h": "exp(-n/2)/(2*pi)^(n/2)",
        "sample_dim": 2,
        "param_dim": 1,
    }
    add(
        Fixture(
            "ex46",
            "N(theta, theta^2) with k = 1, n = 2, (sum, sum of squares)",
            "m33",
            {
                "expfam": ef,
                "expfam_mutant": {**ef, "eta": ["1/theta[0]", "2/theta[0] + 3"]},
                "probe": _grid("integers", [1, 2, 3]),
                "statistic": {"name": "sum-sumsq", "components": ef["T"]},
                "grid": _grid("scales", ["1/2", 1, "3/2", 2, 3]),
                "corpus": _corpus("ex46-corpus", _normal_points(2, 47)),
                "factorization": {
                    "g": "exp(x[0]/theta[0] - x[1]/(2*theta[0]^2) - 2*log(theta[0]))",
                    "h": "exp(-1)/(2*pi)",
                },
            },
            {"statistic": "verified_on_probe", "mutant": "inconclusive"},
        )
    )

    gamma = "(4/pi)*theta[0]^3 * x[0]^2*x[1]^2 * exp(-theta[0]*(x[0]^2+x[1]^2))"
    add(
        Fixture(
            "modified",
            "Density vanishing on the axes: modified sum of squares versus the raw one",
            "m31",
            {
                "model": {"name": "axis-vanishing", "sample_dim": 2, "param_dim": 1, "density": gamma},
                "statistic": {
                    "name": "modified-sum-of-squares",
                    "components": ["ind(x[0]*x[1] == 0) + ind(x[0]*x[1] < 0 or x[0]*x[1] > 0)*(x[0]^2+x[1]^2)"],
                },
                "mutant": {"name": "raw-sum-of-squares", "components": ["x[0]^2+x[1]^2"]},
                "grid": _grid("scales", ["1/2", 1, "3/2", 2, 3]),
                "corpus": _corpus("modified-corpus", _gamma_points()),
                "factorization": {"g": "(4/pi)*theta[0]^3*exp(-theta[0]*x[0])", "h": "x[0]^2*x[1]^2"},
            },
            {"statistic": "verified_on_probe", "mutant": "refuted"},
        )
    )

    add(
        Fixture(
            "normal",
            "i.i.d. N(theta, 1), n = 2, coordinate sum",
            "m31",
            {
                "model": {
                    "name": "normal-location-2",
                    "sample_dim": 2,
                    "param_dim": 1,
                    "density": "(2*pi)^(-n/2) * exp(-sum{i}(x[i]^2)/2 + theta[0]*sum{i}(x[i]) - n*theta[0]^2/2)",
                },
                "statistic": {"name": "sum", "components": ["sum{i}(x[i])"]},
                "mutant": {"name": "sum-and-first", "components": ["sum{i}(x[i])", "x[0]"]},
                "grid": _grid("integers", [-1, 0, 1, 2]),
                "corpus": _corpus("normal-corpus", _normal_points(2, 48)),
                "factorization": {
                    "g": "exp(theta[0]*x[0] - 2*theta[0]^2/2)",
                    "h": "(2*pi)^(-n/2) * exp(-sum{i}(x[i]^2)/2)",
                },
            },
            {"statistic": "verified_on_probe", "mutant": "refuted"},
        )
    )

    fourpt = (
        "theta[0]/3*ind(x[0] == 1) + 2*theta[0]/3*ind(x[0] == 2)"
        " + (1-theta[0])/3*ind(x[0] == 3) + 2*(1-theta[0])/3*ind(x[0] == 4)"
    )
    add(
        Fixture(
            "fourpoint",
            "Four-point model with masses theta/3, 2theta/3, (1-theta)/3, 2(1-theta)/3",
            "m31",
            {
                "model": {
                    "name": "four-point",
                    "sample_dim": 1,
                    "param_dim": 1,
                    "measure": "counting",
                    "density": fourpt,
                    "smoke": {"theta": [["1/4"], ["1/2"], ["3/4"]], "x": [[1], [2], [3], [4]]},
                },
                "statistic": {"name": "indicator-12", "components": ["ind(x[0] <= 2)"], "tolerance": 0},
                "mutant": {"name": "identity", "components": ["ind(x[0] <= 2)", "x[0]"], "tolerance": 0},
                "grid": _grid("quarters", ["1/4", "1/2", "3/4"]),
                "corpus": _corpus("four-point", [(1,), (2,), (3,), (4,)]),
                "factorization": {
                    "g": "(1-theta[0])*ind(x[0] == 0) + theta[0]*ind(x[0] == 1)",
                    "h": "ind(x[0] == 1 or x[0] == 3)/3 + 2*ind(x[0] == 2 or x[0] == 4)/3",
                },
            },
            {"statistic": "verified_on_probe", "mutant": "refuted"},
        )
    )
    return out


FIXTURES: dict[str, Fixture] = _build()


def get(name: str) -> Fixture:
    try:
        return FIXTURES[name]
    except KeyError:
        raise SpecError(f"unknown fixture {name!r}; available: {', '.join(sorted(FIXTURES))}") from None


@cache
def load(name: str) -> LoadedFixture:
    fx = get(name)
    d = fx.documents
    expfam = load_expfam(d["expfam"]) if "expfam" in d else None
    model = load_model(d["model"]) if "model" in d else expfam_model(expfam, fx.name)
    stat = load_statistic(d["statistic"], model.sample_dim) if "statistic" in d else None
    mutant = load_statistic(d["mutant"], model.sample_dim) if "mutant" in d else None
    fac = mfac = None
    if "factorization" in d:
        fac = load_factorization(d["factorization"], model, stat)
        if mutant is not None:
            mfac = load_factorization(d["factorization"], model, mutant)
    return LoadedFixture(
        fixture=fx,
        model=model,
        statistic=stat,
        mutant=mutant,
        grid=load_grid(d["grid"]),
        corpus=load_corpus(d["corpus"]) if "corpus" in d else None,
        probe=load_grid(d["probe"]) if "probe" in d else None,
        factorization=fac,
        mutant_factorization=mfac,
        expfam=expfam,
        expfam_mutant=load_expfam(d["expfam_mutant"]) if "expfam_mutant" in d else None,
    )


def export(name: str, directory: str | Path) -> list[Path]:
    """Write a fixture's documents as ``<directory>/<name>/<kind>.json``."""
    target = Path(directory) / name
    target.mkdir(parents=True, exist_ok=True)
    written = []
    for kind, doc in sorted(get(name).documents.items()):
        path = target / f"{kind}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    return written
