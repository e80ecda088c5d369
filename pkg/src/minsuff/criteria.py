"""Checkable minimality criteria over finite probes.

Every check returns a :class:`Verdict`.  ``refuted`` carries concrete
witnesses; ``verified_on_probe`` is relative to the supplied grids and corpora
(except :func:`check_method_33`, whose full-rank witness is a certificate);
``inconclusive`` means a hypothesis of the method could not be established.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import Expr, ExprError, NegativeDensityError, evaluate, evaluate_log, free_symbols, parse
from .model import (
    Corpus,
    Model,
    ParamGrid,
    SpecError,
    Statistic,
    Vector,
    _load_doc,
    _validate,
    apply_statistic,
    log_density,
    statistic_values_equal,
)
from .ratio import DEFAULT_TOL, log_table, parallel_map, proportional_from_logs

__all__ = [
    "CERTIFIED_BY_USER",
    "ExpFamSpec",
    "Factorization",
    "Status",
    "Verdict",
    "check_factorization",
    "check_method_31",
    "check_method_32",
    "check_method_33",
    "expfam_model",
    "load_expfam",
    "load_factorization",
]

NEG_INF = float("-inf")
MAX_WITNESSES = 25


class Status(str, enum.Enum):
    REFUTED = "refuted"
    VERIFIED = "verified_on_probe"
    INCONCLUSIVE = "inconclusive"


@dataclass
class Verdict:
    status: Status
    witnesses: list[dict] = field(default_factory=list)
    narrative: str = ""

    def __post_init__(self):
        if self.status is Status.REFUTED and not self.witnesses:
            raise ValueError("a refutation needs at least one witness")

    def to_json(self) -> dict:
        return {"status": self.status.value, "narrative": self.narrative, "witnesses": self.witnesses}


# --------------------------------------------------------------------------
# factorization


@dataclass(frozen=True)
class Factorization:
    """``f_theta(x) = g(T(x), theta) * h(x)``.

    ``g`` reads the statistic value as its ``x`` vector; ``h`` reads the
    sample.  Grid and corpus default to those of the check that uses it.
    """

    g: Expr
    h: Expr
    grid: ParamGrid | None = None
    corpus: Corpus | None = None
    tol: float = DEFAULT_TOL

    @classmethod
    def build(cls, g: str, h: str, model: Model, statistic: Statistic, **kw) -> Factorization:
        try:
            g_expr = parse(g, statistic.codomain_dim, model.param_dim)
            h_expr = parse(h, model.sample_dim, 0)
        except ExprError as err:
            raise SpecError(f"factorization: {err}") from None
        return cls(g_expr, h_expr, **kw)


CERTIFIED_BY_USER = "certified_by_user"


FACTORIZATION_SCHEMA = {
    "type": "object",
    "required": ["g", "h"],
    "properties": {"g": {"type": "string"}, "h": {"type": "string"}, "tol": {"type": "number", "exclusiveMinimum": 0}},
}


def load_factorization(document, model: Model, statistic: Statistic) -> Factorization:
    doc = _load_doc(document)
    _validate(doc, FACTORIZATION_SCHEMA, "factorization")
    return Factorization.build(doc["g"], doc["h"], model, statistic, tol=doc.get("tol", DEFAULT_TOL))


def _fmt_point(p: Sequence[float]) -> list[float]:
    return [float(v) for v in p]


def _log_factor(e: Expr, x, theta) -> float:
    # negative or NaN factors are reported as NaN, never raised
    try:
        return evaluate_log(e, x, theta)
    except NegativeDensityError:
        return float("nan")


def check_factorization(
    m: Model,
    s: Statistic,
    g: Expr,
    h: Expr,
    grid: ParamGrid,
    corpus: Corpus,
    tol: float = DEFAULT_TOL,
) -> Verdict:
    if corpus.sample_dim != m.sample_dim:
        raise SpecError("corpus and model sample dimensions differ")
    if len(grid.points[0]) != m.param_dim:
        raise SpecError("grid and model parameter dimensions differ")
    witnesses = []
    checked = 0
    for x in corpus.points:
        t = apply_statistic(s, x)
        if len(t) != s.codomain_dim:
            raise SpecError("statistic value has the wrong length for g")
        log_h = _log_factor(h, x, ())
        for theta in grid.points:
            checked += 1
            lf = log_density(m, theta, x)
            rhs = NEG_INF if log_h == NEG_INF else _log_factor(g, t, theta) + log_h
            if rhs != rhs:
                witnesses.append({"kind": "invalid_factor", "theta": _fmt_point(theta), "x": _fmt_point(x)})
            elif (lf == NEG_INF) != (rhs == NEG_INF):
                witnesses.append(
                    {"kind": "zero_pattern", "theta": _fmt_point(theta), "x": _fmt_point(x), "log_f": lf, "log_gh": rhs}
                )
            elif lf != NEG_INF and not abs(lf - rhs) <= tol:
                witnesses.append(
                    {"kind": "mismatch", "theta": _fmt_point(theta), "x": _fmt_point(x), "log_f": lf, "log_gh": rhs}
                )
    if witnesses:
        return Verdict(
            Status.REFUTED,
            witnesses[:MAX_WITNESSES],
            f"factorization fails at {len(witnesses)} of {checked} (theta, x) cells",
        )
    return Verdict(
        Status.VERIFIED,
        [{"probe": {"grid": grid.label, "grid_size": len(grid), "corpus": corpus.label, "corpus_size": len(corpus)}}],
        f"log f = log g(T) + log h within {tol:g} on all {checked} cells",
    )


# --------------------------------------------------------------------------
# pair tests shared by check_method_31 and check_method_32


def _pair_verdicts(m: Model, grid: ParamGrid, corpus: Corpus, tol: float):
    table = log_table(m, grid, corpus.points)
    n = len(corpus)
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    verdicts = parallel_map(lambda ij: proportional_from_logs(table[ij[0]], table[ij[1]], grid.points, tol), pairs)
    return pairs, verdicts


def _pair_witness(corpus, values, i, j, verdict, kind):
    return {
        "kind": kind,
        "x": _fmt_point(corpus.points[i]),
        "y": _fmt_point(corpus.points[j]),
        "index": [i, j],
        "T_x": list(values[i]),
        "T_y": list(values[j]),
        "proportionality": verdict.to_json(),
    }


def _probe_summary(theta0: ParamGrid, corpus: Corpus, in_d: int) -> dict:
    return {
        "probe": {
            "theta0": theta0.label,
            "theta0_size": len(theta0),
            "corpus": corpus.label,
            "corpus_size": len(corpus),
            "ordered_pairs_in_D": in_d,
        }
    }


def check_method_31(
    m: Model,
    s: Statistic,
    theta0: ParamGrid,
    corpus: Corpus,
    tol: float = DEFAULT_TOL,
    sufficiency: str | Factorization | None = None,
) -> Verdict:
    """Pair test: ``y in D(x, theta0)`` must imply ``T(x) == T(y)``.

    Sufficiency of ``s`` is a hypothesis: either the caller certifies it
    (``sufficiency="certified_by_user"``) or a :class:`Factorization` is
    checked first.  Without it the verdict is inconclusive.
    """
    if sufficiency is None:
        return Verdict(
            Status.INCONCLUSIVE,
            [{"kind": "missing_hypothesis", "hypothesis": "sufficiency"}],
            "no sufficiency evidence supplied; the pair test alone does not establish minimality",
        )
    suff_finding: dict
    if isinstance(sufficiency, Factorization):
        fac = check_factorization(
            m, s, sufficiency.g, sufficiency.h, sufficiency.grid or theta0, sufficiency.corpus or corpus, sufficiency.tol
        )
        if fac.status is not Status.VERIFIED:
            return Verdict(
                Status.INCONCLUSIVE,
                [{"kind": "sufficiency_not_established", "factorization": fac.to_json()}],
                "the supplied factorization does not hold on the probe, so sufficiency is unestablished",
            )
        suff_finding = {"sufficiency": "validated_by_factorization", "factorization": fac.narrative}
    elif sufficiency == CERTIFIED_BY_USER:
        suff_finding = {"sufficiency": CERTIFIED_BY_USER}
    else:
        raise ValueError(f"unknown sufficiency evidence {sufficiency!r}")

    values = [apply_statistic(s, x) for x in corpus.points]
    pairs, verdicts = _pair_verdicts(m, theta0, corpus, tol)
    witnesses = []
    in_d = 0
    for (i, j), v in zip(pairs, verdicts):
        if not v.in_D:
            continue
        in_d += 1
        if not statistic_values_equal(values[i], values[j], s.equality_tolerance):
            witnesses.append(_pair_witness(corpus, values, i, j, v, "in_D_but_T_differs"))
    if witnesses:
        return Verdict(
            Status.REFUTED,
            witnesses[:MAX_WITNESSES],
            f"{len(witnesses)} ordered pair(s) lie in D(x, theta0) but have different statistic values",
        )
    summary = _probe_summary(theta0, corpus, in_d)
    summary.update(suff_finding)
    return Verdict(
        Status.VERIFIED,
        [summary],
        "every proportional pair on the corpus shares its statistic value",
    )


def _nearest(theta0: ParamGrid, theta: Vector, k: int) -> list[tuple[float, Vector]]:
    dists = sorted(
        ((math.dist(p, theta), idx, p) for idx, p in enumerate(theta0.points) if tuple(p) != tuple(theta)),
    )
    return [(d, p) for d, _, p in dists[:k]]


def check_method_32(
    m: Model,
    s: Statistic,
    theta0: ParamGrid,
    theta_probe: ParamGrid | None,
    corpus: Corpus,
    tol: float = DEFAULT_TOL,
    neighbor_count: int = 3,
    radius: float = 0.5,
    lipschitz: float = 10.0,
) -> Verdict:
    """Approximation phase followed by the biconditional pair phase.

    (a) For each probe theta, the ``neighbor_count`` nearest ``theta0`` points
    (farthest first) must approach ``log f_theta(x)`` on every corpus point:
    each log-density error is at most ``tol + lipschitz * distance``, and a
    zero density must be matched by zeros along the sequence.
    (b) For every ordered corpus pair, equal statistic values iff
    proportional over ``theta0`` plus the probe.
    """
    if neighbor_count < 1:
        raise ValueError("neighbor_count must be positive")
    probe_points = theta_probe.points if theta_probe is not None else ()
    approx_failures = []
    sequences = []
    for theta in probe_points:
        seq = _nearest(theta0, theta, neighbor_count)
        if not seq or seq[0][0] > radius:
            nearest = seq[0][0] if seq else None
            return Verdict(
                Status.INCONCLUSIVE,
                [{"kind": "sparse_theta0", "theta": list(theta), "nearest_distance": nearest, "radius": radius}],
                "theta0 has no point within the configured radius of a probe parameter",
            )
        seq = seq[::-1]
        sequences.append({"theta": list(theta), "sequence": [list(p) for _, p in seq], "distances": [d for d, _ in seq]})
        for x in corpus.points:
            target = log_density(m, theta, x)
            values = [log_density(m, p, x) for _, p in seq]
            if target == NEG_INF:
                if values[-1] != NEG_INF:
                    approx_failures.append(
                        {"kind": "zero_branch", "theta": list(theta), "x": _fmt_point(x), "sequence_log_f": values}
                    )
                continue
            errors = [abs(v - target) for v in values]
            bounds = [tol + lipschitz * d for d, _ in seq]
            if any(not e <= b for e, b in zip(errors, bounds)):
                approx_failures.append(
                    {
                        "kind": "not_approaching",
                        "theta": list(theta),
                        "x": _fmt_point(x),
                        "log_f": target,
                        "errors": errors,
                        "bounds": bounds,
                    }
                )
    if approx_failures:
        return Verdict(
            Status.INCONCLUSIVE,
            approx_failures[:MAX_WITNESSES],
            "the nearest-neighbour sequences from theta0 do not approach the probe densities on the corpus",
        )

    full = theta0.union(theta_probe) if theta_probe is not None else theta0
    values = [apply_statistic(s, x) for x in corpus.points]
    pairs, verdicts = _pair_verdicts(m, full, corpus, tol)
    witnesses = []
    in_d = 0
    for (i, j), v in zip(pairs, verdicts):
        same = statistic_values_equal(values[i], values[j], s.equality_tolerance)
        in_d += v.in_D
        if v.in_D and not same:
            witnesses.append(_pair_witness(corpus, values, i, j, v, "in_D_but_T_differs"))
        elif same and not v.in_D:
            witnesses.append(_pair_witness(corpus, values, i, j, v, "T_equal_but_not_in_D"))
    if witnesses:
        return Verdict(
            Status.REFUTED,
            witnesses[:MAX_WITNESSES],
            f"the biconditional T(x)=T(y) <=> y in D(x) fails for {len(witnesses)} ordered pair(s)",
        )
    summary = _probe_summary(full, corpus, in_d)
    summary["approximation"] = {
        "neighbor_count": neighbor_count,
        "radius": radius,
        "lipschitz": lipschitz,
        "sequences": sequences,
        "scope": "pointwise limits checked on the corpus only, along nearest-neighbour sequences",
    }
    return Verdict(
        Status.VERIFIED,
        [summary],
        "approximation holds along nearest-neighbour sequences and the biconditional holds on every pair",
    )


# --------------------------------------------------------------------------
# exponential families


@dataclass(frozen=True)
class ExpFamSpec:
    """``f_theta(x) = exp(sum_i eta_i(theta) T_i(x) - B(theta)) h(x)``."""

    k: int
    eta: tuple[Expr, ...]
    B: Expr
    T_components: tuple[Expr, ...]
    h: Expr
    sample_dim: int = 1
    param_dim: int = 1

    def __post_init__(self):
        if self.k < 1 or len(self.eta) != self.k or len(self.T_components) != self.k:
            raise SpecError("eta and T must both have k entries")
        for e in (*self.eta, self.B):
            if "x" in free_symbols(e):
                raise SpecError("eta and B must not read the sample")
        for e in (*self.T_components, self.h):
            if "theta" in free_symbols(e):
                raise SpecError("T and h must not read the parameter")

    @classmethod
    def build(cls, eta, B, T, h, sample_dim=1, param_dim=1) -> ExpFamSpec:
        try:
            return cls(
                len(eta),
                tuple(parse(e, sample_dim, param_dim) for e in eta),
                parse(B, sample_dim, param_dim),
                tuple(parse(t, sample_dim, param_dim) for t in T),
                parse(h, sample_dim, param_dim),
                sample_dim,
                param_dim,
            )
        except ExprError as err:
            raise SpecError(f"exponential family: {err}") from None

    def eta_row(self, theta: Sequence[float]) -> list[float]:
        return [evaluate(e, (0.0,) * self.sample_dim, theta) for e in self.eta]


EXPFAM_SCHEMA = {
    "type": "object",
    "required": ["k", "eta", "B", "T", "h"],
    "properties": {
        "k": {"type": "integer", "minimum": 1},
        "eta": {"type": "array", "items": {"type": "string"}},
        "B": {"type": "string"},
        "T": {"type": "array", "items": {"type": "string"}},
        "h": {"type": "string"},
        "sample_dim": {"type": "integer", "minimum": 1},
        "param_dim": {"type": "integer", "minimum": 1},
    },
}


def load_expfam(document) -> ExpFamSpec:
    doc = _load_doc(document)
    _validate(doc, EXPFAM_SCHEMA, "exponential family")
    ef = ExpFamSpec.build(
        doc["eta"], doc["B"], doc["T"], doc["h"], doc.get("sample_dim", 1), doc.get("param_dim", 1)
    )
    if ef.k != doc["k"]:
        raise SpecError(f"k={doc['k']} but {ef.k} eta entries were given")
    return ef


def expfam_model(ef: ExpFamSpec, name: str = "expfam") -> Model:
    """The density ``exp(sum eta_i T_i - B) * h`` as a :class:`Model`."""
    linear = Expr("mul", (ef.eta[0], ef.T_components[0]))
    for eta, t in zip(ef.eta[1:], ef.T_components[1:]):
        linear = Expr("add", (linear, Expr("mul", (eta, t))))
    density = Expr("mul", (Expr("func", (Expr("sub", (linear, ef.B)),), value="exp"), ef.h))
    return Model(name, ef.sample_dim, ef.param_dim, density)


def _pivoted_rank(a: np.ndarray, pivot_tol: float) -> tuple[int, list[int]]:
    """Gaussian elimination with complete pivoting; returns rank and pivot rows."""
    work = a.astype(float).copy()
    rows = list(range(work.shape[0]))
    rank = 0
    for col in range(work.shape[1]):
        sub = np.abs(work[rank:, col:])
        if sub.size == 0:
            break
        r, c = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[r, c] <= pivot_tol:
            break
        r += rank
        c += col
        work[[rank, r]] = work[[r, rank]]
        rows[rank], rows[r] = rows[r], rows[rank]
        work[:, [col, c]] = work[:, [c, col]]
        pivot = work[rank, col]
        work[rank + 1 :, col:] -= np.outer(work[rank + 1 :, col] / pivot, work[rank, col:])
        rank += 1
    return rank, rows[:rank]


def _determinant(a: np.ndarray) -> float:
    """LU with partial pivoting."""
    work = a.astype(float).copy()
    n = work.shape[0]
    det = 1.0
    for col in range(n):
        r = col + int(np.argmax(np.abs(work[col:, col])))
        if work[r, col] == 0.0:
            return 0.0
        if r != col:
            work[[col, r]] = work[[r, col]]
            det = -det
        det *= work[col, col]
        work[col + 1 :, col:] -= np.outer(work[col + 1 :, col] / work[col, col], work[col, col:])
    return det


def check_method_33(ef: ExpFamSpec, probe: ParamGrid, pivot_tol: float | None = None) -> Verdict:
    """Affine independence of ``1, eta_1, ..., eta_k`` via a full-rank probe witness.

    A rank of ``k + 1`` on the probe matrix proves the condition for the
    whole parameter space, so ``verified_on_probe`` is a certificate here.
    A deficient rank proves nothing and is reported as inconclusive.
    """
    if len(probe) < ef.k + 1:
        raise SpecError(f"probe needs at least k+1 = {ef.k + 1} points, got {len(probe)}")
    matrix = np.array([[1.0, *ef.eta_row(theta)] for theta in probe.points])
    if not np.all(np.isfinite(matrix)):
        raise SpecError("eta is not finite on the probe")
    scale = float(np.max(np.linalg.norm(matrix, axis=0)))
    threshold = pivot_tol if pivot_tol is not None else 1e-10 * scale
    rank, rows = _pivoted_rank(matrix, threshold)
    summary = {
        "probe": probe.label,
        "probe_size": len(probe),
        "rank": rank,
        "required_rank": ef.k + 1,
        "pivot_threshold": threshold,
    }
    if rank < ef.k + 1:
        return Verdict(
            Status.INCONCLUSIVE,
            [summary],
            "the probe matrix is rank deficient; a finite probe cannot prove affine dependence",
        )
    chosen = sorted(rows)
    sub = matrix[chosen]
    det = _determinant(sub)
    summary.update(
        {
            "witness_rows": chosen,
            "witness_thetas": [list(probe.points[i]) for i in chosen],
            "witness_matrix": sub.tolist(),
            "determinant": det,
            "determinant_magnitude": abs(det),
        }
    )
    return Verdict(
        Status.VERIFIED,
        [summary],
        "k+1 probe points give a nonsingular matrix, so no nontrivial affine relation holds on the parameter space",
    )
