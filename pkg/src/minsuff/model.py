"""Models, parameter grids, corpora and statistics, plus their JSON loaders."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Any, Mapping, Sequence

import jsonschema

from .expr import (
    Expr,
    ExprError,
    NegativeDensityError,
    StatisticSpec,
    evaluate,
    evaluate_log,
    parse,
    parse_statistic,
)

__all__ = [
    "Corpus",
    "DimensionError",
    "EvaluationError",
    "Model",
    "Override",
    "ParamGrid",
    "SpecError",
    "Statistic",
    "apply_statistic",
    "load_corpus",
    "load_grid",
    "load_model",
    "load_statistic",
    "log_density",
    "parse_number",
    "statistic_values_equal",
]

Vector = tuple[float, ...]


class SpecError(ValueError):
    """Malformed or inconsistent input document."""


class DimensionError(SpecError):
    pass


class EvaluationError(ArithmeticError):
    """A density evaluated to NaN or a negative value."""


def parse_number(value: Any) -> tuple[float, Fraction | float]:
    """Read a scalar given as a JSON number, a ``"p/q"`` string, or a constant
    expression such as ``"-sqrt(2)"``.  Returns the float and an exact key
    used for duplicate detection.
    """
    if isinstance(value, bool):
        raise SpecError(f"not a number: {value!r}")
    if isinstance(value, int):
        return float(value), Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise SpecError(f"non-finite number: {value!r}")
        return value, Fraction(value)
    if isinstance(value, str):
        try:
            q = Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            pass
        else:
            return float(q), q
        try:
            e = parse(value, 0, 0)
        except ExprError as err:
            raise SpecError(f"cannot read number {value!r}: {err}") from None
        v = evaluate(e, (), ())
        if not math.isfinite(v):
            raise SpecError(f"constant {value!r} is not finite")
        return v, v
    raise SpecError(f"not a number: {value!r}")


def _vector(values: Any, what: str) -> tuple[Vector, tuple]:
    if not isinstance(values, (list, tuple)) or not values:
        raise SpecError(f"{what} must be a non-empty list")
    pairs = [parse_number(v) for v in values]
    return tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)


def _load_doc(doc: str | bytes | Mapping) -> Any:
    if isinstance(doc, (str, bytes)):
        try:
            return json.loads(doc)
        except json.JSONDecodeError as err:
            raise SpecError(f"malformed JSON: {err}") from None
    return doc


def _validate(doc: Any, schema: dict, what: str) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SpecError(f"{what} schema violation at {where}: {err.message}") from None


_NUMBER = {"anyOf": [{"type": "number"}, {"type": "string"}]}
_VECTOR = {"type": "array", "items": _NUMBER, "minItems": 1}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["name", "sample_dim", "param_dim", "density"],
    "properties": {
        "name": {"type": "string"},
        "sample_dim": {"type": "integer", "minimum": 1},
        "param_dim": {"type": "integer", "minimum": 1},
        "measure": {"enum": ["lebesgue", "counting"]},
        "density": {"type": "string", "minLength": 1},
        "overrides": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["theta", "x", "value"],
                "properties": {"theta": _VECTOR, "x": _VECTOR, "value": {"type": "number", "minimum": 0}},
            },
        },
        "smoke": {
            "type": "object",
            "required": ["theta", "x"],
            "properties": {
                "theta": {"type": "array", "items": _VECTOR, "minItems": 1},
                "x": {"type": "array", "items": _VECTOR, "minItems": 1},
            },
        },
    },
}

STATISTIC_SCHEMA = {
    "type": "object",
    "required": ["name"],
    "properties": {
        "name": {"type": "string"},
        "components": {"type": "array", "items": {"type": "string"}},
        "sorted": {"type": "array", "items": {"type": "string"}},
        "tolerance": {"type": "number", "minimum": 0},
    },
}

POINTS_SCHEMA = {
    "type": "object",
    "required": ["points"],
    "properties": {
        "label": {"type": "string"},
        "points": {"type": "array", "items": _VECTOR, "minItems": 1},
    },
}


@dataclass(frozen=True)
class Override:
    theta: Vector
    x: Vector
    value: float


@dataclass(frozen=True)
class Model:
    """A dominated family given by a density expression."""

    name: str
    sample_dim: int
    param_dim: int
    density: Expr
    measure_tag: str = "lebesgue"
    version_overrides: tuple[Override, ...] = ()

    @cached_property
    def _override_table(self) -> dict[tuple[Vector, Vector], float]:
        return {(o.theta, o.x): o.value for o in self.version_overrides}

    def without_overrides(self) -> Model:
        return replace(self, version_overrides=())


def log_density(m: Model, theta: Sequence[float], x: Sequence[float]) -> float:
    """Log of the density version held by ``m`` at ``(theta, x)``; ``-inf`` for 0."""
    if len(theta) != m.param_dim or len(x) != m.sample_dim:
        raise DimensionError(
            f"model {m.name!r} expects theta of length {m.param_dim} and x of length {m.sample_dim}"
        )
    theta = tuple(float(t) for t in theta)
    x = tuple(float(v) for v in x)
    if m.version_overrides:
        hit = m._override_table.get((theta, x))
        if hit is not None:
            return math.log(hit) if hit > 0 else float("-inf")
    try:
        value = evaluate_log(m.density, x, theta)
    except NegativeDensityError as err:
        raise EvaluationError(f"model {m.name!r}: {err}") from None
    if value != value:
        raise EvaluationError(f"model {m.name!r}: density is NaN at x={list(x)}, theta={list(theta)}")
    return value


def _default_smoke(sample_dim: int, param_dim: int) -> tuple[list[Vector], list[Vector]]:
    # deterministic, spread over [-2, 2] for x and (0, 1] for theta
    xs = [
        tuple(round(((3 * k + 5 * j) % 9) / 2 - 2, 3) for j in range(sample_dim)) for k in range(8)
    ]
    thetas = [tuple(0.125 * (1 + (k + 3 * j) % 8) for j in range(param_dim)) for k in range(8)]
    return xs, thetas


def load_model(spec_document: str | bytes | Mapping) -> Model:
    doc = _load_doc(spec_document)
    _validate(doc, MODEL_SCHEMA, "model")
    n, p = doc["sample_dim"], doc["param_dim"]
    try:
        density = parse(doc["density"], n, p)
    except ExprError as err:
        raise SpecError(f"model density: {err}") from None
    overrides = []
    for o in doc.get("overrides", ()):
        theta, _ = _vector(o["theta"], "override theta")
        x, _ = _vector(o["x"], "override x")
        if len(theta) != p or len(x) != n:
            raise DimensionError("override dimensions do not match the model")
        overrides.append(Override(theta, x, float(o["value"])))
    model = Model(
        name=doc["name"],
        sample_dim=n,
        param_dim=p,
        density=density,
        measure_tag=doc.get("measure", "lebesgue"),
        version_overrides=tuple(overrides),
    )
    if "smoke" in doc:
        xs = [_vector(v, "smoke x")[0] for v in doc["smoke"]["x"]]
        thetas = [_vector(v, "smoke theta")[0] for v in doc["smoke"]["theta"]]
    else:
        xs, thetas = _default_smoke(n, p)
    for x in xs:
        for theta in thetas:
            if len(x) != n or len(theta) != p:
                raise DimensionError("smoke grid dimensions do not match the model")
            try:
                value = log_density(model, theta, x)
            except EvaluationError as err:
                raise SpecError(f"density check failed: {err}") from None
            if value == float("inf"):
                raise SpecError(f"density is infinite at smoke point x={list(x)}, theta={list(theta)}")
    return model


@dataclass(frozen=True)
class ParamGrid:
    """Finite ordered list of distinct parameter points."""

    points: tuple[Vector, ...]
    label: str = "grid"
    _keys: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not self.points:
            raise SpecError("a parameter grid needs at least one point")
        keys = self._keys or tuple(tuple(Fraction(v) for v in p) for p in self.points)
        if len(set(keys)) != len(keys):
            raise SpecError(f"grid {self.label!r} has repeated points")
        if len({len(p) for p in self.points}) != 1:
            raise DimensionError(f"grid {self.label!r} mixes parameter dimensions")

    @classmethod
    def of(cls, values: Sequence, label: str = "grid") -> ParamGrid:
        """Build from scalars or vectors, given as numbers or strings."""
        points, keys = [], []
        for v in values:
            pt, key = _vector(v if isinstance(v, (list, tuple)) else [v], "grid point")
            points.append(pt)
            keys.append(key)
        return cls(tuple(points), label, tuple(keys))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def union(self, other: ParamGrid, label: str | None = None) -> ParamGrid:
        seen = set(self.points)
        extra = tuple(p for p in other.points if p not in seen)
        return ParamGrid(self.points + extra, label or f"{self.label}+{other.label}")

    def without(self, drop, label: str | None = None) -> ParamGrid:
        kept = tuple(p for p in self.points if not drop(p))
        return ParamGrid(kept, label or self.label)


@dataclass(frozen=True)
class Corpus:
    points: tuple[Vector, ...]
    label: str = "corpus"

    def __post_init__(self):
        if not self.points:
            raise SpecError("a corpus needs at least one point")
        if len({len(p) for p in self.points}) != 1:
            raise DimensionError(f"corpus {self.label!r} mixes sample dimensions")

    @classmethod
    def of(cls, values: Sequence, label: str = "corpus") -> Corpus:
        return cls(tuple(_vector(v, "corpus point")[0] for v in values), label)

    @property
    def sample_dim(self) -> int:
        return len(self.points[0])

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def _load_points(doc, what):
    doc = _load_doc(doc)
    _validate(doc, POINTS_SCHEMA, what)
    return doc["points"], doc.get("label", what)


def load_grid(document: str | bytes | Mapping) -> ParamGrid:
    points, label = _load_points(document, "grid")
    return ParamGrid.of(points, label)


def load_corpus(document: str | bytes | Mapping) -> Corpus:
    points, label = _load_points(document, "corpus")
    return Corpus.of(points, label)


@dataclass(frozen=True)
class Statistic:
    name: str
    spec: StatisticSpec
    codomain_dim: int
    equality_tolerance: float = 1e-12

    def __post_init__(self):
        if self.equality_tolerance < 0:
            raise SpecError("equality tolerance must be non-negative")

    @classmethod
    def build(
        cls,
        name: str,
        components: Sequence[str] = (),
        sorted_exprs: Sequence[str] = (),
        sample_dim: int = 1,
        tolerance: float = 1e-12,
    ) -> Statistic:
        try:
            spec = parse_statistic(components, sorted_exprs, sample_dim)
        except ExprError as err:
            raise SpecError(f"statistic {name!r}: {err}") from None
        return cls(name, spec, spec.output_dim(sample_dim), tolerance)

    def __call__(self, x: Sequence[float]) -> Vector:
        return self.spec(x)


def load_statistic(document: str | bytes | Mapping, sample_dim: int) -> Statistic:
    doc = _load_doc(document)
    _validate(doc, STATISTIC_SCHEMA, "statistic")
    if not doc.get("components") and not doc.get("sorted"):
        raise SpecError("statistic needs at least one component")
    return Statistic.build(
        doc["name"],
        doc.get("components", ()),
        doc.get("sorted", ()),
        sample_dim,
        doc.get("tolerance", 1e-12),
    )


def apply_statistic(s: Statistic, x: Sequence[float]) -> Vector:
    if s.spec.sorted:
        expected = s.codomain_dim - len(s.spec.components)
        if expected != len(x) * len(s.spec.sorted):
            raise DimensionError(f"statistic {s.name!r} was built for another sample dimension")
    return s(tuple(float(v) for v in x))


def statistic_values_equal(a: Sequence[float], b: Sequence[float], tol: float) -> bool:
    """Componentwise ``|a-b| <= tol * max(1, |a|, |b|)``; ``tol == 0`` is exact."""
    if len(a) != len(b):
        return False
    for u, v in zip(a, b):
        if u == v:
            continue
        if tol == 0 or not (math.isfinite(u) and math.isfinite(v)):
            return False
        if abs(u - v) > tol * max(1.0, abs(u), abs(v)):
            return False
    return True
