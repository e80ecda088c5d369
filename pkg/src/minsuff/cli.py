"""``minsuff`` command line: load specs, run a check or demo, emit one report.

Exit codes: 0 verified on probe / demo reproduced, 1 refuted, 2 inconclusive,
3 input or spec error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import __version__, fixtures
from .criteria import (
    CERTIFIED_BY_USER,
    Status,
    Verdict,
    check_factorization,
    check_method_31,
    check_method_32,
    check_method_33,
    load_expfam,
    load_factorization,
)
from .expr import ExprError, evaluate_with_diagnostics
from .finite import demo_pfanzagl, load_finite_model, pfanzagl_model, qstr, tv_distance, tv_sequence
from .model import (
    EvaluationError,
    SpecError,
    _vector,
    apply_statistic,
    load_corpus,
    load_grid,
    load_model,
    load_statistic,
    log_density,
)
from .ratio import DEFAULT_TOL, refines, ratio_partition, statistic_partition
from .versions import demo_versions

EXIT_OK, EXIT_REFUTED, EXIT_INCONCLUSIVE, EXIT_INPUT = 0, 1, 2, 3
_STATUS_EXIT = {Status.VERIFIED: EXIT_OK, Status.REFUTED: EXIT_REFUTED, Status.INCONCLUSIVE: EXIT_INCONCLUSIVE}


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# JSON plumbing


def json_safe(obj):
    """Recursively convert to plain JSON: non-finite floats become strings."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return "NaN"
        if math.isinf(obj):
            return "Infinity" if obj > 0 else "-Infinity"
        return obj
    if isinstance(obj, Fraction):
        return qstr(obj)
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, Status):
        return obj.value
    return obj


def dumps(report: dict) -> str:
    return json.dumps(json_safe(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _digest(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


class Inputs:
    """Reads input files once and records a digest of each."""

    def __init__(self):
        self.echo: dict[str, dict] = {}

    def read(self, role: str, path: str) -> str:
        try:
            data = Path(path).read_bytes()
        except OSError as err:
            raise InputError(f"cannot read {role} file {path!r}: {err.strerror}") from None
        self.echo[role] = {"path": path, "digest": _digest(data)}
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError:
            raise InputError(f"{role} file {path!r} is not UTF-8") from None

    def fixture(self, name: str) -> fixtures.LoadedFixture:
        fx = fixtures.get(name)
        canon = json.dumps(fx.documents, sort_keys=True).encode()
        self.echo["fixture"] = {"name": name, "digest": _digest(canon)}
        return fixtures.load(name)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise InputError("missing required option(s): " + ", ".join("--" + n for n in missing))


# --------------------------------------------------------------------------
# loading shared inputs


def _load_common(args, inputs: Inputs, need_statistic=True):
    """Model, statistic, grid, corpus and factorization from files or a fixture."""
    if args.fixture:
        lf = inputs.fixture(args.fixture)
        stat = lf.mutant if args.mutant else lf.statistic
        fac = lf.mutant_factorization if args.mutant else lf.factorization
        if need_statistic and stat is None:
            raise InputError(f"fixture {args.fixture!r} has no statistic")
        return lf.model, stat, lf.grid, lf.corpus, fac, lf
    if args.mutant:
        raise InputError("--mutant applies only together with --fixture")
    _require(args, "model", "grid", "corpus", *(["statistic"] if need_statistic else []))
    model = load_model(inputs.read("model", args.model))
    stat = load_statistic(inputs.read("statistic", args.statistic), model.sample_dim) if args.statistic else None
    grid = load_grid(inputs.read("grid", args.grid))
    corpus = load_corpus(inputs.read("corpus", args.corpus))
    if corpus.sample_dim != model.sample_dim:
        raise SpecError(f"corpus points have length {corpus.sample_dim}, model expects {model.sample_dim}")
    fac = None
    if getattr(args, "factorization", None):
        fac = load_factorization(inputs.read("factorization", args.factorization), model, stat)
    return model, stat, grid, corpus, fac, None


def _verdict_result(v: Verdict) -> tuple[int, dict, list]:
    return _STATUS_EXIT[v.status], v.to_json(), v.witnesses


# --------------------------------------------------------------------------
# commands


def cmd_eval(args, inputs):
    _require(args, "model", "theta")
    model = load_model(inputs.read("model", args.model))
    theta = _vector(json.loads(args.theta), "theta")[0]
    if args.x is not None:
        points = [_vector(json.loads(args.x), "x")[0]]
    elif args.corpus:
        points = list(load_corpus(inputs.read("corpus", args.corpus)).points)
    else:
        raise InputError("give --x or --corpus")
    rows = []
    for x in points:
        ev = evaluate_with_diagnostics(model.density, x, theta)
        rows.append({"x": x, "density": ev.value, "log_density": log_density(model, theta, x), "nan": ev.nan})
    return EXIT_OK, {"status": "evaluated", "theta": theta}, rows


def cmd_partition(args, inputs):
    model, stat, grid, corpus, _, _ = _load_common(args, inputs, need_statistic=False)
    ratio = ratio_partition(model, grid, corpus, args.tol)
    findings = [{"kind": "ratio_partition", **ratio.to_json(corpus.points)}]
    verdict = {"status": "computed", "ratio_blocks": len(ratio.blocks)}
    if stat is not None:
        sp = statistic_partition(stat, corpus)
        findings.append({"kind": "statistic_partition", "statistic": stat.name, **sp.to_json(corpus.points)})
        verdict["ratio_refines_statistic"] = refines(ratio, sp)
        verdict["statistic_refines_ratio"] = refines(sp, ratio)
    return EXIT_OK, verdict, findings


def cmd_factorization(args, inputs):
    model, stat, grid, corpus, fac, _ = _load_common(args, inputs)
    if fac is None:
        raise InputError("check factorization needs --factorization (or a fixture that ships one)")
    return _verdict_result(check_factorization(model, stat, fac.g, fac.h, grid, corpus, args.tol))


def cmd_m31(args, inputs):
    model, stat, grid, corpus, fac, _ = _load_common(args, inputs)
    if args.certified:
        sufficiency = CERTIFIED_BY_USER
    else:
        sufficiency = fac
    return _verdict_result(check_method_31(model, stat, grid, corpus, args.tol, sufficiency))


def cmd_m32(args, inputs):
    model, stat, grid, corpus, _, lf = _load_common(args, inputs)
    if args.probe:
        probe = load_grid(inputs.read("probe", args.probe))
    elif lf is not None:
        probe = lf.probe
    else:
        probe = None
    v = check_method_32(
        model, stat, grid, probe, corpus, args.tol, args.neighbors, args.radius, args.lipschitz
    )
    return _verdict_result(v)


def cmd_m33(args, inputs):
    if args.fixture:
        lf = inputs.fixture(args.fixture)
        ef = lf.expfam_mutant if args.mutant else lf.expfam
        if ef is None:
            raise InputError(f"fixture {args.fixture!r} has no exponential-family form")
        probe = lf.probe
    else:
        _require(args, "expfam", "probe")
        ef = load_expfam(inputs.read("expfam", args.expfam))
        probe = None
    if args.probe:
        probe = load_grid(inputs.read("probe", args.probe))
    return _verdict_result(check_method_33(ef, probe, args.pivot_tol))


def _demo_exit(findings: dict) -> int:
    return EXIT_OK if findings["reproduced"] else EXIT_REFUTED


def cmd_pfanzagl(args, inputs):
    f = demo_pfanzagl(scale_by_four=args.scale_by_four)
    verdict = {"status": f["status"], "reproduced": f["reproduced"], "conclusion": f["conclusion"]}
    return _demo_exit(f), verdict, [f]


def cmd_versions(args, inputs):
    corpus = load_corpus(inputs.read("corpus", args.corpus)) if args.corpus else None
    theta0 = load_grid(inputs.read("theta0", args.theta0)) if args.theta0 else None
    f = demo_versions(args.n, corpus, theta0)
    verdict = {"status": f["status"], "reproduced": f["reproduced"], "scope": f["scope"]}
    return _demo_exit(f), verdict, [f]


def cmd_tv(args, inputs):
    fm = load_finite_model(inputs.read("finite", args.finite)) if args.finite else pfanzagl_model()
    if not args.to:
        raise InputError("give at least one parameter after --to")
    dists, monotone = tv_sequence(fm, args.theta, args.to)
    rows = [{"from": args.theta, "to": t, "distance": qstr(d)} for t, d in zip(args.to, dists)]
    verdict = {"status": "computed", "non_increasing": monotone, "model": fm.label}
    return EXIT_OK, verdict, rows


def cmd_fixtures_list(args, inputs):
    rows = [
        {"name": fx.name, "title": fx.title, "method": fx.method, "documents": sorted(fx.documents), "expected": fx.expected}
        for fx in fixtures.FIXTURES.values()
    ]
    return EXIT_OK, {"status": "listed", "count": len(rows)}, rows


def cmd_fixtures_export(args, inputs):
    names = [args.name] if args.name else sorted(fixtures.FIXTURES)
    rows = []
    for name in names:
        rows.append({"name": name, "files": [str(p) for p in fixtures.export(name, args.directory)]})
    return EXIT_OK, {"status": "exported", "count": len(rows)}, rows


# --------------------------------------------------------------------------
# argument parsing


def _output_options() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json", help="JSON report (default)")
    fmt.add_argument("--text", dest="format", action="store_const", const="text", help="short human-readable report")
    p.add_argument("--report", metavar="PATH", help="also write the JSON report to PATH")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="log-spread tolerance (default 1e-9)")
    return p


def _spec_options() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--model", metavar="FILE")
    p.add_argument("--statistic", metavar="FILE")
    p.add_argument("--grid", "--theta0", dest="grid", metavar="FILE", help="parameter grid (theta0)")
    p.add_argument("--corpus", metavar="FILE")
    p.add_argument("--fixture", metavar="NAME", help="use a shipped fixture instead of files")
    p.add_argument("--mutant", action="store_true", help="with --fixture: use the fixture's mutated statistic")
    return p


def build_parser() -> argparse.ArgumentParser:
    out, spec = _output_options(), _spec_options()
    parser = _Parser(prog="minsuff", description="Minimal-sufficiency verification toolkit.")
    parser.add_argument("--version", action="version", version=f"minsuff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", parents=[out], help="evaluate a model density")
    p.add_argument("--model", metavar="FILE")
    p.add_argument("--theta", metavar="JSON", help="parameter vector, e.g. '[0.5]'")
    p.add_argument("--x", metavar="JSON", help="sample vector, e.g. '[1, 2]'")
    p.add_argument("--corpus", metavar="FILE")
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("partition", parents=[out, spec], help="likelihood-ratio partition of a corpus")
    p.set_defaults(run=cmd_partition)

    check = sub.add_parser("check", help="run a criterion").add_subparsers(dest="method", required=True, parser_class=_Parser)
    p = check.add_parser("factorization", parents=[out, spec], help="validate f = g(T) h on grid x corpus")
    p.add_argument("--factorization", metavar="FILE")
    p.set_defaults(run=cmd_factorization)

    p = check.add_parser("m31", parents=[out, spec], help="pair test with a sufficiency hypothesis")
    suff = p.add_mutually_exclusive_group()
    suff.add_argument("--factorization", metavar="FILE", help="validate sufficiency by factorization first")
    suff.add_argument("--certified", action="store_true", help="sufficiency is certified by the user")
    p.set_defaults(run=cmd_m31)

    p = check.add_parser("m32", parents=[out, spec], help="approximation check plus biconditional")
    p.add_argument("--probe", metavar="FILE")
    p.add_argument("--neighbors", type=int, default=3)
    p.add_argument("--radius", type=float, default=0.5)
    p.add_argument("--lipschitz", type=float, default=10.0)
    p.set_defaults(run=cmd_m32)

    p = check.add_parser("m33", parents=[out], help="exponential-family affine independence")
    p.add_argument("--expfam", metavar="FILE")
    p.add_argument("--probe", metavar="FILE")
    p.add_argument("--pivot-tol", type=float, default=None)
    p.add_argument("--fixture", metavar="NAME")
    p.add_argument("--mutant", action="store_true")
    p.set_defaults(run=cmd_m33)

    demo = sub.add_parser("demo", help="reproduce a counterexample").add_subparsers(dest="demo", required=True, parser_class=_Parser)
    p = demo.add_parser("pfanzagl", parents=[out], help="four-point counterexample, exact")
    p.add_argument("--scale-by-four", action="store_true", help="also report densities w.r.t. normalized counting measure")
    p.set_defaults(run=cmd_pfanzagl)
    p = demo.add_parser("versions", parents=[out], help="density-version perturbation of N(theta,1)^n")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--corpus", metavar="FILE")
    p.add_argument("--theta0", metavar="FILE")
    p.set_defaults(run=cmd_versions)

    p = sub.add_parser("tv", parents=[out], help="exact total variation distances on a finite model")
    p.add_argument("--finite", metavar="FILE", help="finite model (default: the four-point model)")
    p.add_argument("theta", help="reference parameter, e.g. 1/4")
    p.add_argument("--to", nargs="+", default=[], metavar="THETA")
    p.set_defaults(run=cmd_tv)

    fx = sub.add_parser("fixtures", help="list or export shipped fixtures").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = fx.add_parser("list", parents=[out])
    p.set_defaults(run=cmd_fixtures_list)
    p = fx.add_parser("export", parents=[out])
    p.add_argument("directory")
    p.add_argument("--name")
    p.set_defaults(run=cmd_fixtures_export)
    return parser


def _command_string(args) -> str:
    parts = [args.command]
    for attr in ("method", "demo", "action"):
        if getattr(args, attr, None):
            parts.append(getattr(args, attr))
    return " ".join(parts)


def render_text(report: dict) -> str:
    verdict = report["verdict"]
    lines = [f"minsuff {report['command']}: {verdict.get('status')} (exit {report['exit_code']})"]
    for key in ("narrative", "conclusion", "scope"):
        if verdict.get(key):
            lines.append(f"  {verdict[key]}")
    if "error" in report:
        lines.append(f"  error: {report['error']}")
    for item in report["findings"][:5]:
        lines.append("  - " + json.dumps(json_safe(item), sort_keys=True)[:400])
    if len(report["findings"]) > 5:
        lines.append(f"  ... {len(report['findings']) - 5} more")
    return "\n".join(lines) + "\n"


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    start = time.perf_counter()
    inputs = Inputs()
    fmt, report_path = "json", None
    try:
        args = build_parser().parse_args(argv)
        fmt, report_path = args.format or "json", args.report
        if getattr(args, "tol", DEFAULT_TOL) <= 0:
            raise InputError("--tol must be positive")
        code, verdict, findings = args.run(args, inputs)
        command = _command_string(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (InputError, SpecError, ExprError, EvaluationError, ValueError) as err:
        code, command = EXIT_INPUT, " ".join(argv[:2])
        verdict, findings = {"status": "input_error"}, []
        message = str(err)
        print(f"minsuff: {message}", file=sys.stderr)
    report = {
        "tool_version": __version__,
        "command": command,
        "inputs": inputs.echo,
        "verdict": verdict,
        "findings": findings,
        "exit_code": code,
        "timing_ms": round((time.perf_counter() - start) * 1000, 3),
    }
    if code == EXIT_INPUT:
        report["error"] = message
    text = dumps(report)
    if report_path:
        Path(report_path).write_text(text, encoding="utf-8")
    stdout.write(render_text(json_safe(report)) if fmt == "text" else text)
    return code


def main() -> None:
    sys.exit(run())
