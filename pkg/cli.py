"""raise-forge command line.

    raise-forge init DIR
    raise-forge hara check DIR
    raise-forge pattern lint PATH...
    raise-forge build --hara DIR [--config FILE] [--patterns DIR] [-o DIR]
    raise-forge coverage CASE --hara DIR
    raise-forge render CASE [--format dot|md]
    raise-forge validate CASE
    raise-forge serve
"""
from __future__ import annotations

import argparse
import logging
import shutil
import sys
from dataclasses import replace
from enum import IntEnum
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence

import tqdm

from builder import (BuildConfig, BuildError, InstantiationError, build_safety_case, coverage_check,
                     default_config, load_config)
from emitters import (EXCHANGE_SUFFIX, EmitError, ExchangeError, emit_dot, emit_exchange, emit_report,
                      load_exchange_document)
from gsn import Diagnostic, GsnError, has_errors, validate_graph
from hara import DATA_DIR, RISK_TABLE_FILE, HaraError, HaraModel, Rating, parse_hara, validate_hara
from pattern import (PATTERN_DIR, PATTERN_SUFFIX, PatternError, PatternLibrary, builtin_library,
                     load_library, load_pattern, validate_pattern)

logger = logging.getLogger(__name__)

PROG = "raise-forge"
FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures" / "simlingo"
CASE_FILE = "case" + EXCHANGE_SUFFIX
DOT_FILE = "case.dot"
REPORT_FILE = "report.md"

# every (sub)command path, for help-text checks
COMMANDS = (
    ("init",), ("hara", "check"), ("pattern", "lint"), ("build",),
    ("coverage",), ("render",), ("validate",), ("serve",),
)

_LIBRARY_ERRORS = (GsnError, PatternError, InstantiationError, BuildError, EmitError,
                   HaraError, ExchangeError, ValueError)


class ExitCode(IntEnum):
    OK = 0
    FAILURE = 1
    USAGE = 2


class TargetNotEmpty(Exception):
    pass


def _report(diagnostics: Iterable[Diagnostic], prefix: str = ""):
    for d in diagnostics:
        print(f"{prefix}{d}", file=sys.stderr)


def _progress(items: Sequence, enabled: bool, desc: str):
    return tqdm.tqdm(iterable=items, desc=desc, disable=not enabled, file=sys.stderr)


# ---------------------------------------------------------------------------
# scaffolding

def scaffold(target) -> List[Path]:
    """Copy the SimLingo HARA, risk table, build config and built-in
    patterns into ``target``, which must be empty or absent."""
    target = Path(target)
    if target.exists() and (not target.is_dir() or any(target.iterdir())):
        raise TargetNotEmpty(f"{target} exists and is not empty")
    target.mkdir(parents=True, exist_ok=True)
    sources = sorted(p for p in FIXTURE_DIR.iterdir() if p.is_file())
    sources.append(DATA_DIR / RISK_TABLE_FILE)
    sources += sorted(PATTERN_DIR.glob("*" + PATTERN_SUFFIX))
    written = []
    for source in sources:
        dest = target / source.name
        shutil.copyfile(source, dest)
        written.append(dest)
    logger.info("scaffolded %d files into %s", len(written), target)
    return written


# ---------------------------------------------------------------------------
# commands

def cmd_init(args) -> int:
    try:
        scaffold(args.target)
    except TargetNotEmpty as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ExitCode.USAGE
    return ExitCode.OK


def cmd_hara_check(args) -> int:
    model = parse_hara(args.hara_dir)
    threshold = _threshold(args)
    diagnostics = validate_hara(model, Rating.C if threshold is None else threshold)
    _report(diagnostics)
    return ExitCode.FAILURE if has_errors(diagnostics) else ExitCode.OK


def _pattern_files(paths: Sequence[str]) -> List[Path]:
    files = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files += sorted(path.glob("*" + PATTERN_SUFFIX))
        elif path.is_file():
            files.append(path)
        else:
            raise FileNotFoundError(f"no such pattern file or directory: {path}")
    return files


def cmd_pattern_lint(args) -> int:
    status = ExitCode.OK
    for path in _progress(_pattern_files(args.paths), args.progress, "lint"):
        try:
            p = load_pattern(path)
        except PatternError as exc:
            print(exc, file=sys.stderr)
            status = ExitCode.FAILURE
            continue
        diagnostics = validate_pattern(p)
        _report(diagnostics, f"{path}: ")
        if has_errors(diagnostics):
            status = ExitCode.FAILURE
    return status


def _threshold(args) -> Optional[Rating]:
    if getattr(args, "threshold", None):
        return Rating.parse(args.threshold)
    return None


def _config(args, hara: HaraModel) -> BuildConfig:
    cfg = default_config(hara)
    if args.config:
        cfg = load_config(args.config, cfg)
    threshold = _threshold(args)
    if threshold is not None:
        cfg = replace(cfg, priority_threshold=threshold)
    return cfg


def _library(args) -> PatternLibrary:
    if args.patterns:
        if not Path(args.patterns).is_dir():
            raise FileNotFoundError(f"pattern directory not found: {args.patterns}")
        return load_library(args.patterns)
    return builtin_library()


def cmd_build(args) -> int:
    hara = parse_hara(args.hara)
    cfg = _config(args, hara)
    case, coverage = build_safety_case(cfg, hara, _library(args))
    diagnostics = validate_graph(case)
    _report(diagnostics)

    renderers: List[tuple] = []
    if args.format in ("json", "all"):
        renderers.append((CASE_FILE, lambda: emit_exchange(case, cfg.system_name)))
    if args.format in ("dot", "all"):
        renderers.append((DOT_FILE, lambda: emit_dot(case)))
    if args.format in ("md", "all"):
        renderers.append((REPORT_FILE, lambda: emit_report(case, hara, coverage, diagnostics)))

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for name, render in _progress(renderers, args.progress, "emit"):
        (out / name).write_text(render(), encoding="utf-8", newline="")
        logger.info("wrote %s", out / name)

    if not coverage.passed:
        for branch, rows in sorted(coverage.scenario_coverage.items()):
            missing = [s for s, ok in rows.items() if not ok]
            if missing:
                print(f"coverage: {branch} branch misses {', '.join(missing)}", file=sys.stderr)
        for goal in coverage.unsupported_safety_goals:
            print(f"coverage: safety goal {goal} is not supported", file=sys.stderr)
    print(f"coverage: {coverage.verdict.value}", file=sys.stderr)
    if has_errors(diagnostics) or not coverage.passed:
        return ExitCode.FAILURE
    return ExitCode.OK


def _load_case(path: str):
    return load_exchange_document(Path(path).read_bytes())


def cmd_coverage(args) -> int:
    doc = _load_case(args.case)
    hara = parse_hara(args.hara)
    cfg = _config(args, hara)
    coverage = coverage_check(doc.graph, hara, cfg)
    sys.stdout.write(emit_report(doc.graph, hara, coverage))
    return ExitCode.OK if coverage.passed else ExitCode.FAILURE


def cmd_render(args) -> int:
    doc = _load_case(args.case)
    if args.format == "md":
        if not args.hara:
            print("error: --format md needs --hara", file=sys.stderr)
            return ExitCode.USAGE
        hara = parse_hara(args.hara)
        cfg = _config(args, hara)
        text = emit_report(doc.graph, hara, coverage_check(doc.graph, hara, cfg))
    else:
        text = emit_dot(doc.graph)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
    return ExitCode.OK


def cmd_validate(args) -> int:
    doc = _load_case(args.case)
    diagnostics = validate_graph(doc.graph)
    _report(diagnostics)
    print(f"{args.case}: {len(doc.graph.node_map())} nodes, {len(set(doc.graph.edges))} edges", file=sys.stderr)
    return ExitCode.FAILURE if has_errors(diagnostics) else ExitCode.OK


def cmd_serve(args) -> int:
    from serve import app
    app.run(host=args.host, port=args.port)
    return ExitCode.OK


# ---------------------------------------------------------------------------
# parser

def _add_build_options(parser: argparse.ArgumentParser, hara_required: bool = True):
    parser.add_argument("--hara", required=hara_required, help="extended HARA directory")
    parser.add_argument("--config", help="build configuration (JSON)")
    parser.add_argument("--threshold", choices=[r.name for r in Rating],
                        help="minimum rating treated as top priority (default C)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Build and check GSN safety cases "
                                     "for instruction-following systems from an extended HARA.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    p = commands.add_parser("init", help="scaffold a project with the SimLingo example")
    p.add_argument("target", help="directory to create (must be empty or absent)")
    p.set_defaults(func=cmd_init)

    hara = commands.add_parser("hara", help="HARA commands")
    hara_commands = hara.add_subparsers(dest="hara_command", metavar="COMMAND")
    hara_commands.required = True
    p = hara_commands.add_parser("check", help="parse and validate a HARA directory")
    p.add_argument("hara_dir", help="extended HARA directory")
    p.add_argument("--threshold", choices=[r.name for r in Rating], help="minimum rating needing a safety goal")
    p.set_defaults(func=cmd_hara_check)

    pattern = commands.add_parser("pattern", help="pattern commands")
    pattern_commands = pattern.add_subparsers(dest="pattern_command", metavar="COMMAND")
    pattern_commands.required = True
    p = pattern_commands.add_parser("lint", help="parse and lint pattern files")
    p.add_argument("paths", nargs="+", help="pattern files or directories")
    p.add_argument("--progress", action="store_true", help="show a progress bar")
    p.set_defaults(func=cmd_pattern_lint)

    p = commands.add_parser("build", help="build the safety case and its renderings")
    _add_build_options(p)
    p.add_argument("--patterns", help="pattern library directory (default: built-in patterns)")
    p.add_argument("-o", "--output", default="out", help="output directory (default: out)")
    p.add_argument("--format", choices=["json", "dot", "md", "all"], default="all")
    p.add_argument("--progress", action="store_true", help="show a progress bar")
    p.set_defaults(func=cmd_build)

    p = commands.add_parser("coverage", help="re-check an exchange document against a HARA")
    p.add_argument("case", help="exchange document (.gsn.json)")
    _add_build_options(p)
    p.set_defaults(func=cmd_coverage)

    p = commands.add_parser("render", help="render an exchange document")
    p.add_argument("case", help="exchange document (.gsn.json)")
    p.add_argument("--format", choices=["dot", "md"], default="dot")
    p.add_argument("-o", "--output", help="output file (default: standard output)")
    _add_build_options(p, hara_required=False)
    p.set_defaults(func=cmd_render)

    p = commands.add_parser("validate", help="check an exchange document")
    p.add_argument("case", help="exchange document (.gsn.json)")
    p.set_defaults(func=cmd_validate)

    p = commands.add_parser("serve", help="run the HTTP validation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=5000)
    p.set_defaults(func=cmd_serve)
    return parser


def _configure_logging(verbose: int):
    level = logging.WARNING if verbose <= 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if not isinstance(exc.code, str) else ExitCode.USAGE
    _configure_logging(args.verbose)

    func: Callable = args.func
    try:
        return int(func(args))
    except TargetNotEmpty as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ExitCode.USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ExitCode.USAGE
    except _LIBRARY_ERRORS as exc:
        found = getattr(exc, "diagnostics", None)
        if found and isinstance(found[0], Diagnostic):
            print(f"error: {type(exc).__name__}", file=sys.stderr)
            _report(found)
        else:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ExitCode.FAILURE
    except Exception:
        logger.exception("unexpected failure in %s", args.command)
        return ExitCode.FAILURE


def main():
    sys.exit(run(sys.argv[1:]))
