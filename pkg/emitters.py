"""Deterministic renderings of a safety case and its HARA model.

Every emitter sorts what it writes, so the same input always yields the
same bytes regardless of node insertion order.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import textwrap
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from builder import BRANCHES, TAG_SAFETY_GOAL, CoverageReport
from gsn import (ArgumentGraph, Diagnostic, EdgeKind, GsnEdge, GsnNode, NodeKind, Severity,
                 has_errors, validate_graph)
from hara import (FUNCTIONS_FILE, HAZARD_COLUMNS, HAZARDS_FILE, MALFUNCTION_COLUMNS, MALFUNCTIONS_FILE,
                  META_COLUMNS, META_FILE, SAFE_EVENT_COLUMNS, SAFE_EVENTS_FILE, SCENARIO_COLUMNS,
                  SCENARIOS_FILE, FUNCTION_COLUMNS, HaraModel, id_key)

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"
EXCHANGE_SUFFIX = ".gsn.json"
LABEL_WIDTH = 28

_DOCUMENT_KEYS = ("format_version", "system_name", "nodes", "edges")
_NODE_KEYS = ("id", "kind", "statement", "undeveloped", "uninstantiated", "tags")
_EDGE_KEYS = ("source", "target", "kind")


class EmitError(Exception):
    pass


class InvalidGraph(EmitError):
    def __init__(self, diagnostics: List[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("graph is not well formed: " + "; ".join(str(d) for d in diagnostics))


class ExchangeError(Exception):
    def __init__(self, diagnostics: List[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class ExchangeDocument:
    system_name: str
    graph: ArgumentGraph
    format_version: str = FORMAT_VERSION


def _unique_sorted_nodes(case: ArgumentGraph) -> List[GsnNode]:
    return sorted(case.node_map().values(), key=lambda n: n.id)


def _sorted_edges(case: ArgumentGraph) -> List[GsnEdge]:
    return sorted(set(case.edges), key=GsnEdge.sort_key)


# ---------------------------------------------------------------------------
# exchange

def emit_exchange(case: ArgumentGraph, system_name: str) -> str:
    errors = [d for d in validate_graph(case) if d.is_error]
    if errors:
        raise InvalidGraph(errors)
    doc = {
        "format_version": FORMAT_VERSION,
        "system_name": system_name,
        "nodes": [{
            "id": n.id,
            "kind": n.kind.value,
            "statement": n.statement,
            "undeveloped": n.undeveloped,
            "uninstantiated": n.uninstantiated,
            "tags": {k: n.tags[k] for k in sorted(n.tags)},
        } for n in _unique_sorted_nodes(case)],
        "edges": [{
            "source": e.source,
            "target": e.target,
            "kind": e.kind.value,
        } for e in _sorted_edges(case)],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _malformed(message: str, locus: Optional[str] = None) -> Diagnostic:
    return Diagnostic(Severity.ERROR, "EXC001", message, locus)


def _check_keys(obj: Any, keys: Sequence[str], where: str) -> List[Diagnostic]:
    if not isinstance(obj, dict):
        return [_malformed("expected an object", where)]
    out = [_malformed(f"missing key '{k}'", where) for k in keys if k not in obj]
    out += [_malformed(f"unexpected key '{k}'", where) for k in sorted(obj) if k not in keys]
    return out


def _read_node(raw: Any, where: str, problems: List[Diagnostic]) -> Optional[GsnNode]:
    found = _check_keys(raw, _NODE_KEYS, where)
    if found:
        problems.extend(found)
        return None
    bad = len(problems)
    for key in ("id", "statement"):
        if not isinstance(raw[key], str):
            problems.append(_malformed(f"'{key}' must be a string", where))
    for key in ("undeveloped", "uninstantiated"):
        if not isinstance(raw[key], bool):
            problems.append(_malformed(f"'{key}' must be a boolean", where))
    tags = raw["tags"]
    if not isinstance(tags, dict) or not all(isinstance(v, str) for v in tags.values()):
        problems.append(_malformed("'tags' must map strings to strings", where))
    try:
        kind = NodeKind(raw["kind"])
    except (ValueError, TypeError):
        problems.append(_malformed(f"unknown node kind {raw['kind']!r}", where))
        return None
    if len(problems) > bad:
        return None
    return GsnNode(raw["id"], kind, raw["statement"], raw["undeveloped"], raw["uninstantiated"], dict(tags))


def _read_edge(raw: Any, where: str, problems: List[Diagnostic]) -> Optional[GsnEdge]:
    found = _check_keys(raw, _EDGE_KEYS, where)
    if found:
        problems.extend(found)
        return None
    if not isinstance(raw["source"], str) or not isinstance(raw["target"], str):
        problems.append(_malformed("'source' and 'target' must be strings", where))
        return None
    try:
        kind = EdgeKind(raw["kind"])
    except (ValueError, TypeError):
        problems.append(_malformed(f"unknown edge kind {raw['kind']!r}", where))
        return None
    return GsnEdge(raw["source"], raw["target"], kind)


def load_exchange_document(text: Union[str, bytes]) -> ExchangeDocument:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExchangeError([_malformed(f"invalid UTF-8 at byte {exc.start}")]) from None
    try:
        data = json.loads(text)
    except (ValueError, RecursionError) as exc:
        raise ExchangeError([_malformed(f"not a JSON document: {exc}")]) from None

    problems = _check_keys(data, _DOCUMENT_KEYS, "document")
    if problems:
        raise ExchangeError(problems)
    if data["format_version"] != FORMAT_VERSION:
        raise ExchangeError([Diagnostic(Severity.ERROR, "EXC002",
                                        f"unsupported format_version {data['format_version']!r}")])
    if not isinstance(data["system_name"], str):
        problems.append(_malformed("'system_name' must be a string"))
    nodes, edges = [], []
    for key, reader, sink in (("nodes", _read_node, nodes), ("edges", _read_edge, edges)):
        if not isinstance(data[key], list):
            problems.append(_malformed(f"'{key}' must be an array"))
            continue
        for index, raw in enumerate(data[key]):
            item = reader(raw, f"{key}[{index}]", problems)
            if item is not None:
                sink.append(item)
    if problems:
        raise ExchangeError(problems)

    graph = ArgumentGraph(nodes, edges)
    diagnostics = validate_graph(graph)
    if has_errors(diagnostics):
        raise ExchangeError(
            [Diagnostic(Severity.ERROR, "EXC003", "document encodes an ill-formed graph")] +
            [d for d in diagnostics if d.is_error])
    return ExchangeDocument(data["system_name"], graph)


def load_exchange(text: Union[str, bytes]) -> ArgumentGraph:
    return load_exchange_document(text).graph


# ---------------------------------------------------------------------------
# DOT

_SHAPES = {
    NodeKind.GOAL: "shape=box",
    NodeKind.STRATEGY: "shape=parallelogram",
    NodeKind.SOLUTION: "shape=circle",
    NodeKind.CONTEXT: "shape=box, style=rounded",
    NodeKind.ASSUMPTION: "shape=ellipse",
    NodeKind.JUSTIFICATION: "shape=ellipse",
}
_KIND_MARKS = {NodeKind.ASSUMPTION: "A", NodeKind.JUSTIFICATION: "J"}
UNDEVELOPED_MARK = "◇"
UNINSTANTIATED_MARK = "△"


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _label(n: GsnNode) -> str:
    lines = [n.id] + textwrap.wrap(n.statement, width=LABEL_WIDTH)
    marks = [m for m, on in ((_KIND_MARKS.get(n.kind), True),
                             (UNDEVELOPED_MARK, n.undeveloped),
                             (UNINSTANTIATED_MARK, n.uninstantiated)) if m and on]
    if marks:
        lines.append(" ".join(marks))
    return "\\n".join(_dot_escape(line) for line in lines)


def emit_dot(case: ArgumentGraph) -> str:
    lines = [
        "digraph gsn {",
        "  rankdir=TB;",
        '  node [fontname="Helvetica", fontsize=10];',
    ]
    for n in _unique_sorted_nodes(case):
        lines.append(f'  "{_dot_escape(n.id)}" [{_SHAPES[n.kind]}, label="{_label(n)}"];')
    for e in _sorted_edges(case):
        arrow = "arrowhead=normal" if e.kind is EdgeKind.SUPPORTED_BY else "arrowhead=empty"
        lines.append(f'  "{_dot_escape(e.source)}" -> "{_dot_escape(e.target)}" [{arrow}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# report

def _cell(text: str) -> str:
    return text.replace("|", "\\|")


def emit_report(case: ArgumentGraph, hara: HaraModel, coverage: CoverageReport,
                diagnostics: Optional[List[Diagnostic]] = None) -> str:
    if diagnostics is None:
        diagnostics = validate_graph(case)
    errors = sum(1 for d in diagnostics if d.is_error)
    lines = [
        f"# Safety case report: {hara.system_name}",
        "",
        "## Summary",
        "",
        f"- Verdict: **{coverage.verdict.value}**",
        f"- Nodes: {len(case.node_map())}",
        f"- Edges: {len(set(case.edges))}",
        f"- Errors: {errors}",
        f"- Warnings: {len(diagnostics) - errors}",
        "- Unbound hot spots: " + (", ".join(coverage.unbound_hotspots) or "none"),
        "- Unsupported safety goals: " + (", ".join(coverage.unsupported_safety_goals) or "none"),
        "",
        "## Scenario coverage",
        "",
        "| Scenario | Branch | Status |",
        "|---|---|---|",
    ]
    scenarios = sorted(hara.scenarios, key=lambda s: id_key(s.id))
    for branch in BRANCHES:
        expected = coverage.scenario_coverage.get(branch, {})
        for s in scenarios:
            if s.id not in expected:
                status = "n/a"
            else:
                status = "covered" if expected[s.id] else "MISSING"
            lines.append(f"| {s.id} | {branch} | {status} |")

    lines += ["", "## Safety goal traceability", "", "| Safety goal | Node |", "|---|---|"]
    for goal in sorted(hara.safety_goals, key=lambda g: id_key(g.id)):
        found = sorted(n.id for n in case.nodes if n.tag(TAG_SAFETY_GOAL) == goal.id)
        lines.append(f"| {goal.id} | {', '.join(found) or 'MISSING'} |")

    lines += ["", "## Diagnostics", ""]
    if diagnostics:
        lines += [f"- {_cell(str(d))}" for d in diagnostics]
    else:
        lines.append("none")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# HARA writer

def _csv_text(header: Sequence[str], rows: List[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def dump_hara(model: HaraModel) -> Dict[str, str]:
    """File name -> CSV text for the six HARA documents."""
    goals = {g.id: g.statement for g in model.safety_goals}
    meta = [("system_name", model.system_name), ("definition", model.definition)]
    meta += [("assumption", a) for a in model.assumptions]
    hazards = []
    for he in model.hazardous_events:
        goal_id = he.safety_goal_id or ""
        hazards.append((he.id, he.malfunction_id, he.scenario_id, he.effect) + he.risk.labels +
                       (he.rating.name, goal_id, goals.get(goal_id, "")))
    return {
        META_FILE: _csv_text(META_COLUMNS, meta),
        FUNCTIONS_FILE: _csv_text(FUNCTION_COLUMNS, [(f.id, f.description) for f in model.functions]),
        MALFUNCTIONS_FILE: _csv_text(MALFUNCTION_COLUMNS,
                                     [(m.id, m.function_id, m.description) for m in model.malfunctions]),
        SCENARIOS_FILE: _csv_text(SCENARIO_COLUMNS, [(s.id, s.description) for s in model.scenarios]),
        HAZARDS_FILE: _csv_text(HAZARD_COLUMNS, hazards),
        SAFE_EVENTS_FILE: _csv_text(SAFE_EVENT_COLUMNS, [(e.id, e.instruction, e.scenario_id, e.expected_outcome)
                                                         for e in model.safe_events]),
    }


def write_hara(model: HaraModel, directory: Union[str, Path]):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in dump_hara(model).items():
        (directory / name).write_text(text, encoding="utf-8", newline="")
    logger.info("wrote HARA documents to %s", directory)
