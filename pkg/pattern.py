"""Argument-pattern DSL.

A pattern file is line oriented::

    pattern RI v1
    objective RejectDangerous
    param system: SystemName
    param scenario: Scenario*
    node G1: Goal "{system} rejects dangerous instructions"
    node G2: Goal "... {scenario.text}" multiplicity over scenario tag scenario="{scenario.id}"
    edge G1 -supportedBy-> G2

``#`` starts a comment outside strings. Inside strings ``\\"`` and ``\\\\``
are the only escapes; ``{{`` and ``}}`` are literal braces.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

from gsn import (ARGUING_KINDS, ArgumentGraph, Diagnostic, EdgeKind, GsnEdge, GsnNode,
                 NodeKind, Severity, children, roots, validate_graph)

logger = logging.getLogger(__name__)

PATTERN_DIR = Path(__file__).resolve().parent / "patterns"
PATTERN_SUFFIX = ".pattern"


class Objective(Enum):
    REJECT_DANGEROUS = "RejectDangerous"
    ACCEPT_SAFE = "AcceptSafe"
    GENERIC = "Generic"


class HotSpotSort(Enum):
    SCENARIO = "Scenario"
    INSTRUCTION = "Instruction"
    OUTCOME = "Outcome"
    SYSTEM_NAME = "SystemName"
    EVIDENCE_REF = "EvidenceRef"
    FREE_TEXT = "FreeText"


@dataclass(frozen=True)
class HotSpot:
    name: str
    sort: HotSpotSort
    collection: bool = False
    required: bool = True


@dataclass(frozen=True)
class Multiplicity:
    over: str


@dataclass(frozen=True)
class Choice:
    min: int
    max: int


Expansion = Union[Multiplicity, Choice]


@dataclass(frozen=True)
class TemplateNode:
    node: GsnNode
    expansion: Optional[Expansion] = None


@dataclass(frozen=True)
class Pattern:
    name: str
    version: str
    objective: Objective
    params: Tuple[HotSpot, ...]
    template: ArgumentGraph
    expansions: Dict[str, Expansion] = field(default_factory=dict)

    def hot_spot(self, name: str) -> Optional[HotSpot]:
        for h in self.params:
            if h.name == name:
                return h
        return None

    @property
    def template_nodes(self) -> List[TemplateNode]:
        return [TemplateNode(n, self.expansions.get(n.id)) for n in self.template.nodes]


class PatternError(Exception):
    pass


class PatternNotFound(PatternError):
    pass


class DuplicatePattern(PatternError):
    pass


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    message: str

    def __str__(self):
        return f"{self.line}:{self.column}: {self.message}"


class PatternParseError(PatternError):
    def __init__(self, diagnostics: List[ParseDiagnostic], source: Optional[str] = None):
        self.diagnostics = diagnostics
        self.source = source
        where = f"{source}:" if source else ""
        super().__init__("\n".join(f"{where}{d}" for d in diagnostics))


@dataclass
class PatternLibrary:
    patterns: Dict[str, Pattern] = field(default_factory=dict)

    def get(self, name: str) -> Pattern:
        try:
            return self.patterns[name]
        except KeyError:
            raise PatternNotFound(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self.patterns

    def names(self) -> List[str]:
        return sorted(self.patterns)


# ---------------------------------------------------------------------------
# placeholders

@dataclass(frozen=True)
class Placeholder:
    name: str
    field: Optional[str]
    offset: int


class TemplateSyntaxError(ValueError):
    def __init__(self, offset: int, message: str):
        super().__init__(message)
        self.offset = offset


_PLACEHOLDER_RE = re.compile(
    r"\{\{|\}\}|\{([A-Za-z_][A-Za-z0-9_]*)(?:\.([A-Za-z_][A-Za-z0-9_]*))?\}|[{}]")


def split_template(text: str) -> List[Union[str, Placeholder]]:
    """Split ``text`` into literal strings and placeholders."""
    parts: List[Union[str, Placeholder]] = []
    pos = 0
    for m in _PLACEHOLDER_RE.finditer(text):
        if m.start() > pos:
            parts.append(text[pos:m.start()])
        token = m.group(0)
        if token in ("{{", "}}"):
            parts.append(token[0])
        elif m.group(1):
            parts.append(Placeholder(m.group(1), m.group(2), m.start()))
        else:
            raise TemplateSyntaxError(m.start(), f"unbalanced '{token}' (write '{token}{token}' for a literal)")
        pos = m.end()
    if pos < len(text):
        parts.append(text[pos:])
    return parts


def placeholders(text: str) -> List[Placeholder]:
    return [p for p in split_template(text) if isinstance(p, Placeholder)]


def has_placeholders(text: str) -> bool:
    try:
        return bool(placeholders(text))
    except TemplateSyntaxError:
        return True


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#.*)
  | (?P<arrow>-(?:supportedBy|inContextOf)->)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<badstring>"(?:[^"\\]|\\.)*\\?)
  | (?P<range>\.\.)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_](?:[A-Za-z0-9_.]|-(?!(?:supportedBy|inContextOf)->))*)
  | (?P<punct>[:*?=])
""", re.VERBOSE)

_ARROWS = {"-supportedBy->": EdgeKind.SUPPORTED_BY, "-inContextOf->": EdgeKind.IN_CONTEXT_OF}
_PARAM_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_NODE_ID_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_.-]*$")


@dataclass(frozen=True)
class _Token:
    kind: str
    value: str
    column: int


class _LineError(Exception):
    def __init__(self, column: int, message: str):
        super().__init__(message)
        self.column = column
        self.message = message


def _unescape(raw: str, column: int) -> str:
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\":
            nxt = raw[i + 1] if i + 1 < len(raw) else ""
            if nxt not in ('"', "\\"):
                raise _LineError(column + i, f"unknown escape '\\{nxt}'")
            out.append(nxt)
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


class _Cursor(object):
    def __init__(self, tokens: List[_Token], end_column: int):
        self.tokens = tokens
        self.pos = 0
        self.end_column = end_column

    def peek(self) -> Optional[_Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def next(self, kind: str, what: str, value: Optional[str] = None) -> _Token:
        tok = self.peek()
        if tok is None:
            raise _LineError(self.end_column, f"expected {what}")
        if tok.kind != kind or (value is not None and tok.value != value):
            raise _LineError(tok.column, f"expected {what}, found '{tok.value}'")
        self.pos += 1
        return tok

    def accept(self, kind: str, value: Optional[str] = None) -> Optional[_Token]:
        tok = self.peek()
        if tok is not None and tok.kind == kind and (value is None or tok.value == value):
            self.pos += 1
            return tok
        return None

    def expect_end(self):
        tok = self.peek()
        if tok is not None:
            raise _LineError(tok.column, f"unexpected '{tok.value}'")


def _tokenize(line: str) -> List[_Token]:
    tokens = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            raise _LineError(pos + 1, f"unexpected character {line[pos]!r}")
        kind = m.lastgroup
        if kind == "badstring":
            raise _LineError(pos + 1, "unterminated string")
        if kind == "comment":
            break
        if kind != "ws":
            tokens.append(_Token(kind, m.group(0), pos + 1))
        pos = m.end()
    return tokens


@dataclass
class _PendingRef:
    name: str
    line: int
    column: int


class _PatternParser(object):
    def __init__(self, text: str):
        self.lines = text.split("\n")
        self.diagnostics: List[ParseDiagnostic] = []
        self.header: Optional[Tuple[str, str]] = None
        self.objective: Optional[Objective] = None
        self.params: List[HotSpot] = []
        self.nodes: List[GsnNode] = []
        self.node_ids: Dict[str, int] = {}
        self.expansions: Dict[str, Expansion] = {}
        self.edges: List[GsnEdge] = []
        self.edge_refs: List[_PendingRef] = []
        self.placeholder_refs: List[_PendingRef] = []
        self.expansion_refs: List[_PendingRef] = []

    def error(self, line: int, column: int, message: str):
        self.diagnostics.append(ParseDiagnostic(line, max(column, 1), message))

    def parse(self) -> Pattern:
        for number, line in enumerate(self.lines, start=1):
            try:
                tokens = _tokenize(line)
                if not tokens:
                    continue
                self.statement(number, _Cursor(tokens, tokens[-1].column + len(tokens[-1].value) - 1))
            except _LineError as exc:
                if self.header is None:
                    self.header = ("", "")
                self.error(number, exc.column, exc.message)

        if self.header is None:
            self.error(1, 1, "expected 'pattern' header")
        self.resolve()
        if self.diagnostics:
            raise PatternParseError(sorted(self.diagnostics, key=lambda d: (d.line, d.column)))

        name, version = self.header
        return Pattern(
            name=name,
            version=version,
            objective=self.objective or Objective.GENERIC,
            params=tuple(self.params),
            template=ArgumentGraph(self.nodes, self.edges),
            expansions=dict(self.expansions),
        )

    def statement(self, number: int, cur: _Cursor):
        first = cur.next("ident", "a statement keyword")
        keyword = first.value
        if self.header is None:
            if keyword != "pattern":
                raise _LineError(first.column, "expected 'pattern' header")
            name = cur.next("ident", "pattern name").value
            ver = cur.next("ident", "version such as 'v1'")
            if not (ver.value.startswith("v") and len(ver.value) > 1):
                raise _LineError(ver.column, "expected version such as 'v1'")
            cur.expect_end()
            self.header = (name, ver.value[1:])
            return
        handler = {
            "objective": self.objective_statement,
            "param": self.param_statement,
            "node": self.node_statement,
            "edge": self.edge_statement,
        }.get(keyword)
        if handler is None:
            if keyword == "pattern":
                raise _LineError(first.column, "duplicate 'pattern' header")
            raise _LineError(first.column, f"unknown statement '{keyword}'")
        handler(number, cur)

    def objective_statement(self, number: int, cur: _Cursor):
        tok = cur.next("ident", "objective")
        cur.expect_end()
        if self.objective is not None:
            raise _LineError(tok.column, "duplicate 'objective'")
        try:
            self.objective = Objective(tok.value)
        except ValueError:
            allowed = ", ".join(o.value for o in Objective)
            raise _LineError(tok.column, f"unknown objective '{tok.value}'; expected one of {allowed}")

    def param_statement(self, number: int, cur: _Cursor):
        name = cur.next("ident", "hot spot name")
        if not _PARAM_NAME_RE.match(name.value):
            raise _LineError(name.column, f"invalid hot spot name '{name.value}'")
        cur.next("punct", "':'", ":")
        sort_tok = cur.next("ident", "hot spot sort")
        collection = cur.accept("punct", "*") is not None
        optional = cur.accept("punct", "?") is not None
        cur.expect_end()
        try:
            sort = HotSpotSort(sort_tok.value)
        except ValueError:
            allowed = ", ".join(s.value for s in HotSpotSort)
            raise _LineError(sort_tok.column, f"unknown sort '{sort_tok.value}'; expected one of {allowed}")
        if any(h.name == name.value for h in self.params):
            raise _LineError(name.column, f"duplicate hot spot '{name.value}'")
        self.params.append(HotSpot(name.value, sort, collection, not optional))

    def template_text(self, number: int, tok: _Token) -> str:
        raw = tok.value[1:-1]
        text = _unescape(raw, tok.column + 1)
        try:
            found = placeholders(raw)
        except TemplateSyntaxError as exc:
            raise _LineError(tok.column + 1 + exc.offset, str(exc))
        for p in found:
            self.placeholder_refs.append(_PendingRef(p.name, number, tok.column + 1 + p.offset))
        return text

    def node_statement(self, number: int, cur: _Cursor):
        id_tok = cur.next("ident", "node id")
        if not _NODE_ID_RE.match(id_tok.value):
            raise _LineError(id_tok.column, f"invalid node id '{id_tok.value}'")
        cur.next("punct", "':'", ":")
        kind_tok = cur.next("ident", "node kind")
        try:
            kind = NodeKind(kind_tok.value)
        except ValueError:
            allowed = ", ".join(k.value for k in NodeKind)
            raise _LineError(kind_tok.column, f"unknown node kind '{kind_tok.value}'; expected one of {allowed}")
        statement = self.template_text(number, cur.next("string", "quoted statement"))

        undeveloped = False
        expansion: Optional[Expansion] = None
        tags: Dict[str, str] = {}
        while not cur.at_end():
            clause = cur.next("ident", "node clause")
            if clause.value == "undeveloped":
                undeveloped = True
            elif clause.value in ("multiplicity", "choice"):
                if expansion is not None:
                    raise _LineError(clause.column, "a node takes at most one multiplicity or choice")
                if clause.value == "multiplicity":
                    cur.next("ident", "'over'", "over")
                    over = cur.next("ident", "hot spot name")
                    self.expansion_refs.append(_PendingRef(over.value, number, over.column))
                    expansion = Multiplicity(over.value)
                else:
                    low = cur.next("int", "minimum")
                    cur.next("range", "'..'")
                    high = cur.next("int", "maximum")
                    for bound in (low, high):
                        if len(bound.value) > 9:
                            raise _LineError(bound.column, f"choice bound '{bound.value}' is too large")
                    expansion = Choice(int(low.value), int(high.value))
            elif clause.value == "tag":
                key = cur.next("ident", "tag key")
                cur.next("punct", "'='", "=")
                tags[key.value] = self.template_text(number, cur.next("string", "quoted tag value"))
            else:
                raise _LineError(clause.column, f"unknown node clause '{clause.value}'")

        if id_tok.value in self.node_ids:
            raise _LineError(id_tok.column, f"duplicate node id '{id_tok.value}'")
        self.node_ids[id_tok.value] = number
        uninstantiated = has_placeholders(statement) or any(has_placeholders(v) for v in tags.values())
        self.nodes.append(GsnNode(id_tok.value, kind, statement, undeveloped, uninstantiated, tags))
        if expansion is not None:
            self.expansions[id_tok.value] = expansion

    def edge_statement(self, number: int, cur: _Cursor):
        source = cur.next("ident", "source node id")
        arrow = cur.next("arrow", "'-supportedBy->' or '-inContextOf->'")
        target = cur.next("ident", "target node id")
        cur.expect_end()
        self.edges.append(GsnEdge(source.value, target.value, _ARROWS[arrow.value]))
        self.edge_refs.append(_PendingRef(source.value, number, source.column))
        self.edge_refs.append(_PendingRef(target.value, number, target.column))

    def resolve(self):
        declared = {h.name for h in self.params}
        for ref in self.placeholder_refs:
            if ref.name not in declared:
                self.error(ref.line, ref.column, f"undeclared placeholder '{ref.name}'")
        for ref in self.expansion_refs:
            if ref.name not in declared:
                self.error(ref.line, ref.column, f"undeclared hot spot '{ref.name}'")
        for ref in self.edge_refs:
            if ref.name not in self.node_ids:
                self.error(ref.line, ref.column, f"unknown edge endpoint '{ref.name}'")


def _decode(source: Union[str, bytes]) -> str:
    if isinstance(source, str):
        return source
    try:
        return source.decode("utf-8")
    except UnicodeDecodeError as exc:
        before = source[:exc.start]
        line = before.count(b"\n") + 1
        column = len(before) - (before.rfind(b"\n") + 1) + 1
        raise PatternParseError([ParseDiagnostic(line, column, "invalid UTF-8")]) from None


def parse_pattern(source: Union[str, bytes]) -> Pattern:
    """Parse DSL source; raises ``PatternParseError`` with every diagnostic found."""
    return _PatternParser(_decode(source)).parse()


def load_pattern(path: Union[str, Path]) -> Pattern:
    path = Path(path)
    try:
        return parse_pattern(path.read_bytes())
    except PatternParseError as exc:
        raise PatternParseError(exc.diagnostics, str(path)) from None


# ---------------------------------------------------------------------------
# printer

def format_pattern(p: Pattern) -> str:
    lines = [f"pattern {p.name} v{p.version}", f"objective {p.objective.value}", ""]
    for h in p.params:
        suffix = ("*" if h.collection else "") + ("" if h.required else "?")
        lines.append(f"param {h.name}: {h.sort.value}{suffix}")
    lines.append("")
    for tn in p.template_nodes:
        n = tn.node
        line = f'node {n.id}: {n.kind.value} "{_escape(n.statement)}"'
        if n.undeveloped:
            line += " undeveloped"
        if isinstance(tn.expansion, Multiplicity):
            line += f" multiplicity over {tn.expansion.over}"
        elif isinstance(tn.expansion, Choice):
            line += f" choice {tn.expansion.min}..{tn.expansion.max}"
        for key, value in n.tags.items():
            line += f' tag {key}="{_escape(value)}"'
        lines.append(line)
    lines.append("")
    for e in p.template.edges:
        arrow = "-supportedBy->" if e.kind is EdgeKind.SUPPORTED_BY else "-inContextOf->"
        lines.append(f"edge {e.source} {arrow} {e.target}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# lint

def _diag(severity: Severity, code: str, message: str, locus: Optional[str] = None) -> Diagnostic:
    return Diagnostic(severity, code, message, locus)


def _template_texts(node: GsnNode) -> Iterator[str]:
    yield node.statement
    yield from node.tags.values()


def validate_pattern(p: Pattern) -> List[Diagnostic]:
    out = [d for d in validate_graph(p.template, fragment=True) if d.code != "GSN021"]

    declared: Dict[str, HotSpot] = {}
    for h in p.params:
        if h.name in declared:
            out.append(_diag(Severity.ERROR, "PAT010", f"hot spot '{h.name}' declared twice", h.name))
        declared.setdefault(h.name, h)

    used = set()
    for n in p.template.nodes:
        for text in _template_texts(n):
            try:
                found = placeholders(text)
            except TemplateSyntaxError as exc:
                out.append(_diag(Severity.ERROR, "PAT013", str(exc), n.id))
                continue
            for ph in found:
                used.add(ph.name)
                if ph.name not in declared:
                    out.append(_diag(Severity.ERROR, "PAT011", f"undeclared placeholder '{ph.name}'", n.id))

    for node_id, expansion in sorted(p.expansions.items()):
        node = p.template.get(node_id)
        if node is None:
            out.append(_diag(Severity.ERROR, "PAT026", "expansion on unknown node", node_id))
            continue
        if isinstance(expansion, Multiplicity):
            used.add(expansion.over)
            if node.kind not in ARGUING_KINDS:
                out.append(_diag(Severity.ERROR, "PAT021",
                                 f"multiplicity on a {node.kind.value}; only Goal or Strategy may repeat", node_id))
            hot = declared.get(expansion.over)
            if hot is None or not hot.collection:
                out.append(_diag(Severity.ERROR, "PAT022",
                                 f"multiplicity over '{expansion.over}', which is not a collection hot spot", node_id))
        else:
            if node.kind not in ARGUING_KINDS:
                out.append(_diag(Severity.ERROR, "PAT024", f"choice on a {node.kind.value}", node_id))
            alternatives = len(children(p.template, node_id))
            if not 1 <= expansion.min <= expansion.max <= alternatives:
                out.append(_diag(Severity.ERROR, "PAT023",
                                 f"choice {expansion.min}..{expansion.max} over {alternatives} alternative(s)",
                                 node_id))

    for root in roots(p.template):
        if isinstance(p.expansions.get(root.id), Multiplicity):
            out.append(_diag(Severity.ERROR, "PAT025", "the root node cannot carry a multiplicity", root.id))

    if p.objective in (Objective.REJECT_DANGEROUS, Objective.ACCEPT_SAFE):
        if not any(h.sort is HotSpotSort.SCENARIO and h.collection for h in p.params):
            out.append(_diag(Severity.ERROR, "PAT012",
                             f"{p.objective.value} pattern needs a Scenario collection hot spot", p.name))

    for h in p.params:
        if h.name not in used:
            out.append(_diag(Severity.WARNING, "PAT020", f"hot spot '{h.name}' is never used", h.name))

    return sorted(out, key=Diagnostic.sort_key)


# ---------------------------------------------------------------------------
# library

def load_library(directory: Union[str, Path]) -> PatternLibrary:
    library = PatternLibrary()
    for path in sorted(Path(directory).glob("*" + PATTERN_SUFFIX)):
        p = load_pattern(path)
        if p.name in library:
            raise DuplicatePattern(f"{path}: pattern '{p.name}' is already defined")
        logger.info("loaded pattern %s v%s from %s", p.name, p.version, path)
        library.patterns[p.name] = p
    return library


def builtin_library() -> PatternLibrary:
    return load_library(PATTERN_DIR)
