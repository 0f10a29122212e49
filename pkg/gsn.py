"""Typed GSN argument graphs.

Graphs are immutable values: every operation returns a new graph and leaves
its input untouched. Well-formedness is checked by ``validate_graph``, which
reports ``Diagnostic`` values instead of raising.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Set, Tuple

import networkx as nx

logger = logging.getLogger(__name__)

NODE_ID_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_.-]*$")


class NodeKind(Enum):
    GOAL = "Goal"
    STRATEGY = "Strategy"
    SOLUTION = "Solution"
    CONTEXT = "Context"
    ASSUMPTION = "Assumption"
    JUSTIFICATION = "Justification"


class EdgeKind(Enum):
    SUPPORTED_BY = "SupportedBy"
    IN_CONTEXT_OF = "InContextOf"


class Severity(Enum):
    ERROR = "Error"
    WARNING = "Warning"


ARGUING_KINDS = frozenset([NodeKind.GOAL, NodeKind.STRATEGY])
SUPPORT_TARGETS = frozenset([NodeKind.GOAL, NodeKind.STRATEGY, NodeKind.SOLUTION])
CONTEXT_TARGETS = frozenset([NodeKind.CONTEXT, NodeKind.ASSUMPTION, NodeKind.JUSTIFICATION])


def kinds_compatible(kind: EdgeKind, source: NodeKind, target: NodeKind) -> bool:
    if source not in ARGUING_KINDS:
        return False
    if kind is EdgeKind.SUPPORTED_BY:
        return target in SUPPORT_TARGETS
    return target in CONTEXT_TARGETS


@dataclass(frozen=True)
class GsnNode:
    id: str
    kind: NodeKind
    statement: str
    undeveloped: bool = False
    uninstantiated: bool = False
    tags: Dict[str, str] = field(default_factory=dict)

    def tag(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.tags.get(key, default)


@dataclass(frozen=True)
class GsnEdge:
    source: str
    target: str
    kind: EdgeKind = EdgeKind.SUPPORTED_BY

    def sort_key(self) -> Tuple[str, str, str]:
        return (self.source, self.target, self.kind.value)

    def __str__(self):
        return f"{self.source}->{self.target}:{self.kind.value}"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: str
    message: str
    locus: Optional[str] = None

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def sort_key(self) -> Tuple[str, str, str]:
        return (self.code, self.locus or "", self.message)

    def __str__(self):
        where = f" [{self.locus}]" if self.locus else ""
        return f"{self.severity.value} {self.code}{where}: {self.message}"


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diagnostics)


class GsnError(Exception):
    pass


class UnknownEndpoint(GsnError):
    pass


class UnknownNode(GsnError):
    pass


class DuplicateNode(GsnError):
    pass


class KindIncompatible(GsnError):
    pass


class CycleIntroduced(GsnError):
    pass


class DuplicateEdge(GsnError):
    pass


class UnknownAttachPoint(GsnError):
    pass


class IdCollision(GsnError):
    pass


class MultiRootSubtree(GsnError):
    pass


class ArgumentGraph(object):
    """Nodes and edges of a safety case or pattern template.

    The node tuple may hold duplicate ids and edges may dangle: such graphs
    are representable so that ``validate_graph`` can report them. Equality
    compares the canonical (id-sorted) node and edge sequences.
    """

    __slots__ = ("nodes", "edges")

    def __init__(self, nodes: Iterable[GsnNode] = (), edges: Iterable[GsnEdge] = ()):
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "edges", tuple(edges))

    def __setattr__(self, name, value):
        raise AttributeError("ArgumentGraph is immutable")

    def canonical(self) -> Tuple[Tuple[GsnNode, ...], Tuple[GsnEdge, ...]]:
        nodes = tuple(sorted(self.nodes, key=lambda n: n.id))
        edges = tuple(sorted(set(self.edges), key=GsnEdge.sort_key))
        return nodes, edges

    def __eq__(self, other):
        if not isinstance(other, ArgumentGraph):
            return NotImplemented
        return self.canonical() == other.canonical()

    __hash__ = None

    def __repr__(self):
        return f"ArgumentGraph({len(self.nodes)} nodes, {len(self.edges)} edges)"

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, node_id: str) -> bool:
        return any(n.id == node_id for n in self.nodes)

    @property
    def node_ids(self) -> Set[str]:
        return {n.id for n in self.nodes}

    def node_map(self) -> Dict[str, GsnNode]:
        # first occurrence wins for duplicated ids
        result: Dict[str, GsnNode] = {}
        for n in self.nodes:
            result.setdefault(n.id, n)
        return result

    def node(self, node_id: str) -> GsnNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownNode(node_id)

    def get(self, node_id: str) -> Optional[GsnNode]:
        for n in self.nodes:
            if n.id == node_id:
                return n
        return None

    def edges_of(self, kind: EdgeKind) -> List[GsnEdge]:
        return [e for e in self.edges if e.kind is kind]

    def to_networkx(self, kinds: Iterable[EdgeKind] = (EdgeKind.SUPPORTED_BY,)) -> nx.DiGraph:
        kinds = set(kinds)
        g = nx.DiGraph()
        g.add_nodes_from(sorted(self.node_ids))
        for e in self.edges:
            if e.kind in kinds and e.source in g and e.target in g:
                g.add_edge(e.source, e.target)
        return g


def add_node(graph: ArgumentGraph, node: GsnNode) -> ArgumentGraph:
    if node.id in graph:
        raise DuplicateNode(node.id)
    return ArgumentGraph(graph.nodes + (node,), graph.edges)


def replace_node(graph: ArgumentGraph, node: GsnNode) -> ArgumentGraph:
    if node.id not in graph:
        raise UnknownNode(node.id)
    return ArgumentGraph(
        tuple(node if n.id == node.id else n for n in graph.nodes), graph.edges)


def add_edge(graph: ArgumentGraph, edge: GsnEdge) -> ArgumentGraph:
    nodes = graph.node_map()
    for end in (edge.source, edge.target):
        if end not in nodes:
            raise UnknownEndpoint(f"{edge}: no node '{end}'")
    if edge.source == edge.target:
        raise CycleIntroduced(f"{edge}: self-loop")
    if edge in set(graph.edges):
        raise DuplicateEdge(str(edge))
    if not kinds_compatible(edge.kind, nodes[edge.source].kind, nodes[edge.target].kind):
        raise KindIncompatible(
            f"{edge}: {edge.kind.value} cannot link "
            f"{nodes[edge.source].kind.value} to {nodes[edge.target].kind.value}")
    if edge.kind is EdgeKind.SUPPORTED_BY:
        support = graph.to_networkx()
        if nx.has_path(support, edge.target, edge.source):
            raise CycleIntroduced(f"{edge}: closes a SupportedBy cycle")
    return ArgumentGraph(graph.nodes, graph.edges + (edge,))


def remove_edge(graph: ArgumentGraph, edge: GsnEdge) -> ArgumentGraph:
    return ArgumentGraph(graph.nodes, tuple(e for e in graph.edges if e != edge))


def roots(graph: ArgumentGraph) -> List[GsnNode]:
    """Goal, Strategy and Solution nodes with no incoming SupportedBy edge."""
    supported = {e.target for e in graph.edges if e.kind is EdgeKind.SUPPORTED_BY}
    seen: Set[str] = set()
    result = []
    for n in sorted(graph.nodes, key=lambda n: n.id):
        if n.kind in SUPPORT_TARGETS and n.id not in supported and n.id not in seen:
            seen.add(n.id)
            result.append(n)
    return result


def children(graph: ArgumentGraph, node_id: str,
             kind: EdgeKind = EdgeKind.SUPPORTED_BY) -> List[GsnNode]:
    nodes = graph.node_map()
    targets = sorted({e.target for e in graph.edges
                      if e.source == node_id and e.kind is kind and e.target in nodes})
    return [nodes[t] for t in targets]


def descendants(graph: ArgumentGraph, node_id: str) -> Set[str]:
    """Ids reachable from ``node_id`` over both edge kinds, excluding itself."""
    g = graph.to_networkx(EdgeKind)
    if node_id not in g:
        raise UnknownNode(node_id)
    return set(nx.descendants(g, node_id))


def remove_subtree(graph: ArgumentGraph, node_id: str) -> ArgumentGraph:
    doomed = descendants(graph, node_id) | {node_id}
    return ArgumentGraph(
        (n for n in graph.nodes if n.id not in doomed),
        (e for e in graph.edges if e.source not in doomed and e.target not in doomed))


def topological_order(graph: ArgumentGraph) -> List[str]:
    """Deterministic SupportedBy order; raises ``CycleIntroduced`` on a cycle."""
    try:
        return list(nx.lexicographical_topological_sort(graph.to_networkx()))
    except nx.NetworkXUnfeasible as exc:
        raise CycleIntroduced(str(exc)) from exc


def graft_subtree(graph: ArgumentGraph, at: str, subtree: ArgumentGraph,
                  prefix: str) -> ArgumentGraph:
    anchor = graph.get(at)
    if anchor is None:
        raise UnknownAttachPoint(f"no node '{at}'")
    if anchor.kind not in ARGUING_KINDS:
        raise UnknownAttachPoint(f"'{at}' is a {anchor.kind.value}; expected Goal or Strategy")
    sub_roots = roots(subtree)
    if len(sub_roots) != 1:
        raise MultiRootSubtree(f"subtree has {len(sub_roots)} roots")

    existing = graph.node_ids
    renamed = []
    for n in subtree.nodes:
        new_id = prefix + n.id
        if new_id in existing:
            raise IdCollision(new_id)
        existing.add(new_id)
        renamed.append(replace(n, id=new_id))
    moved = [GsnEdge(prefix + e.source, prefix + e.target, e.kind) for e in subtree.edges]
    link = GsnEdge(at, prefix + sub_roots[0].id, EdgeKind.SUPPORTED_BY)
    logger.debug("grafting %d nodes under %s as %s", len(renamed), at, link.target)
    return ArgumentGraph(graph.nodes + tuple(renamed), graph.edges + tuple(moved) + (link,))


def _error(code: str, message: str, locus: Optional[str] = None) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, locus)


def _warning(code: str, message: str, locus: Optional[str] = None) -> Diagnostic:
    return Diagnostic(Severity.WARNING, code, message, locus)


def validate_graph(graph: ArgumentGraph, fragment: bool = False) -> List[Diagnostic]:
    """Check well-formedness; ``fragment`` relaxes the root-must-be-a-Goal
    and root-context rules for pattern templates and instantiated subtrees."""
    out: List[Diagnostic] = []

    counts: Dict[str, int] = {}
    for n in graph.nodes:
        counts[n.id] = counts.get(n.id, 0) + 1
    for node_id, count in counts.items():
        if count > 1:
            out.append(_error("GSN001", f"node id '{node_id}' is used {count} times", node_id))

    nodes = graph.node_map()
    for n in graph.nodes:
        if not NODE_ID_RE.match(n.id):
            out.append(_error("GSN002", f"invalid node id '{n.id}'", n.id))
        if not n.statement.strip():
            out.append(_error("GSN003", "statement is empty", n.id))
        if n.undeveloped and n.kind not in ARGUING_KINDS:
            out.append(_error("GSN004", f"{n.kind.value} cannot be marked undeveloped", n.id))

    seen_edges: Set[GsnEdge] = set()
    for e in graph.edges:
        locus = str(e)
        missing = [end for end in (e.source, e.target) if end not in nodes]
        if missing:
            out.append(_error("GSN005", f"edge refers to unknown node(s) {', '.join(missing)}", locus))
            continue
        if e.source == e.target:
            out.append(_error("GSN006", "edge links a node to itself", locus))
            continue
        if e in seen_edges:
            out.append(_error("GSN007", "duplicate edge", locus))
            continue
        seen_edges.add(e)
        src, tgt = nodes[e.source].kind, nodes[e.target].kind
        if not kinds_compatible(e.kind, src, tgt):
            out.append(_error(
                "GSN008", f"{e.kind.value} cannot link {src.value} to {tgt.value}", locus))

    support = graph.to_networkx()
    support.remove_edges_from(list(nx.selfloop_edges(support)))
    for component in nx.strongly_connected_components(support):
        if len(component) > 1:
            members = sorted(component)
            out.append(_error("GSN009", "SupportedBy cycle through " + ", ".join(members), members[0]))

    supporting = {e.source for e in graph.edges
                  if e.kind is EdgeKind.SUPPORTED_BY and e.target in nodes and e.source != e.target}
    for n in nodes.values():
        if n.kind is NodeKind.GOAL and not n.undeveloped and n.id not in supporting:
            out.append(_error("GSN010", "goal is neither supported nor marked undeveloped", n.id))
        if n.undeveloped and n.kind in ARGUING_KINDS:
            out.append(_warning("GSN020", f"{n.kind.value.lower()} is undeveloped", n.id))
        if n.uninstantiated:
            out.append(_warning("GSN021", "node still contains unbound hot spots", n.id))

    top = roots(graph)
    if len(top) > 1:
        out.append(_error("GSN011", "multiple roots: " + ", ".join(n.id for n in top), top[0].id))
    elif not top:
        out.append(_error("GSN012", "graph has no root"))
    elif not fragment:
        root = top[0]
        if root.kind is not NodeKind.GOAL:
            out.append(_error("GSN013", f"root is a {root.kind.value}, not a Goal", root.id))
        elif not any(e.source == root.id and e.kind is EdgeKind.IN_CONTEXT_OF for e in graph.edges):
            out.append(_warning("GSN014", "root goal has no context", root.id))

    return sorted(out, key=Diagnostic.sort_key)
