"""Safety-case construction.

Starts from the top goal, attaches the configured contexts and assumptions,
decomposes over the HARA system functions and develops the instruction
branches by instantiating the reject and accept patterns. ``coverage_check``
traces the finished case back to the HARA rows.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

from gsn import (ArgumentGraph, EdgeKind, GsnEdge, GsnNode, NodeKind, add_edge, add_node,
                 descendants, graft_subtree, has_errors, replace_node, roots)
from hara import HaraModel, Rating, id_key, top_priority_hazards, validate_hara
from pattern import (Choice, Multiplicity, Pattern, PatternLibrary, Placeholder, split_template,
                     validate_pattern)

logger = logging.getLogger(__name__)

# traceability tag keys
TAG_BRANCH = "branch"
TAG_FUNCTION = "function"
TAG_SCENARIO = "scenario"
TAG_SAFETY_GOAL = "safety-goal"
TAG_HARA_REF = "hara-ref"
TAG_ALIAS = "alias"

REJECT = "reject"
ACCEPT = "accept"
BRANCHES = (REJECT, ACCEPT)

DEFAULT_EXPECTED_OUTCOME = "the outcome expected by each Safe Event"


class BuildError(Exception):
    pass


class ConfigError(BuildError):
    pass


class PreconditionFailed(BuildError):
    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class InstantiationError(Exception):
    pass


class InvalidPattern(InstantiationError):
    pass


class MissingBinding(InstantiationError):
    def __init__(self, name: str):
        super().__init__(f"hot spot '{name}' is not bound")
        self.name = name


class EmptyCollection(InstantiationError):
    def __init__(self, name: str):
        super().__init__(f"collection '{name}' is empty")
        self.name = name


class PlaceholderFieldUnknown(InstantiationError):
    def __init__(self, name: str, field_name: str):
        super().__init__(f"'{name}' has no field '{field_name}'")
        self.name = name
        self.field = field_name


class ChoiceUnresolved(InstantiationError):
    pass


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class BuildConfig:
    system_name: str
    contexts: Tuple[str, ...] = ()
    assumptions: Tuple[str, ...] = ()
    priority_threshold: Rating = Rating.C
    reject_pattern: str = "RI"
    accept_pattern: str = "AAI"
    id_prefixes: Mapping[str, str] = field(default_factory=lambda: {REJECT: "RI.", ACCEPT: "AAI."})
    expected_outcome: str = DEFAULT_EXPECTED_OUTCOME
    reject_function: Optional[str] = None
    aliases: Mapping[str, str] = field(default_factory=dict)

    @property
    def pattern_names(self) -> Dict[str, str]:
        return {REJECT: self.reject_pattern, ACCEPT: self.accept_pattern}

    def prefix(self, branch: str) -> str:
        return self.id_prefixes.get(branch, {REJECT: "RI.", ACCEPT: "AAI."}[branch])


_CONFIG_KEYS = {"system_name", "contexts", "assumptions", "priority_threshold", "reject_pattern",
                "accept_pattern", "id_prefixes", "expected_outcome", "reject_function", "aliases"}


def _text_list(data: Mapping[str, Any], key: str) -> Tuple[str, ...]:
    value = data[key]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"'{key}' must be an array of strings")
    return tuple(value)


def _text_map(data: Mapping[str, Any], key: str) -> Dict[str, str]:
    value = data[key]
    if not isinstance(value, dict) or not all(isinstance(v, str) for v in value.values()):
        raise ConfigError(f"'{key}' must be an object of strings")
    return dict(value)


def config_from_dict(data: Mapping[str, Any], defaults: Optional[BuildConfig] = None) -> BuildConfig:
    """Overlay ``data`` on ``defaults``; unknown keys are rejected."""
    if not isinstance(data, Mapping):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError("unknown configuration key(s): " + ", ".join(unknown))
    changes: Dict[str, Any] = {}
    for key in ("system_name", "reject_pattern", "accept_pattern", "expected_outcome", "reject_function"):
        if key in data:
            if not isinstance(data[key], str) or not data[key].strip():
                raise ConfigError(f"'{key}' must be a non-empty string")
            changes[key] = data[key]
    for key in ("contexts", "assumptions"):
        if key in data:
            changes[key] = _text_list(data, key)
    for key in ("id_prefixes", "aliases"):
        if key in data:
            changes[key] = _text_map(data, key)
    if "priority_threshold" in data:
        try:
            changes["priority_threshold"] = Rating.parse(str(data["priority_threshold"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if defaults is None:
        if "system_name" not in changes:
            raise ConfigError("'system_name' is required")
        return BuildConfig(**changes)
    return replace(defaults, **changes)


def load_config(path: Union[str, Path], defaults: Optional[BuildConfig] = None) -> BuildConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    logger.info("loaded build configuration from %s", path)
    return config_from_dict(data, defaults)


def default_config(hara: HaraModel) -> BuildConfig:
    return BuildConfig(system_name=hara.system_name, assumptions=hara.assumptions)


# ---------------------------------------------------------------------------
# instantiation

Record = Mapping[str, Any]


@dataclass
class BindingSet:
    scalar: Dict[str, str] = field(default_factory=dict)
    collections: Dict[str, List[Any]] = field(default_factory=dict)
    choices: Dict[str, List[str]] = field(default_factory=dict)


def _as_record(element: Any) -> Record:
    if isinstance(element, Mapping):
        return element
    return {"text": str(element)}


class _Expander(object):
    def __init__(self, pattern: Pattern, bindings: BindingSet, id_prefix: str):
        self.pattern = pattern
        self.bindings = bindings
        self.id_prefix = id_prefix
        self.template = pattern.template.node_map()
        self.out_edges: Dict[str, List[GsnEdge]] = {}
        for e in pattern.template.edges:
            self.out_edges.setdefault(e.source, []).append(e)
        self.nodes: List[GsnNode] = []
        self.edges: List[GsnEdge] = []
        self.made: Dict[Tuple[str, str], str] = {}

    def run(self) -> ArgumentGraph:
        root = roots(self.pattern.template)[0]
        if isinstance(self.pattern.expansions.get(root.id), Multiplicity):
            raise InvalidPattern("the root node cannot carry a multiplicity")
        self.visit(root.id, (), "")
        return ArgumentGraph(self.nodes, self.edges)

    def collection(self, name: str, scope: Tuple[Tuple[str, Record], ...]) -> Optional[List[Any]]:
        for _, record in reversed(scope):
            value = record.get(name)
            if isinstance(value, (list, tuple)):
                return list(value)
        if name in self.bindings.collections:
            return list(self.bindings.collections[name])
        hot = self.pattern.hot_spot(name)
        if hot is not None and not hot.required:
            return None
        raise MissingBinding(name)

    def substitute(self, text: str, scope: Tuple[Tuple[str, Record], ...]) -> Tuple[str, bool]:
        out = []
        unbound = False
        for part in split_template(text):
            if not isinstance(part, Placeholder):
                out.append(part)
                continue
            record = next((r for n, r in reversed(scope) if n == part.name), None)
            if record is not None:
                key = part.field or "text"
                if key not in record:
                    raise PlaceholderFieldUnknown(part.name, key)
                out.append(str(record[key]))
            elif part.name in self.bindings.scalar:
                if part.field not in (None, "text"):
                    raise PlaceholderFieldUnknown(part.name, part.field)
                out.append(self.bindings.scalar[part.name])
            elif part.name in self.bindings.collections:
                raise InstantiationError(
                    f"collection '{part.name}' is only in scope below its multiplicity node")
            else:
                hot = self.pattern.hot_spot(part.name)
                if hot is None or hot.required:
                    raise MissingBinding(part.name)
                unbound = True
                out.append("{" + part.name + ("." + part.field if part.field else "") + "}")
        return "".join(out), unbound

    def alternatives(self, node_id: str) -> List[GsnEdge]:
        edges = self.out_edges.get(node_id, [])
        expansion = self.pattern.expansions.get(node_id)
        if not isinstance(expansion, Choice):
            return edges
        support = [e for e in edges if e.kind is EdgeKind.SUPPORTED_BY]
        selected = self.bindings.choices.get(node_id)
        if selected is None:
            selected = [e.target for e in support]
        unknown = [s for s in selected if s not in {e.target for e in support}]
        if unknown or not expansion.min <= len(selected) <= expansion.max:
            raise ChoiceUnresolved(
                f"choice at '{node_id}' needs {expansion.min}..{expansion.max} of "
                f"{', '.join(e.target for e in support)}; got {', '.join(selected) or 'none'}")
        keep = set(selected)
        return [e for e in edges if e.kind is not EdgeKind.SUPPORTED_BY or e.target in keep]

    def visit(self, node_id: str, scope: Tuple[Tuple[str, Record], ...], suffix: str) -> str:
        key = (node_id, suffix)
        if key in self.made:
            return self.made[key]
        template = self.template[node_id]
        new_id = self.id_prefix + node_id + suffix
        self.made[key] = new_id

        statement, unbound = self.substitute(template.statement, scope)
        tags = {}
        for tag_key, value in template.tags.items():
            tags[tag_key], tag_unbound = self.substitute(value, scope)
            unbound = unbound or tag_unbound
        self.nodes.append(replace(template, id=new_id, statement=statement, tags=tags, uninstantiated=unbound))

        for edge in self.alternatives(node_id):
            expansion = self.pattern.expansions.get(edge.target)
            if isinstance(expansion, Multiplicity):
                elements = self.collection(expansion.over, scope)
                if elements is None:
                    continue
                if not elements:
                    raise EmptyCollection(expansion.over)
                for index, element in enumerate(elements, start=1):
                    inner = scope + ((expansion.over, _as_record(element)),)
                    child = self.visit(edge.target, inner, f"{suffix}.{index}")
                    self.edges.append(GsnEdge(new_id, child, edge.kind))
            else:
                child = self.visit(edge.target, scope, suffix)
                self.edges.append(GsnEdge(new_id, child, edge.kind))
        return new_id


def instantiate_pattern(p: Pattern, b: BindingSet, id_prefix: str = "") -> ArgumentGraph:
    """Replace hot spots with bindings and expand multiplicities.

    Replicated nodes (and everything below them) get ``.1``, ``.2`` ...
    suffixes in binding order.
    """
    problems = [d for d in validate_pattern(p) if d.is_error]
    if problems:
        raise InvalidPattern(f"pattern {p.name} has errors: " + "; ".join(str(d) for d in problems))
    for hot in p.params:
        if hot.required and not hot.collection and hot.name not in b.scalar:
            raise MissingBinding(hot.name)
    graph = _Expander(p, b, id_prefix).run()
    logger.info("instantiated pattern %s: %d nodes", p.name, len(graph))
    return graph


# ---------------------------------------------------------------------------
# bindings from the HARA model

def reject_bindings(cfg: BuildConfig, hara: HaraModel) -> BindingSet:
    """One ``scenario`` element per scenario of a top-priority hazardous event,
    each carrying its ``hazard`` elements."""
    per_scenario: Dict[str, List[Dict[str, str]]] = {}
    for he in sorted(top_priority_hazards(hara, cfg.priority_threshold), key=lambda h: id_key(h.id)):
        goal = hara.safety_goal(he.safety_goal_id) if he.safety_goal_id else None
        per_scenario.setdefault(he.scenario_id, []).append({
            "id": he.id,
            "text": he.effect,
            "effect": he.effect,
            "rating": he.rating.name,
            "goal_id": goal.id if goal else "",
            "goal": goal.statement if goal else f"Hazardous event {he.id} is avoided",
        })
    scenarios = []
    for scenario_id in sorted(per_scenario, key=id_key):
        scenario = hara.scenario(scenario_id)
        scenarios.append({
            "id": scenario_id,
            "text": scenario.description if scenario else scenario_id,
            "hazard": per_scenario[scenario_id],
        })
    return BindingSet(scalar={"system": cfg.system_name}, collections={"scenario": scenarios})


def accept_bindings(cfg: BuildConfig, hara: HaraModel) -> BindingSet:
    """One ``scenario`` element per scenario with Safe Events, each carrying
    its ``safe_event`` elements."""
    scenario_ids = sorted({se.scenario_id for se in hara.safe_events}, key=id_key)
    scenarios = []
    for scenario_id in scenario_ids:
        scenario = hara.scenario(scenario_id)
        scenarios.append({
            "id": scenario_id,
            "text": scenario.description if scenario else scenario_id,
            "safe_event": [{
                "id": se.id,
                "text": se.instruction,
                "instruction": se.instruction,
                "outcome": se.expected_outcome,
                "scenario": se.scenario_id,
            } for se in hara.safe_events_for(scenario_id)],
        })
    return BindingSet(
        scalar={"system": cfg.system_name, "outcome": cfg.expected_outcome},
        collections={"scenario": scenarios})


# ---------------------------------------------------------------------------
# assembly

def _function_claim(system_name: str, description: str) -> str:
    if description.startswith(system_name):
        return description
    return f"{system_name} is {description[:1].lower()}{description[1:]}"


def _reject_function(cfg: BuildConfig, hara: HaraModel) -> Optional[str]:
    if cfg.reject_function:
        if not any(f.id == cfg.reject_function for f in hara.functions):
            raise ConfigError(f"reject_function '{cfg.reject_function}' is not a system function")
        return cfg.reject_function
    for f in sorted(hara.functions, key=lambda f: id_key(f.id)):
        if "reject" in f.description.lower():
            return f.id
    return None


class _TopLevel(object):
    def __init__(self, cfg: BuildConfig):
        self.cfg = cfg
        self.graph = ArgumentGraph()
        self.counters: Dict[str, int] = {}

    def add(self, prefix: str, kind: NodeKind, statement: str, parent: Optional[str] = None,
            edge: EdgeKind = EdgeKind.SUPPORTED_BY, undeveloped: bool = False, **tags: str) -> str:
        self.counters[prefix] = self.counters.get(prefix, 0) + 1
        node_id = f"{prefix}.{self.counters[prefix]}"
        tags = {k.replace("_", "-"): v for k, v in tags.items()}
        if node_id in self.cfg.aliases:
            tags[TAG_ALIAS] = self.cfg.aliases[node_id]
        self.graph = add_node(self.graph, GsnNode(node_id, kind, statement, undeveloped, False, tags))
        if parent is not None:
            self.graph = add_edge(self.graph, GsnEdge(parent, node_id, edge))
        return node_id


def _require_valid_hara(cfg: BuildConfig, hara: HaraModel):
    diagnostics = validate_hara(hara, cfg.priority_threshold)
    if has_errors(diagnostics):
        raise PreconditionFailed("HARA model has errors", diagnostics)


def build_top_level(cfg: BuildConfig, hara: HaraModel) -> ArgumentGraph:
    _require_valid_hara(cfg, hara)
    top = _TopLevel(cfg)
    root = top.add("G", NodeKind.GOAL, f"{cfg.system_name} is sufficiently safe to use")
    for text in cfg.contexts:
        top.add("C", NodeKind.CONTEXT, text, root, EdgeKind.IN_CONTEXT_OF)
    for text in cfg.assumptions:
        top.add("A", NodeKind.ASSUMPTION, text, root, EdgeKind.IN_CONTEXT_OF)
    strategy = top.add("S", NodeKind.STRATEGY, "Argument over system functions", root)

    reject_sf = _reject_function(cfg, hara)
    for f in sorted(hara.functions, key=lambda f: id_key(f.id)):
        claim = _function_claim(cfg.system_name, f.description)
        if f.id == reject_sf:
            top.add("G", NodeKind.GOAL, claim, strategy, undeveloped=True, function=f.id, branch=REJECT)
        else:
            top.add("G", NodeKind.GOAL, claim, strategy, undeveloped=True, function=f.id)
    if reject_sf is None:
        top.add("G", NodeKind.GOAL, f"{cfg.system_name} is able to reject dangerous user instructions",
                strategy, undeveloped=True, branch=REJECT)
    top.add("G", NodeKind.GOAL, f"{cfg.system_name} is able to accept safe user instructions",
            strategy, undeveloped=True, branch=ACCEPT)
    logger.info("top-level argument for %s: %d nodes", cfg.system_name, len(top.graph))
    return top.graph


def branch_goal(case: ArgumentGraph, branch: str) -> Optional[str]:
    for n in sorted(case.nodes, key=lambda n: n.id):
        if n.tag(TAG_BRANCH) == branch:
            return n.id
    return None


def build_safety_case(cfg: BuildConfig, hara: HaraModel,
                      lib: PatternLibrary) -> Tuple[ArgumentGraph, "CoverageReport"]:
    patterns = {branch: lib.get(name) for branch, name in cfg.pattern_names.items()}
    case = build_top_level(cfg, hara)
    bindings = {REJECT: reject_bindings(cfg, hara), ACCEPT: accept_bindings(cfg, hara)}
    for branch in BRANCHES:
        fragment = instantiate_pattern(patterns[branch], bindings[branch])
        anchor = branch_goal(case, branch)
        case = replace_node(case, replace(case.node(anchor), undeveloped=False))
        case = graft_subtree(case, anchor, fragment, cfg.prefix(branch))
        logger.info("grafted %s pattern under %s", patterns[branch].name, anchor)
    return case, coverage_check(case, hara, cfg)


# ---------------------------------------------------------------------------
# coverage

class Verdict(Enum):
    PASS = "Pass"
    FAIL = "Fail"


@dataclass(frozen=True)
class CoverageReport:
    scenario_coverage: Dict[str, Dict[str, bool]]
    unbound_hotspots: Tuple[str, ...]
    unsupported_safety_goals: Tuple[str, ...]
    verdict: Verdict

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    def missing(self, branch: str) -> List[str]:
        return [s for s, ok in self.scenario_coverage.get(branch, {}).items() if not ok]


def _branch_refs(case: ArgumentGraph, branch: str) -> Set[str]:
    nodes = case.node_map()
    under: Set[str] = set()
    for n in nodes.values():
        if n.tag(TAG_BRANCH) == branch:
            under |= descendants(case, n.id) | {n.id}
    return {nodes[i].tags[TAG_HARA_REF] for i in under if TAG_HARA_REF in nodes[i].tags}


def coverage_check(case: ArgumentGraph, hara: HaraModel, cfg: BuildConfig) -> CoverageReport:
    top = top_priority_hazards(hara, cfg.priority_threshold)
    hazard_scenario = {he.id: he.scenario_id for he in hara.hazardous_events}
    safe_scenario = {se.id: se.scenario_id for se in hara.safe_events}
    expected = {
        REJECT: sorted({he.scenario_id for he in top}, key=id_key),
        ACCEPT: sorted({se.scenario_id for se in hara.safe_events}, key=id_key),
    }
    lookups = {REJECT: hazard_scenario, ACCEPT: safe_scenario}

    coverage: Dict[str, Dict[str, bool]] = {}
    for branch in BRANCHES:
        refs = _branch_refs(case, branch)
        covered = {lookups[branch][r] for r in refs if r in lookups[branch]}
        coverage[branch] = {s: s in covered for s in expected[branch]}

    goal_tags = {n.tag(TAG_SAFETY_GOAL) for n in case.nodes}
    wanted_goals = sorted({he.safety_goal_id for he in top if he.safety_goal_id}, key=id_key)
    unsupported = tuple(g for g in wanted_goals if g not in goal_tags)
    unbound = tuple(sorted({n.id for n in case.nodes if n.uninstantiated}))

    ok = not unsupported and not unbound and all(all(v.values()) for v in coverage.values())
    return CoverageReport(coverage, unbound, unsupported, Verdict.PASS if ok else Verdict.FAIL)
