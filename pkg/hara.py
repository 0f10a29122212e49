"""Extended HARA: data model, CSV ingestion, risk determination and checks.

The risk determination table is data (``asil_table.csv``), loaded into a
4x5x4 array indexed by severity, exposure and controllability.
"""
from __future__ import annotations

import csv
import functools
import logging
import re
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from gsn import Diagnostic, Severity

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent / "data"
RISK_TABLE_FILE = "asil_table.csv"

META_FILE = "meta.csv"
FUNCTIONS_FILE = "system_functions.csv"
MALFUNCTIONS_FILE = "malfunctions.csv"
SCENARIOS_FILE = "operational_scenarios.csv"
HAZARDS_FILE = "hazardous_events.csv"
SAFE_EVENTS_FILE = "safe_events.csv"
HARA_FILES = (META_FILE, FUNCTIONS_FILE, MALFUNCTIONS_FILE, SCENARIOS_FILE, HAZARDS_FILE, SAFE_EVENTS_FILE)

META_COLUMNS = ("key", "value")
FUNCTION_COLUMNS = ("id", "description")
MALFUNCTION_COLUMNS = ("id", "function_id", "description")
SCENARIO_COLUMNS = ("id", "description")
HAZARD_COLUMNS = ("id", "malfunction_id", "scenario_id", "effect", "severity", "exposure",
                  "controllability", "rating", "safety_goal_id", "safety_goal_statement")
SAFE_EVENT_COLUMNS = ("id", "instruction", "scenario_id", "expected_outcome")
RISK_COLUMNS = ("severity", "exposure", "controllability", "rating")

ID_PATTERNS = {
    "SF": re.compile(r"^SF\d+$"),
    "MF": re.compile(r"^MF\d+$"),
    "OS": re.compile(r"^OS\d+$"),
    "HE": re.compile(r"^HE\d+$"),
    "SE": re.compile(r"^SE\d+$"),
    "SG": re.compile(r"^SG\d+$"),
}

# factor prefix -> number of classes
FACTORS = {"S": 4, "E": 5, "C": 4}


class Rating(IntEnum):
    QM = 0
    A = 1
    B = 2
    C = 3
    D = 4

    @classmethod
    def parse(cls, text: str) -> "Rating":
        try:
            return cls[text.strip()]
        except KeyError:
            raise ValueError(f"unknown rating '{text}'; expected one of QM, A, B, C, D") from None


def id_key(identifier: str) -> Tuple[str, int, str]:
    """Natural order for HARA ids: OS2 sorts before OS10."""
    m = re.match(r"^([A-Za-z]+)(\d+)$", identifier)
    if m:
        return (m.group(1), int(m.group(2)), "")
    return (identifier, -1, identifier)


def parse_factor(value: Union[int, str], prefix: str) -> int:
    """``'S3'`` or ``3`` -> 3, range-checked against the factor's class count."""
    if isinstance(value, str):
        text = value.strip()
        if not re.match(rf"^{prefix}\d$", text):
            raise ValueError(f"expected {prefix}0..{prefix}{FACTORS[prefix] - 1}, got '{value}'")
        level = int(text[1:])
    else:
        level = int(value)
    if not 0 <= level < FACTORS[prefix]:
        raise ValueError(f"{prefix}{level} is out of range {prefix}0..{prefix}{FACTORS[prefix] - 1}")
    return level


class HaraError(Exception):
    def __init__(self, diagnostics: List[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


def _error(code: str, message: str, locus: Optional[str] = None) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, locus)


class RiskTable(object):
    SHAPE = (FACTORS["S"], FACTORS["E"], FACTORS["C"])

    def __init__(self, grid: np.ndarray):
        self.grid = grid

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RiskTable":
        path = Path(path)
        grid = np.full(cls.SHAPE, -1, dtype=np.int8)
        diagnostics = []
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or tuple(header) != RISK_COLUMNS:
                raise HaraError([_error("HAR011", f"header must be {','.join(RISK_COLUMNS)}", path.name)])
            count = 0
            for row in reader:
                if not row:
                    continue
                count += 1
                locus = f"{path.name}:{reader.line_num}"
                try:
                    if len(row) != len(RISK_COLUMNS):
                        raise ValueError(f"expected {len(RISK_COLUMNS)} fields, got {len(row)}")
                    s, e, c = (parse_factor(v, p) for v, p in zip(row, "SEC"))
                    rating = Rating.parse(row[3])
                except ValueError as exc:
                    diagnostics.append(_error("HAR011", str(exc), locus))
                    continue
                if grid[s, e, c] != -1:
                    diagnostics.append(_error("HAR011", f"S{s},E{e},C{c} is listed twice", locus))
                grid[s, e, c] = int(rating)
        if count != grid.size:
            diagnostics.append(_error("HAR011", f"expected {grid.size} rows, found {count}", path.name))
        if (grid < 0).any():
            diagnostics.append(_error("HAR011", "table does not cover every S/E/C combination", path.name))
        if diagnostics:
            raise HaraError(diagnostics)
        return cls(grid)

    def rating(self, severity: Union[int, str], exposure: Union[int, str],
               controllability: Union[int, str]) -> Rating:
        s = parse_factor(severity, "S")
        e = parse_factor(exposure, "E")
        c = parse_factor(controllability, "C")
        return Rating(int(self.grid[s, e, c]))

    def is_monotone(self) -> bool:
        return all(bool((np.diff(self.grid, axis=axis) >= 0).all()) for axis in range(self.grid.ndim))

    def rows(self) -> Iterator[Tuple[str, str, str, str]]:
        for s, e, c in np.ndindex(*self.grid.shape):
            yield f"S{s}", f"E{e}", f"C{c}", Rating(int(self.grid[s, e, c])).name


@functools.lru_cache(maxsize=None)
def default_risk_table() -> RiskTable:
    return RiskTable.load(DATA_DIR / RISK_TABLE_FILE)


def risk_rating(severity: Union[int, str], exposure: Union[int, str], controllability: Union[int, str],
                table: Optional[RiskTable] = None) -> Rating:
    return (table or default_risk_table()).rating(severity, exposure, controllability)


@dataclass(frozen=True)
class SystemFunction:
    id: str
    description: str


@dataclass(frozen=True)
class Malfunction:
    id: str
    function_id: str
    description: str


@dataclass(frozen=True)
class OperationalScenario:
    id: str
    description: str


@dataclass(frozen=True)
class RiskAssessment:
    severity: int
    exposure: int
    controllability: int
    rating: Rating

    @classmethod
    def assess(cls, severity: int, exposure: int, controllability: int,
               table: Optional[RiskTable] = None) -> "RiskAssessment":
        return cls(severity, exposure, controllability, risk_rating(severity, exposure, controllability, table))

    @property
    def labels(self) -> Tuple[str, str, str]:
        return f"S{self.severity}", f"E{self.exposure}", f"C{self.controllability}"


@dataclass(frozen=True)
class HazardousEvent:
    id: str
    malfunction_id: str
    scenario_id: str
    effect: str
    risk: RiskAssessment
    safety_goal_id: Optional[str] = None

    @property
    def rating(self) -> Rating:
        return self.risk.rating


@dataclass(frozen=True)
class SafeEvent:
    id: str
    instruction: str
    scenario_id: str
    expected_outcome: str


@dataclass(frozen=True)
class SafetyGoal:
    id: str
    statement: str
    priority: Rating


@dataclass(frozen=True)
class HaraModel:
    system_name: str
    definition: str
    assumptions: Tuple[str, ...] = ()
    functions: Tuple[SystemFunction, ...] = ()
    malfunctions: Tuple[Malfunction, ...] = ()
    scenarios: Tuple[OperationalScenario, ...] = ()
    hazardous_events: Tuple[HazardousEvent, ...] = ()
    safe_events: Tuple[SafeEvent, ...] = ()
    safety_goals: Tuple[SafetyGoal, ...] = field(default=())

    def scenario(self, scenario_id: str) -> Optional[OperationalScenario]:
        return next((s for s in self.scenarios if s.id == scenario_id), None)

    def safety_goal(self, goal_id: str) -> Optional[SafetyGoal]:
        return next((g for g in self.safety_goals if g.id == goal_id), None)

    def safe_events_for(self, scenario_id: str) -> List[SafeEvent]:
        return sorted((e for e in self.safe_events if e.scenario_id == scenario_id), key=lambda e: id_key(e.id))


# ---------------------------------------------------------------------------
# ingestion

class _Table(object):
    """Rows of one CSV file keyed by column name, with their line numbers."""

    def __init__(self, name: str, columns: Sequence[str], rows: List[Tuple[int, Dict[str, str]]]):
        self.name = name
        self.columns = columns
        self.rows = rows


class _HaraReader(object):
    def __init__(self, root: Path, table: Optional[RiskTable]):
        self.root = root
        self.table = table
        self.diagnostics: List[Diagnostic] = []

    def error(self, code: str, message: str, locus: Optional[str] = None):
        self.diagnostics.append(_error(code, message, locus))

    def read(self, name: str, required: Sequence[str], optional: Sequence[str] = (),
             forbidden: Sequence[str] = ()) -> Optional[_Table]:
        path = self.root / name
        if not path.is_file():
            self.error("HAR001", "required file is missing", name)
            return None
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None:
                self.error("HAR002", "file has no header row", name)
                return None
            header = [h.strip() for h in header]
            bad = False
            for col in header:
                if col in forbidden:
                    self.error("HAR008", f"column '{col}' is not allowed here: safe events carry no risk assessment", name)
                    bad = True
                elif col not in required and col not in optional:
                    self.error("HAR002", f"unexpected column '{col}'", name)
                    bad = True
            for col in required:
                if col not in header:
                    self.error("HAR002", f"missing column '{col}'", name)
                    bad = True
            if len(set(header)) != len(header):
                self.error("HAR002", "duplicate column names", name)
                bad = True
            if bad:
                return None
            rows = []
            for row in reader:
                if not row or all(not cell.strip() for cell in row):
                    continue
                locus = f"{name}:{reader.line_num}"
                if len(row) != len(header):
                    self.error("HAR006", f"row has {len(row)} fields, expected {len(header)}", locus)
                    continue
                rows.append((reader.line_num, {col: cell.strip() for col, cell in zip(header, row)}))
        logger.info("read %d rows from %s", len(rows), path)
        return _Table(name, header, rows)

    def check_id(self, table: _Table, line: int, value: str, prefix: str, seen: Dict[str, str]) -> bool:
        locus = f"{table.name}:{line}"
        if not ID_PATTERNS[prefix].match(value):
            self.error("HAR006", f"id '{value}' does not match {prefix}<digits>", locus)
            return False
        if value in seen:
            self.error("HAR003", f"duplicate id '{value}' (first defined at {seen[value]})", locus)
            return False
        seen[value] = locus
        return True

    def require_text(self, table: _Table, line: int, row: Dict[str, str], column: str) -> bool:
        if not row[column]:
            self.error("HAR006", f"'{column}' is empty", f"{table.name}:{line}")
            return False
        return True

    def resolve(self, table: _Table, line: int, value: str, known: Dict[str, object], what: str) -> bool:
        if value not in known:
            self.error("HAR004", f"unresolved {what} '{value}'", f"{table.name}:{line}")
            return False
        return True

    def parse(self) -> HaraModel:
        table = self.table
        table_path = self.root / RISK_TABLE_FILE
        if table is None:
            if table_path.is_file():
                try:
                    table = RiskTable.load(table_path)
                except HaraError as exc:
                    self.diagnostics.extend(exc.diagnostics)
                    table = default_risk_table()
            else:
                table = default_risk_table()

        meta = self.read(META_FILE, META_COLUMNS)
        functions_t = self.read(FUNCTIONS_FILE, FUNCTION_COLUMNS)
        malfunctions_t = self.read(MALFUNCTIONS_FILE, MALFUNCTION_COLUMNS)
        scenarios_t = self.read(SCENARIOS_FILE, SCENARIO_COLUMNS)
        hazards_t = self.read(HAZARDS_FILE, [c for c in HAZARD_COLUMNS if c != "rating"], ("rating",))
        safe_t = self.read(SAFE_EVENTS_FILE, SAFE_EVENT_COLUMNS,
                           forbidden=("severity", "exposure", "controllability", "rating"))

        system_name, definition, assumptions = "", "", []
        if meta is not None:
            values: Dict[str, List[str]] = {}
            for line, row in meta.rows:
                key = row["key"]
                if key not in ("system_name", "definition", "assumption"):
                    self.error("HAR007", f"unknown meta key '{key}'", f"{META_FILE}:{line}")
                    continue
                values.setdefault(key, []).append(row["value"])
            for key in ("system_name", "definition"):
                found = values.get(key, [])
                if len(found) != 1 or not found[0]:
                    self.error("HAR007", f"meta key '{key}' must appear exactly once with a value", META_FILE)
            system_name = (values.get("system_name") or [""])[0]
            definition = (values.get("definition") or [""])[0]
            assumptions = [a for a in values.get("assumption", []) if a]

        seen: Dict[str, str] = {}
        functions: Dict[str, SystemFunction] = {}
        for line, row in (functions_t.rows if functions_t else []):
            if self.check_id(functions_t, line, row["id"], "SF", seen) and \
                    self.require_text(functions_t, line, row, "description"):
                functions[row["id"]] = SystemFunction(row["id"], row["description"])

        malfunctions: Dict[str, Malfunction] = {}
        for line, row in (malfunctions_t.rows if malfunctions_t else []):
            if not self.check_id(malfunctions_t, line, row["id"], "MF", seen):
                continue
            ok = self.require_text(malfunctions_t, line, row, "description")
            if functions_t is not None:
                ok = self.resolve(malfunctions_t, line, row["function_id"], functions, "system function") and ok
            if ok:
                malfunctions[row["id"]] = Malfunction(row["id"], row["function_id"], row["description"])

        scenarios: Dict[str, OperationalScenario] = {}
        for line, row in (scenarios_t.rows if scenarios_t else []):
            if self.check_id(scenarios_t, line, row["id"], "OS", seen) and \
                    self.require_text(scenarios_t, line, row, "description"):
                scenarios[row["id"]] = OperationalScenario(row["id"], row["description"])

        hazards: List[HazardousEvent] = []
        goal_text: Dict[str, str] = {}
        goal_links: Dict[str, List[Rating]] = {}
        for line, row in (hazards_t.rows if hazards_t else []):
            locus = f"{HAZARDS_FILE}:{line}"
            if not self.check_id(hazards_t, line, row["id"], "HE", seen):
                continue
            ok = self.require_text(hazards_t, line, row, "effect")
            if malfunctions_t is not None:
                ok = self.resolve(hazards_t, line, row["malfunction_id"], malfunctions, "malfunction") and ok
            if scenarios_t is not None:
                ok = self.resolve(hazards_t, line, row["scenario_id"], scenarios, "operational scenario") and ok
            try:
                s = parse_factor(row["severity"], "S")
                e = parse_factor(row["exposure"], "E")
                c = parse_factor(row["controllability"], "C")
            except ValueError as exc:
                self.error("HAR006", str(exc), locus)
                continue
            risk = RiskAssessment.assess(s, e, c, table)
            given = row.get("rating", "")
            if given:
                try:
                    if Rating.parse(given) != risk.rating:
                        self.error("HAR005", f"rating {given} does not match S{s}/E{e}/C{c} -> {risk.rating.name}", locus)
                        ok = False
                except ValueError as exc:
                    self.error("HAR006", str(exc), locus)
                    ok = False
            goal_id = row["safety_goal_id"] or None
            statement = row["safety_goal_statement"]
            if goal_id is None:
                if statement:
                    self.error("HAR006", "safety goal statement without safety_goal_id", locus)
                    ok = False
            elif not ID_PATTERNS["SG"].match(goal_id):
                self.error("HAR006", f"id '{goal_id}' does not match SG<digits>", locus)
                ok = False
            elif statement and goal_text.setdefault(goal_id, statement) != statement:
                self.error("HAR009", f"safety goal {goal_id} is stated differently elsewhere", locus)
                ok = False
            if ok:
                hazards.append(HazardousEvent(row["id"], row["malfunction_id"], row["scenario_id"],
                                              row["effect"], risk, goal_id))
                if goal_id is not None:
                    goal_links.setdefault(goal_id, []).append(risk.rating)

        goals = []
        for goal_id in sorted(goal_links, key=id_key):
            if goal_id not in goal_text:
                self.error("HAR006", f"safety goal {goal_id} has no statement", HAZARDS_FILE)
                continue
            if goal_id in seen:
                self.error("HAR003", f"safety goal id '{goal_id}' collides with another record", HAZARDS_FILE)
                continue
            goals.append(SafetyGoal(goal_id, goal_text[goal_id], max(goal_links[goal_id])))

        safe_events: List[SafeEvent] = []
        for line, row in (safe_t.rows if safe_t else []):
            if not self.check_id(safe_t, line, row["id"], "SE", seen):
                continue
            ok = self.require_text(safe_t, line, row, "instruction")
            ok = self.require_text(safe_t, line, row, "expected_outcome") and ok
            if scenarios_t is not None:
                ok = self.resolve(safe_t, line, row["scenario_id"], scenarios, "operational scenario") and ok
            if ok:
                safe_events.append(SafeEvent(row["id"], row["instruction"], row["scenario_id"],
                                             row["expected_outcome"]))

        if self.diagnostics:
            raise HaraError(sorted(self.diagnostics, key=Diagnostic.sort_key))
        return HaraModel(
            system_name=system_name,
            definition=definition,
            assumptions=tuple(assumptions),
            functions=tuple(functions.values()),
            malfunctions=tuple(malfunctions.values()),
            scenarios=tuple(scenarios.values()),
            hazardous_events=tuple(hazards),
            safe_events=tuple(safe_events),
            safety_goals=tuple(goals),
        )


def parse_hara(root: Union[str, Path], table: Optional[RiskTable] = None) -> HaraModel:
    """Load a HARA directory; raises ``HaraError`` listing every problem found.

    Ratings are recomputed from S/E/C with ``table``, else the directory's own
    ``asil_table.csv``, else the shipped default table.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"HARA directory not found: {root}")
    return _HaraReader(root, table).parse()


# ---------------------------------------------------------------------------
# checks

def validate_hara(model: HaraModel, threshold: int = Rating.C) -> List[Diagnostic]:
    out: List[Diagnostic] = []
    functions = {f.id for f in model.functions}
    malfunctions = {m.id for m in model.malfunctions}
    scenarios = {s.id for s in model.scenarios}
    goals = {g.id for g in model.safety_goals}

    for m in model.malfunctions:
        if m.function_id not in functions:
            out.append(_error("HAR033", f"unresolved system function '{m.function_id}'", m.id))
    for he in model.hazardous_events:
        if he.malfunction_id not in malfunctions:
            out.append(_error("HAR033", f"unresolved malfunction '{he.malfunction_id}'", he.id))
        if he.scenario_id not in scenarios:
            out.append(_error("HAR033", f"unresolved operational scenario '{he.scenario_id}'", he.id))
        if he.rating >= threshold and he.safety_goal_id is None:
            out.append(_error("HAR030", f"rating {he.rating.name} requires a safety goal", he.id))
        elif he.safety_goal_id is not None and he.safety_goal_id not in goals:
            out.append(_error("HAR033", f"unresolved safety goal '{he.safety_goal_id}'", he.id))
    for se in model.safe_events:
        if se.scenario_id not in scenarios:
            out.append(_error("HAR032", f"unresolved operational scenario '{se.scenario_id}'", se.id))

    used = {he.scenario_id for he in model.hazardous_events} | {se.scenario_id for se in model.safe_events}
    for s in model.scenarios:
        if s.id not in used:
            out.append(Diagnostic(Severity.WARNING, "HAR031",
                                  "scenario appears in no hazardous event or safe event", s.id))
    return sorted(out, key=Diagnostic.sort_key)


def top_priority_hazards(model: HaraModel, threshold: int = Rating.C) -> List[HazardousEvent]:
    chosen = [he for he in model.hazardous_events if he.rating >= threshold]
    return sorted(chosen, key=lambda he: (-int(he.rating), id_key(he.id)))
