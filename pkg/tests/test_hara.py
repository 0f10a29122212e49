import csv
import itertools
import random
from dataclasses import replace

import pytest

from emitters import dump_hara, write_hara
from hara import (DATA_DIR, HAZARDS_FILE, RISK_TABLE_FILE, SAFE_EVENTS_FILE, SCENARIOS_FILE, HaraError,
                  HaraModel, HazardousEvent, OperationalScenario, Rating, RiskAssessment, RiskTable,
                  default_risk_table, id_key, parse_factor, parse_hara, risk_rating, top_priority_hazards,
                  validate_hara)


def error_codes(exc_info):
    return {d.code for d in exc_info.value.diagnostics}


def rewrite(path, transform):
    lines = path.read_text(encoding="utf-8").split("\n")
    path.write_text("\n".join(transform(lines)), encoding="utf-8")


############ risk table

def test_risk_rating_examples():
    assert risk_rating(0, 4, 3) is Rating.QM
    assert risk_rating("S3", "E4", "C3") is Rating.D
    assert risk_rating(3, 1, 1) is Rating.QM
    assert risk_rating(1, 4, 3) is Rating.B
    assert risk_rating(3, 1, 3) is Rating.A


def test_table_matches_csv_file():
    with open(DATA_DIR / RISK_TABLE_FILE, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 80
    for row in rows:
        expected = Rating[row["rating"]]
        assert risk_rating(row["severity"], row["exposure"], row["controllability"]) is expected, row


def test_table_is_monotone_exhaustively():
    table = default_risk_table()
    assert table.is_monotone()
    for s, e, c in itertools.product(range(4), range(5), range(4)):
        here = table.rating(s, e, c)
        if s < 3:
            assert table.rating(s + 1, e, c) >= here
        if e < 4:
            assert table.rating(s, e + 1, c) >= here
        if c < 3:
            assert table.rating(s, e, c + 1) >= here


def test_rows_cover_every_triple():
    rows = list(default_risk_table().rows())
    assert len(rows) == 80
    assert len({r[:3] for r in rows}) == 80


@pytest.mark.parametrize("value,prefix", [("S4", "S"), ("E5", "E"), ("X1", "C"), (-1, "S"), ("", "E")])
def test_parse_factor_rejects(value, prefix):
    with pytest.raises(ValueError):
        parse_factor(value, prefix)


def _write_table(path, rating_of):
    lines = ["severity,exposure,controllability,rating"]
    for s, e, c in itertools.product(range(4), range(5), range(4)):
        lines.append(f"S{s},E{e},C{c},{rating_of(s, e, c)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_custom_table(tmp_path):
    path = tmp_path / RISK_TABLE_FILE
    _write_table(path, lambda s, e, c: "A" if s else "QM")
    table = RiskTable.load(path)
    assert table.rating(3, 4, 3) is Rating.A
    assert risk_rating(0, 4, 3, table) is Rating.QM


def test_table_missing_row(tmp_path):
    path = tmp_path / RISK_TABLE_FILE
    _write_table(path, lambda s, e, c: "QM")
    rewrite(path, lambda lines: lines[:-2] + lines[-1:])
    with pytest.raises(HaraError) as info:
        RiskTable.load(path)
    assert error_codes(info) == {"HAR011"}


def test_directory_table_overrides_default(fixture_hara_copy):
    _write_table(fixture_hara_copy / RISK_TABLE_FILE, lambda s, e, c: "D")
    with pytest.raises(HaraError) as info:
        parse_hara(fixture_hara_copy)
    assert error_codes(info) == {"HAR005"}


############ parse_hara

def test_simlingo_fixture(fixture_simlingo_hara):
    model = fixture_simlingo_hara
    assert model.system_name == "SimLingo"
    assert model.assumptions == ("SimLingo is in action mode",)
    assert len(model.functions) == 5
    assert len(model.malfunctions) == 5
    assert len(model.scenarios) == 9
    assert len(model.hazardous_events) == 9
    assert len(model.safe_events) == 9
    assert len(model.safety_goals) == 9
    assert model.functions[4].description == "Able to reject dangerous instructions"
    assert model.scenario("OS1").description == "Vehicle at a intersection"
    for he in model.hazardous_events:
        assert he.rating == risk_rating(*he.risk.labels)
    assert model.safety_goal("SG1").priority is Rating.D


def test_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_hara(tmp_path / "absent")


def test_missing_file(fixture_hara_copy):
    (fixture_hara_copy / SAFE_EVENTS_FILE).unlink()
    with pytest.raises(HaraError) as info:
        parse_hara(fixture_hara_copy)
    assert error_codes(info) == {"HAR001"}


def test_unresolved_scenario(fixture_hara_copy):
    rewrite(fixture_hara_copy / HAZARDS_FILE, lambda lines: [l.replace("HE3,MF5,OS3,", "HE3,MF5,OS99,")
                                                             for l in lines])
    with pytest.raises(HaraError) as info:
        parse_hara(fixture_hara_copy)
    [d] = info.value.diagnostics
    assert d.code == "HAR004"
    assert "OS99" in d.message
    assert d.locus == f"{HAZARDS_FILE}:4"


def test_rating_mismatch(fixture_hara_copy):
    rewrite(fixture_hara_copy / HAZARDS_FILE, lambda lines: [l.replace("S3,E4,C3,D,SG1", "S3,E4,C3,B,SG1")
                                                             for l in lines])
    with pytest.raises(HaraError) as info:
        parse_hara(fixture_hara_copy)
    assert error_codes(info) == {"HAR005"}


def test_rating_column_is_optional(fixture_hara_copy):
    def drop_rating(lines):
        out = []
        for line in lines:
            cells = line.split(",")
            out.append(",".join(cells[:7] + cells[8:]) if line else line)
        return out

    rewrite(fixture_hara_copy / HAZARDS_FILE, drop_rating)
    model = parse_hara(fixture_hara_copy)
    assert [he.rating.name for he in model.hazardous_events][:2] == ["D", "C"]


def test_duplicate_id(fixture_hara_copy):
    rewrite(fixture_hara_copy / SCENARIOS_FILE, lambda lines: lines[:-1] + ["OS9,Vehicle parked", ""])
    with pytest.raises(HaraError) as info:
        parse_hara(fixture_hara_copy)
    assert error_codes(info) == {"HAR003"}


def test_bad_header(fixture_hara_copy):
    rewrite(fixture_hara_copy / SCENARIOS_FILE, lambda lines: ["id,text"] + lines[1:])
    with pytest.raises(HaraError) as info:
        parse_hara(fixture_hara_copy)
    assert "HAR002" in error_codes(info)


def test_safe_events_reject_risk_columns(fixture_hara_copy):
    def add_severity(lines):
        return [line + ("," + ("severity" if i == 0 else "S1") if line else "") for i, line in enumerate(lines)]

    rewrite(fixture_hara_copy / SAFE_EVENTS_FILE, add_severity)
    with pytest.raises(HaraError) as info:
        parse_hara(fixture_hara_copy)
    assert "HAR008" in error_codes(info)


def test_errors_are_collected(fixture_hara_copy):
    rewrite(fixture_hara_copy / HAZARDS_FILE, lambda lines: [l.replace("OS1,", "OS77,").replace("S3,E3,C3,C", "S3,E3,C3,A")
                                                             for l in lines])
    with pytest.raises(HaraError) as info:
        parse_hara(fixture_hara_copy)
    assert error_codes(info) == {"HAR004", "HAR005"}
    assert len(info.value.diagnostics) == 4


############ validate_hara

def test_fixture_validates(fixture_simlingo_hara):
    assert validate_hara(fixture_simlingo_hara, Rating.C) == []


def test_missing_safety_goal(fixture_simlingo_hara):
    model = fixture_simlingo_hara
    events = (replace(model.hazardous_events[0], safety_goal_id=None),) + model.hazardous_events[1:]
    found = validate_hara(replace(model, hazardous_events=events), Rating.C)
    assert [(d.code, d.locus) for d in found] == [("HAR030", "HE1")]


def test_unreferenced_scenario(fixture_hara_copy):
    rewrite(fixture_hara_copy / HAZARDS_FILE, lambda lines: [l for l in lines if ",OS8," not in l])
    rewrite(fixture_hara_copy / SAFE_EVENTS_FILE, lambda lines: [l for l in lines if ",OS8," not in l])
    found = validate_hara(parse_hara(fixture_hara_copy), Rating.C)
    assert [(d.severity.value, d.code, d.locus) for d in found] == [("Warning", "HAR031", "OS8")]


def test_unresolved_safe_event_scenario(fixture_simlingo_hara):
    model = fixture_simlingo_hara
    events = (replace(model.safe_events[0], scenario_id="OS42"),) + model.safe_events[1:]
    found = validate_hara(replace(model, safe_events=events))
    assert ("HAR032", "SE1") in [(d.code, d.locus) for d in found]


############ top_priority_hazards

def test_top_priority_thresholds(fixture_simlingo_hara):
    model = fixture_simlingo_hara
    assert len(top_priority_hazards(model, Rating.QM)) == len(model.hazardous_events)
    assert top_priority_hazards(model, 5) == []
    ordered = [he.id for he in top_priority_hazards(model, Rating.C)]
    assert ordered[:2] == ["HE1", "HE4"]
    assert set(ordered) == {he.id for he in model.hazardous_events if he.rating >= Rating.C}
    assert [he.id for he in top_priority_hazards(model, Rating.D)] == ["HE1", "HE4"]


def _random_model(rng):
    n = rng.randint(0, 15)
    scenarios = tuple(OperationalScenario(f"OS{i}", f"scenario {i}") for i in range(1, 4))
    events = []
    for i in rng.sample(range(1, 40), n):
        risk = RiskAssessment.assess(rng.randrange(4), rng.randrange(5), rng.randrange(4))
        events.append(HazardousEvent(f"HE{i}", "MF1", rng.choice(scenarios).id, "effect", risk, None))
    return HaraModel("Sys", "definition", scenarios=scenarios, hazardous_events=tuple(events))


def test_top_priority_matches_brute_force():
    rng = random.Random(42)
    for _ in range(200):
        model = _random_model(rng)
        threshold = rng.choice(list(Rating))
        got = top_priority_hazards(model, threshold)
        expected = [he for he in model.hazardous_events if he.rating >= threshold]
        assert {he.id for he in got} == {he.id for he in expected}
        keys = [(-int(he.rating), id_key(he.id)) for he in got]
        assert keys == sorted(keys)


############ writer round trip

def test_dump_and_reparse(fixture_simlingo_hara, tmp_path):
    write_hara(fixture_simlingo_hara, tmp_path / "copy")
    assert parse_hara(tmp_path / "copy") == fixture_simlingo_hara


def test_dump_is_stable(fixture_simlingo_hara, fixture_simlingo_dir):
    files = dump_hara(fixture_simlingo_hara)
    for name in (SCENARIOS_FILE, SAFE_EVENTS_FILE, HAZARDS_FILE):
        assert files[name] == (fixture_simlingo_dir / name).read_text(encoding="utf-8")
