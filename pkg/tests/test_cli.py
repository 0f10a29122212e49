import pytest

from cli import CASE_FILE, COMMANDS, DOT_FILE, REPORT_FILE, ExitCode, TargetNotEmpty, run, scaffold
from conftest import GOLDEN_DIR, SIMLINGO_DIR
from emitters import emit_exchange
from gsn import remove_subtree
from hara import HAZARDS_FILE, RISK_TABLE_FILE

GOLDEN = GOLDEN_DIR / "simlingo.gsn.json"


def build_args(out, *extra):
    return ["build", "--hara", str(SIMLINGO_DIR), "--config", str(SIMLINGO_DIR / "build.json"),
            "-o", str(out)] + list(extra)


############ build

def test_build_writes_three_files(tmp_path, capsys):
    out = tmp_path / "out"
    assert run(build_args(out)) == ExitCode.OK
    assert sorted(p.name for p in out.iterdir()) == sorted([CASE_FILE, DOT_FILE, REPORT_FILE])
    assert (out / CASE_FILE).read_text(encoding="utf-8") == GOLDEN.read_text(encoding="utf-8")
    assert (out / DOT_FILE).read_text(encoding="utf-8").startswith("digraph gsn {")
    assert "- Verdict: **Pass**" in (out / REPORT_FILE).read_text(encoding="utf-8")
    assert "coverage: Pass" in capsys.readouterr().err


def test_build_is_deterministic(tmp_path):
    assert run(build_args(tmp_path / "a")) == ExitCode.OK
    assert run(build_args(tmp_path / "b")) == ExitCode.OK
    for name in (CASE_FILE, DOT_FILE, REPORT_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_build_single_format(tmp_path):
    out = tmp_path / "out"
    assert run(build_args(out, "--format", "dot", "--threshold", "D")) == ExitCode.OK
    assert [p.name for p in out.iterdir()] == [DOT_FILE]


def test_build_missing_hara(tmp_path, capsys):
    assert run(["build", "--hara", "/nonexistent", "-o", str(tmp_path)]) == ExitCode.USAGE
    assert "error:" in capsys.readouterr().err


def test_build_reports_hara_errors(fixture_hara_copy, tmp_path, capsys):
    path = fixture_hara_copy / HAZARDS_FILE
    path.write_text(path.read_text(encoding="utf-8").replace("HE3,MF5,OS3,", "HE3,MF5,OS99,"), encoding="utf-8")
    assert run(["build", "--hara", str(fixture_hara_copy), "-o", str(tmp_path / "out")]) == ExitCode.FAILURE
    assert "HAR004" in capsys.readouterr().err


def test_build_bad_config(tmp_path):
    config = tmp_path / "build.json"
    config.write_text('{"system_name": "X", "colour": "red"}', encoding="utf-8")
    args = ["build", "--hara", str(SIMLINGO_DIR), "--config", str(config), "-o", str(tmp_path / "out")]
    assert run(args) == ExitCode.FAILURE


def test_missing_required_option():
    assert run(["build"]) == ExitCode.USAGE


def test_no_command():
    assert run([]) == ExitCode.USAGE


############ hara check

def test_hara_check_fixture(capsys):
    assert run(["hara", "check", str(SIMLINGO_DIR)]) == ExitCode.OK
    assert capsys.readouterr().err == ""


def test_hara_check_dangling_reference(fixture_hara_copy, capsys):
    path = fixture_hara_copy / HAZARDS_FILE
    path.write_text(path.read_text(encoding="utf-8").replace("HE3,MF5,OS3,", "HE3,MF5,OS99,"), encoding="utf-8")
    assert run(["hara", "check", str(fixture_hara_copy)]) == ExitCode.FAILURE
    assert "OS99" in capsys.readouterr().err


############ pattern lint

def test_lint_builtin_patterns():
    assert run(["pattern", "lint", str(SIMLINGO_DIR.parent.parent / "patterns")]) == ExitCode.OK


def test_lint_broken_pattern(tmp_path, capsys):
    path = tmp_path / "broken.pattern"
    path.write_text("pattern Broken v1\nnode G1: Goal \"Claim\" undeveloped choice 1..1\n", encoding="utf-8")
    assert run(["pattern", "lint", str(path)]) == ExitCode.FAILURE
    assert "PAT023" in capsys.readouterr().err


def test_lint_parse_error(tmp_path, capsys):
    path = tmp_path / "broken.pattern"
    path.write_text("pattern Broken v1\nnode G1: Goal \"{speed} is fine\"\n", encoding="utf-8")
    assert run(["pattern", "lint", str(path)]) == ExitCode.FAILURE
    assert "undeclared placeholder 'speed'" in capsys.readouterr().err


############ init

def test_scaffold(tmp_path):
    written = scaffold(tmp_path / "proj")
    names = {p.name for p in written}
    assert {"build.json", HAZARDS_FILE, RISK_TABLE_FILE, "ri.pattern", "aai.pattern"} <= names
    with pytest.raises(TargetNotEmpty):
        scaffold(tmp_path / "proj")


def test_init_then_build(tmp_path):
    proj = tmp_path / "proj"
    assert run(["init", str(proj)]) == ExitCode.OK
    args = ["build", "--hara", str(proj), "--config", str(proj / "build.json"), "--patterns", str(proj),
            "-o", str(tmp_path / "out")]
    assert run(args) == ExitCode.OK
    assert (tmp_path / "out" / CASE_FILE).read_text(encoding="utf-8") == GOLDEN.read_text(encoding="utf-8")


def test_init_into_non_empty(tmp_path):
    (tmp_path / "keep.txt").write_text("x", encoding="utf-8")
    assert run(["init", str(tmp_path)]) == ExitCode.USAGE


############ help

@pytest.mark.parametrize("command", COMMANDS, ids=lambda c: "-".join(c))
def test_help(command, capsys):
    assert run(list(command) + ["--help"]) == ExitCode.OK
    assert "usage: raise-forge" in capsys.readouterr().out


############ exchange documents

def test_validate_golden(capsys):
    assert run(["validate", str(GOLDEN)]) == ExitCode.OK
    assert "73 nodes, 72 edges" in capsys.readouterr().err


def test_validate_broken(tmp_path, capsys):
    path = tmp_path / "case.gsn.json"
    path.write_text("{}", encoding="utf-8")
    assert run(["validate", str(path)]) == ExitCode.FAILURE
    assert "EXC001" in capsys.readouterr().err


def test_render_dot(capsys):
    assert run(["render", str(GOLDEN)]) == ExitCode.OK
    assert capsys.readouterr().out.startswith("digraph gsn {")


def test_render_md_needs_hara():
    assert run(["render", str(GOLDEN), "--format", "md"]) == ExitCode.USAGE


def test_render_md_to_file(tmp_path):
    out = tmp_path / "report.md"
    args = ["render", str(GOLDEN), "--format", "md", "--hara", str(SIMLINGO_DIR), "-o", str(out)]
    assert run(args) == ExitCode.OK
    assert out.read_text(encoding="utf-8").startswith("# Safety case report: SimLingo")


def test_coverage_of_golden(capsys):
    assert run(["coverage", str(GOLDEN), "--hara", str(SIMLINGO_DIR)]) == ExitCode.OK
    assert "- Verdict: **Pass**" in capsys.readouterr().out


def test_coverage_of_pruned_case(tmp_path, fixture_simlingo_case, capsys):
    case, _ = fixture_simlingo_case
    path = tmp_path / "case.gsn.json"
    path.write_text(emit_exchange(remove_subtree(case, "RI.G2.3"), "SimLingo"), encoding="utf-8")
    assert run(["coverage", str(path), "--hara", str(SIMLINGO_DIR)]) == ExitCode.FAILURE
    assert "| OS3 | reject | MISSING |" in capsys.readouterr().out
