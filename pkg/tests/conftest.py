import shutil
from pathlib import Path

import pytest

from builder import build_safety_case, load_config
from gsn import ArgumentGraph, EdgeKind, GsnEdge, GsnNode, NodeKind
from hara import parse_hara
from pattern import builtin_library

ROOT = Path(__file__).resolve().parent.parent
SIMLINGO_DIR = ROOT / "fixtures" / "simlingo"
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


def goal(node_id, statement="claim", undeveloped=False, **tags):
    return GsnNode(node_id, NodeKind.GOAL, statement, undeveloped, False, tags)


def supports(source, target):
    return GsnEdge(source, target, EdgeKind.SUPPORTED_BY)


def in_context(source, target):
    return GsnEdge(source, target, EdgeKind.IN_CONTEXT_OF)


@pytest.fixture
def fixture_simlingo_dir():
    return SIMLINGO_DIR


@pytest.fixture
def fixture_hara_copy(tmp_path):
    """A writable copy of the SimLingo HARA for seeding errors."""
    target = tmp_path / "hara"
    shutil.copytree(SIMLINGO_DIR, target)
    return target


@pytest.fixture(scope="session")
def fixture_simlingo_hara():
    return parse_hara(SIMLINGO_DIR)


@pytest.fixture(scope="session")
def fixture_simlingo_config(fixture_simlingo_hara):
    from builder import default_config
    return load_config(SIMLINGO_DIR / "build.json", default_config(fixture_simlingo_hara))


@pytest.fixture(scope="session")
def fixture_library():
    return builtin_library()


@pytest.fixture(scope="session")
def fixture_simlingo_case(fixture_simlingo_config, fixture_simlingo_hara, fixture_library):
    return build_safety_case(fixture_simlingo_config, fixture_simlingo_hara, fixture_library)


@pytest.fixture
def fixture_small_case():
    # G1 (context C1) -> S1 -> {G2, G3 undeveloped}, G2 -> Sn1
    nodes = [
        goal("G1"),
        GsnNode("C1", NodeKind.CONTEXT, "operating context"),
        GsnNode("S1", NodeKind.STRATEGY, "argument over parts"),
        goal("G2"),
        goal("G3", undeveloped=True),
        GsnNode("Sn1", NodeKind.SOLUTION, "test report"),
    ]
    edges = [
        in_context("G1", "C1"),
        supports("G1", "S1"),
        supports("S1", "G2"),
        supports("S1", "G3"),
        supports("G2", "Sn1"),
    ]
    return ArgumentGraph(nodes, edges)
