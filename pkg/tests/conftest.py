import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from ontokgc.kg import KnowledgeGraph, Split

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
FIXTURES = Path(__file__).resolve().parent / "data"


@pytest.fixture
def toy_graph():
    """Five entities, two relations, a handful of facts."""
    g = KnowledgeGraph()
    for h, r, t in [("a", "likes", "b"), ("b", "likes", "c"), ("c", "likes", "d"), ("d", "likes", "e"),
                    ("a", "knows", "c"), ("b", "knows", "d"), ("e", "knows", "a")]:
        g.add_triple(h, r, t, Split.TRAIN)
    g.add_triple("e", "likes", "a", Split.VALID)
    g.add_triple("c", "knows", "e", Split.TEST)
    return g


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path
