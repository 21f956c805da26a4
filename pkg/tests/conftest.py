from __future__ import annotations

from collections import defaultdict

import pytest

from partmatch.graph import parse_graph

G_EX_TEXT = "A l B\nA l C\nD l B\nE l F\nE l B\nG l B\nG l F\n"

CRITERIA = {
    1: "oracle equivalence suite",
    2: "canonical example graph",
    3: "broadcast elimination",
    4: "routing-table contracts",
    5: "partitioner quality",
    6: "hybrid/lookup equivalence",
    7: "scaling trend",
    8: "termination and conservation",
}

_outcomes: dict[int, list[tuple[str, str, str]]] = defaultdict(list)


@pytest.fixture
def gex():
    return parse_graph(G_EX_TEXT)


def tokens(graph, tuples):
    """Map id tuples to vertex-token tuples."""
    return {tuple(graph.vertex_tokens[v] for v in t) for t in tuples}


def ids(graph, *names):
    return tuple(graph.vertex_dict[n] for n in names)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = dict(rep.user_properties).get("detail", "")
        if rep.outcome == "skipped" and isinstance(rep.longrepr, tuple):
            detail = rep.longrepr[2]
        elif rep.outcome == "failed" and not detail:
            detail = str(rep.longrepr).strip().splitlines()[-1][:160]
        _outcomes[marker.args[0]].append((item.name, rep.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for n, title in CRITERIA.items():
        parts = _outcomes.get(n)
        if not parts:
            continue
        states = {o for _, o, _ in parts}
        status = "FAIL" if "failed" in states else ("SKIP" if "skipped" in states else "PASS")
        notes = "; ".join(f"{name}: {o}{' - ' + d if d else ''}" for name, o, d in parts if o != "passed" or d)
        tr.write_line(f"criterion {n} ({title}): {status}" + (f"  [{notes}]" if notes else ""))
