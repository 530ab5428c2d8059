"""Shared fixture builders plus the acceptance-criteria summary hook."""

import math
import re

import numpy as np

from embrank.embedding import EmbeddingTable
from embrank.evaluation import Qrels
from embrank.reranking import LinkedQuery, Ranking

# Similarity levels for the planted relevant entities R1..R6. Together with
# base scores 0.25, 0.20, ..., 0.00 for relevant and 1.00, 0.95, ..., 0.30 for
# irrelevant candidates, the overtake thresholds d/(g+d) over all
# relevant/irrelevant pairs cover [0.0476, 0.9850] with no gap wider than
# 0.0433, so a 0.05-step line search always finds an uphill move until the
# weight clears 0.985.
PLANTED_SIMS = [1.0, 0.5, 0.2, 0.08, 0.03, 0.015228]
N_IRRELEVANT = 15


def unit_at_cos(g):
    """Unit 2-vector whose cosine against (1, 0) is exactly g."""
    return np.array([g, math.sqrt(max(0.0, 1.0 - g * g))])


def planted_tuning_problem(n_queries=15):
    """Queries whose base order is anti-ideal and similarity order ideal.

    Every query shares the same 21 candidates: 15 irrelevant entities whose
    base scores dominate, and 6 relevant ones that overtake them one pair at a
    time as the interpolation weight grows. The ideal ordering is reached only
    for weights above 0.985.
    """
    relevant = [f"R{j+1}" for j in range(len(PLANTED_SIMS))]
    irrelevant = [f"I{m+1:02d}" for m in range(N_IRRELEVANT)]

    entities = {"L": np.array([1.0, 0.0])}
    for name, sim in zip(relevant, PLANTED_SIMS):
        entities[name] = unit_at_cos(sim)
    for name in irrelevant:
        entities[name] = np.array([0.0, 1.0])
    table = EmbeddingTable.from_vectors(entities=entities)

    scored = [(name, 1.0 - 0.05 * m) for m, name in enumerate(irrelevant)]
    scored += [(name, 0.25 - 0.05 * j) for j, name in enumerate(relevant)]

    base_runs = {}
    queries = {}
    judgments = {}
    for i in range(n_queries):
        qid = f"q{i+1:02d}"
        base_runs[qid] = Ranking.from_scores(qid, scored)
        queries[qid] = LinkedQuery(qid, [("L", 1.0)])
        for name in relevant:
            judgments[(qid, name)] = 1
        for name in irrelevant:
            judgments[(qid, name)] = 0
    return base_runs, queries, Qrels(judgments), table


# Tests named test_criterion_<N>_<slug> form the acceptance gate; echo one
# PASS/FAIL line per criterion after the run so the verdicts are visible
# without -s.
_CRITERION_PATTERN = re.compile(r"test_criterion_(\d+)_(\w+)")
_criterion_results: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    match = _CRITERION_PATTERN.search(report.nodeid)
    if not match:
        return
    number, name = int(match.group(1)), match.group(2).replace("_", " ")
    if report.failed:
        _criterion_results[number] = (name, "FAIL")
    elif report.when == "call" and report.passed and number not in _criterion_results:
        _criterion_results[number] = (name, "PASS")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criterion_results):
        name, status = _criterion_results[number]
        terminalreporter.write_line(f"[criterion {number}] {name}: {status}")
