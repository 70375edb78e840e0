"""Acceptance gate: ten campaign-level criteria, one test each.

Each test prints a single ``[acceptance cNN] ... PASS`` line on success
(visible with ``pytest -v -rA`` or ``-s``); a failure surfaces as an
ordinary assertion with the offending detail. The criteria:

  c01  slicer output contains the reference closure and re-parses, on
       every reachable (conditional, arm) pair in the gauntlet, < 30 s
  c02  corpus analysis equals the independent record-counting oracle
       on every gauntlet case with its shipped seeds, exactly, < 10 s
  c03  with five equally interesting candidates and no rewards, fifty
       retrievals select each candidate exactly ten times, < 1 s
  c04  after a reward, the rewarded conditional is retrieved next, for
       one hundred seeded random states, < 1 s
  c05  end-to-end: on at least 8 of 10 solver-assisted cases the
       campaign covers the target arm within 3 roadblock iterations
       and 120 s wall-clock, while solver-disabled fuzzing does NOT
       cover it within 10^4 executions
  c06  median trace+slice+prompt pipeline latency per roadblock is
       at most 1.0 s, as reported in summary.json
  c07  a scripted campaign with 10 injections of which 3 add coverage
       reports effective ratio 0.30 exactly
  c08  a campaign with query_budget N issues exactly N requests to a
       local mock endpoint, then keeps fuzzing greybox-only
  c09  10^4 random byte strings survive the prompt encode/decode
       round-trip identically
  c10  two identically configured scripted runs emit identical
       roadblocks.csv, latency columns excluded
"""

from __future__ import annotations

import csv
import json
import random
import threading
import time
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from slicefuzz.ast_index import build_ast_index
from slicefuzz.config import (
    CampaignSettings,
    Config,
    SolverSettings,
    TargetConfig,
)
from slicefuzz.coverage import (
    CoverageState,
    Witness,
    analyze_corpus,
    interpret_trace_arms,
    retrieve_roadblock,
    reward,
)
from slicefuzz.gauntlet import (
    build_case,
    list_cases,
    load_case,
    materialize_replay,
    resolve_pairs,
)
from slicefuzz.gauntlet.oracles import (
    count_arm_coverage,
    reference_slice,
    validate_corpus,
)
from slicefuzz.orchestrator import run_campaign
from slicefuzz.report import write_report
from slicefuzz.slicer import build_slice
from slicefuzz.solver import decode_response, encode_bytes
from slicefuzz.tracer import guard_record_key, run_traced

CASE_NAMES = list_cases()
HASH_CONTROL = "jenkins-mini"
E2E_NAMES = [n for n in CASE_NAMES if n != HASH_CONTROL]


# ---------------------------------------------------------------------------
# shared fixtures


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    """Every gauntlet case indexed and compiled once for the module."""
    out = {}
    for name in CASE_NAMES:
        case = load_case(name)
        root = tmp_path_factory.mktemp(f"acc_{name.replace('-', '_')}")
        out[name] = (case, *build_case(case, root))
    return out


def _campaign_config(case, tmp: Path, *, backend: str, replay=None,
                     duration_s: float, plateau_s: float, tick_s: float,
                     rng_seed: int, query_budget: int = 3000) -> Config:
    return Config(
        target=TargetConfig(sources=list(case.sources),
                            build_dir=tmp / "build"),
        campaign=CampaignSettings(out=tmp / "out", seeds=case.root / "seeds",
                                  duration_s=duration_s,
                                  plateau_s=plateau_s, tick_s=tick_s,
                                  rng_seed=rng_seed),
        solver=SolverSettings(backend=backend, replay=replay,
                              query_budget=query_budget),
        base_dir=tmp,
    )


def _final_covered(index, build, out_dir: Path) -> set[tuple[str, int]]:
    """Re-derive end-of-campaign arm coverage from the kept corpus."""
    state = CoverageState()
    queue = out_dir / "main" / "queue"
    seeds = sorted(p for p in queue.iterdir() if p.is_file())
    analyze_corpus(index, state, seeds,
                   lambda data: run_traced(build.binary, data, timeout_s=5.0))
    return {(cond_id, arm_id)
            for cond_id, arms in state.covered.items() for arm_id in arms}


@pytest.fixture(scope="module")
def e2e_runs(built, tmp_path_factory):
    """One solver-assisted campaign per non-control case, plus its report."""
    runs = {}
    for name in E2E_NAMES:
        case, index, build = built[name]
        tmp = tmp_path_factory.mktemp(f"e2e_{name.replace('-', '_')}")
        replay = None
        if case.solver == "scripted":
            replay = materialize_replay(case, index, tmp / "replay.json")
        cfg = _campaign_config(case, tmp, backend=case.solver, replay=replay,
                               duration_s=6.0, plateau_s=0.5, tick_s=0.01,
                               rng_seed=11)
        t0 = time.perf_counter()
        result = run_campaign(cfg)
        wall_s = time.perf_counter() - t0
        report_dir = write_report(result, figures=False)
        runs[name] = {
            "result": result,
            "wall_s": wall_s,
            "report_dir": report_dir,
            "targets": resolve_pairs(index, case.e2e_targets),
            "covered": _final_covered(index, build, cfg.campaign.out),
        }
    return runs


@pytest.fixture(scope="module")
def negative_runs(built, tmp_path_factory):
    """Solver-disabled campaigns, at least 10^4 executions each."""
    runs = {}
    for name in E2E_NAMES:
        case, index, build = built[name]
        tmp = tmp_path_factory.mktemp(f"neg_{name.replace('-', '_')}")
        cfg = _campaign_config(case, tmp, backend="off",
                               duration_s=100.0, plateau_s=90.0,
                               tick_s=0.01, rng_seed=11)
        result = run_campaign(cfg)
        runs[name] = {
            "execs": result.execs,
            "targets": resolve_pairs(index, case.e2e_targets),
            "covered": _final_covered(index, build, cfg.campaign.out),
        }
    return runs


def _run_triplet_scripted(built, tmp: Path):
    case, index, build = built["triplet"]
    tmp.mkdir(parents=True, exist_ok=True)
    replay = materialize_replay(case, index, tmp / "replay.json")
    cfg = _campaign_config(case, tmp, backend="scripted", replay=replay,
                           duration_s=10.0, plateau_s=0.3, tick_s=0.1,
                           rng_seed=23)
    return run_campaign(cfg)


# ---------------------------------------------------------------------------
# c01 / c02 — oracle agreement


def test_c01_slicer_contains_reference_and_reparses(built):
    t0 = time.perf_counter()
    pairs = contained = parsed = 0
    for name in CASE_NAMES:
        case, index, build = built[name]
        for seed in case.seeds:
            data = seed.read_bytes()
            full = run_traced(build.binary, data, timeout_s=5.0)
            reached, _ = interpret_trace_arms(index, full)
            for cond_id in sorted(reached):
                stop = guard_record_key(index, cond_id)
                anchored = run_traced(build.binary, data, timeout_s=5.0,
                                      stop_at=stop)
                for arm in index.conditionals[cond_id].arms:
                    pairs += 1
                    sl = build_slice(index, anchored, cond_id, arm.arm_id)
                    ref = reference_slice(index, anchored, cond_id,
                                          arm.arm_id)
                    missing = ref - set(sl.retained_records)
                    assert not missing, (name, seed.name, cond_id,
                                         arm.arm_id, sorted(missing))
                    contained += 1
                    assert sl.parse_ok, (name, seed.name, cond_id,
                                         arm.arm_id)
                    parsed += 1
    elapsed = time.perf_counter() - t0
    assert pairs >= 150
    assert contained == pairs and parsed == pairs
    assert elapsed < 30.0, f"slicer soundness sweep took {elapsed:.1f}s"
    print(f"[acceptance c01] slicer ⊇ reference and re-parses on "
          f"{pairs}/{pairs} reachable pairs in {elapsed:.1f}s: PASS")


def test_c02_corpus_analysis_matches_counting_oracle(built, tmp_path):
    t0 = time.perf_counter()
    for name in CASE_NAMES:
        case, index, build = built[name]
        trace_fn = lambda data: run_traced(build.binary, data, timeout_s=5.0)
        state = CoverageState()
        analyze_corpus(index, state, case.seeds, trace_fn)
        oracle_reached: set[str] = set()
        oracle_covered: set[tuple[str, int]] = set()
        folds = []
        for seed in sorted(case.seeds, key=str):
            trace = trace_fn(seed.read_bytes())
            reached, covered = count_arm_coverage(index, trace)
            oracle_reached |= reached
            oracle_covered |= covered
            folds.append((str(seed), seed.stat().st_size, trace))
        engine_covered = {(c, a) for c, arms in state.covered.items()
                          for a in arms}
        assert state.reached == oracle_reached, name
        assert engine_covered == oracle_covered, name
        assert validate_corpus(index, state, folds) == [], name
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0, f"coverage equivalence sweep took {elapsed:.1f}s"
    print(f"[acceptance c02] corpus analysis equals the counting oracle on "
          f"{len(CASE_NAMES)} cases in {elapsed:.1f}s: PASS")


# ---------------------------------------------------------------------------
# c03 / c04 — retrieval discipline


_FIVE_IFS = """
int main(void) {
    int a = 0;
    if (a == 1) { a = 11; }
    if (a == 2) { a = 12; }
    if (a == 3) { a = 13; }
    if (a == 4) { a = 14; }
    if (a == 5) { a = 15; }
    return a;
}
"""


def _five_cond_index(tmp_path: Path):
    src = tmp_path / "five.c"
    src.write_text(_FIVE_IFS)
    index = build_ast_index([src])
    assert index.warnings == []
    assert len(index.conditionals) == 5
    return index


def _fresh_state(index, interests) -> CoverageState:
    state = CoverageState()
    for order, (cond_id, value) in enumerate(sorted(interests.items()),
                                             start=1):
        state.reached.add(cond_id)
        state.interest[cond_id] = value
        state.witnesses[cond_id] = Witness(path="w", size=1, order=order)
    return state


def test_c03_round_robin_fairness(tmp_path):
    t0 = time.perf_counter()
    index = _five_cond_index(tmp_path)
    state = _fresh_state(index, {c: 0 for c in index.conditionals})
    rng = random.Random(1337)
    tally = Counter()
    for _ in range(50):
        rb = retrieve_roadblock(index, state, rng)
        assert rb is not None
        tally[rb.cond_id] += 1
    assert tally == Counter({c: 10 for c in index.conditionals})
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(f"[acceptance c03] 50 retrievals over 5 equal candidates → "
          f"10 each in {elapsed:.3f}s: PASS")


def test_c04_reward_precedence(tmp_path):
    t0 = time.perf_counter()
    index = _five_cond_index(tmp_path)
    for trial in range(100):
        rng = random.Random(9000 + trial)
        interests = {c: -rng.randrange(6) for c in index.conditionals}
        state = _fresh_state(index, interests)
        first = retrieve_roadblock(index, state, rng)
        assert first is not None
        reward(state, first.cond_id)
        second = retrieve_roadblock(index, state, rng)
        assert second is not None
        assert second.cond_id == first.cond_id, (trial, interests)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(f"[acceptance c04] rewarded conditional retrieved next in "
          f"100/100 seeded trials ({elapsed:.3f}s): PASS")


# ---------------------------------------------------------------------------
# c05 / c06 — end-to-end roadblock breaking and pipeline latency


def _iterations_to_target(result, targets) -> tuple[bool, str]:
    """Did the campaign cover the target within 3 roadblock iterations?

    Iterations are the attempts that actually selected a roadblock.
    Each target pair must be covered by one of the first three, unless
    plain fuzzing got there without the solver's help.
    """
    mounted = [a for a in result.attempts if a.cond_id]
    for cond_id, arm_id in targets:
        position = None
        for i, att in enumerate(mounted, start=1):
            if (att.cond_id, att.arm_id) == (cond_id, arm_id) \
                    and att.outcome == "kept":
                position = i
                break
        if position is None:
            if len(mounted) > 3:
                return False, f"{cond_id}#arm{arm_id} never kept " \
                              f"in {len(mounted)} iterations"
        elif position > 3:
            return False, f"{cond_id}#arm{arm_id} kept at iteration " \
                          f"{position}"
    return True, f"{len(mounted)} iterations"


def test_c05_end_to_end_roadblock_breaking(e2e_runs, negative_runs):
    verdicts = {}
    for name in E2E_NAMES:
        run = e2e_runs[name]
        neg = negative_runs[name]
        pos_covered = run["targets"] <= run["covered"]
        pos_fast, detail = _iterations_to_target(run["result"],
                                                 run["targets"])
        pos_in_time = run["wall_s"] < 120.0
        positive = pos_covered and pos_fast and pos_in_time
        neg_enough = neg["execs"] >= 10_000
        neg_blocked = not (neg["targets"] & neg["covered"])
        negative = neg_enough and neg_blocked
        verdicts[name] = positive and negative
        print(f"[acceptance c05]   {name}: positive="
              f"{'PASS' if positive else 'FAIL'} (covered={pos_covered}, "
              f"{detail}, {run['wall_s']:.1f}s) negative="
              f"{'PASS' if negative else 'FAIL'} "
              f"({neg['execs']} execs, blocked={neg_blocked})")
    passed = sum(verdicts.values())
    print(f"[acceptance c05] {passed}/{len(E2E_NAMES)} cases break with "
          f"the solver and hold without it: "
          f"{'PASS' if passed >= 8 else 'FAIL'}")
    assert passed >= 8, verdicts


def test_c06_pipeline_latency_median(e2e_runs):
    medians = {}
    for name, run in e2e_runs.items():
        summary = json.loads(
            (run["report_dir"] / "summary.json").read_text())
        median = summary["latency"]["pipeline_median_s"]
        if median is not None:
            medians[name] = median
            assert median <= 1.0, (name, median)
    assert medians, "no campaign mounted a roadblock attempt"
    worst = max(medians.values())
    print(f"[acceptance c06] pipeline median ≤ 1.0 s on "
          f"{len(medians)} campaigns (worst {worst:.3f}s): PASS")


# ---------------------------------------------------------------------------
# c07 / c10 — scripted ratio fixture and determinism


def test_c07_effective_ratio_accounting(built, tmp_path):
    result = _run_triplet_scripted(built, tmp_path)
    report_dir = write_report(result, figures=False)
    summary = json.loads((report_dir / "summary.json").read_text())
    inj = summary["injections"]
    assert inj["injected"] == 10, inj
    assert inj["kept"] == 3, inj
    assert inj["effective_ratio"] == 0.30, inj
    print(f"[acceptance c07] scripted fixture: {inj['injected']} injected, "
          f"{inj['kept']} kept, effective ratio "
          f"{inj['effective_ratio']}: PASS")


def _roadblock_rows_without_latency(report_dir: Path) -> list[dict]:
    rows = []
    with open(report_dir / "roadblocks.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            row.pop("pipeline_latency_s")
            row.pop("solver_latency_s")
            rows.append(row)
    return rows


def test_c10_deterministic_roadblock_log(built, tmp_path):
    first = _run_triplet_scripted(built, tmp_path / "one")
    second = _run_triplet_scripted(built, tmp_path / "two")
    dir_one = write_report(first, figures=False)
    dir_two = write_report(second, figures=False)
    rows_one = _roadblock_rows_without_latency(dir_one)
    rows_two = _roadblock_rows_without_latency(dir_two)
    assert rows_one, "expected roadblock attempts in the log"
    assert rows_one == rows_two
    print(f"[acceptance c10] two runs, identical roadblocks.csv "
          f"({len(rows_one)} rows, latency columns excluded): PASS")


# ---------------------------------------------------------------------------
# c08 — budget conservation against a mock endpoint


class _MockSolverEndpoint(BaseHTTPRequestHandler):
    hits = 0
    payloads: list[dict] = []

    def do_POST(self):
        body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
        type(self).hits += 1
        type(self).payloads.append(json.loads(body))
        reply = json.dumps({
            "choices": [{"message": {"content": "```\nzzzz\n```"}}],
        }).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(reply)))
        self.end_headers()
        self.wfile.write(reply)

    def log_message(self, *args):
        pass


def test_c08_budget_conservation(built, tmp_path, monkeypatch):
    budget = 5
    _MockSolverEndpoint.hits = 0
    _MockSolverEndpoint.payloads = []
    server = ThreadingHTTPServer(("127.0.0.1", 0), _MockSolverEndpoint)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        port = server.server_address[1]
        monkeypatch.setenv("SOLVER_ENDPOINT",
                           f"http://127.0.0.1:{port}/v1/chat/completions")
        monkeypatch.setenv("SOLVER_API_KEY", "test-key")
        case, index, build = built["magic4"]
        cfg = _campaign_config(case, tmp_path, backend="remote",
                               duration_s=8.0, plateau_s=0.5, tick_s=0.01,
                               rng_seed=11, query_budget=budget)
        result = run_campaign(cfg)
    finally:
        server.shutdown()
        thread.join(timeout=5.0)
    assert _MockSolverEndpoint.hits == budget
    assert result.solver_requests == budget
    assert result.budget_left == 0
    for payload in _MockSolverEndpoint.payloads:
        assert payload["model"] == "gpt-4o"
        assert payload["max_tokens"] == 4096
        assert payload["temperature"] == 0.5
        assert len(payload["messages"]) == 2
    # the campaign must keep fuzzing greybox-only after the budget is gone
    mounted = [a for a in result.attempts if a.cond_id]
    last_request = max(a.elapsed_s for a in mounted if a.requests > 0)
    assert result.execs >= 750
    assert result.elapsed_s >= 8.0 > last_request + 3.0
    print(f"[acceptance c08] budget {budget} → exactly "
          f"{_MockSolverEndpoint.hits} requests, then greybox to "
          f"{result.execs} execs: PASS")


# ---------------------------------------------------------------------------
# c09 — encoding round-trip


def test_c09_encoding_round_trip():
    rng = random.Random(99)
    for _ in range(10_000):
        data = rng.randbytes(rng.randrange(65))
        text = "```\n" + encode_bytes(data) + "\n```"
        assert decode_response(text) == data
    print("[acceptance c09] 10^4 random byte strings round-trip "
          "encode/decode identically: PASS")
