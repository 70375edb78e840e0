"""Gauntlet corpus checks: every bundled case builds warning-free, seed
coverage matches the hand-written expectations under both the trace
interpreter and the record-counting oracle, whole-corpus analysis matches
the fold replay, every reachable slice contains its flow-closure
reference, and the pinned slices keep their load-bearing statements."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from slicefuzz.coverage import (
    CoverageState,
    analyze_corpus,
    interpret_trace_arms,
)
from slicefuzz.gauntlet import (
    arm_expectations,
    build_case,
    find_cond,
    list_cases,
    load_case,
    materialize_replay,
    resolve_pairs,
    slice_expectations,
)
from slicefuzz.gauntlet.oracles import (
    count_arm_coverage,
    expected_corpus_state,
    reference_slice,
    validate_corpus,
)
from slicefuzz.slicer import build_slice
from slicefuzz.solver import decode_response
from slicefuzz.tracer import guard_record_key, run_traced

CASE_NAMES = list_cases()


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    """Every gauntlet case indexed and compiled once for the module."""
    out = {}
    for name in CASE_NAMES:
        case = load_case(name)
        root = tmp_path_factory.mktemp(f"gauntlet_{name.replace('-', '_')}")
        out[name] = (case, *build_case(case, root))
    return out


def test_registry_lists_known_cases():
    assert len(CASE_NAMES) == 11
    assert "magic4" in CASE_NAMES
    assert "cjson-mini" in CASE_NAMES
    assert CASE_NAMES == sorted(CASE_NAMES)


def test_load_case_rejects_unknown_name():
    with pytest.raises(KeyError):
        load_case("no-such-case")


@pytest.mark.parametrize("name", CASE_NAMES)
def test_case_shape(name):
    case = load_case(name)
    assert case.sources and all(p.suffix == ".c" for p in case.sources)
    assert case.seeds, "every case ships at least one seed"
    assert case.title and case.notes
    assert case.solver in ("bruteforce", "scripted", "off")
    if case.solver == "scripted":
        assert case.replay is not None
    for fragment, _arm in case.e2e_targets:
        assert fragment


@pytest.mark.parametrize("name", CASE_NAMES)
def test_seed_coverage_matches_expectations(built, name):
    case, index, build = built[name]
    exp = arm_expectations(case)
    assert set(exp["seeds"]) == {s.name for s in case.seeds}
    union_covered = set()
    for seed in case.seeds:
        want = exp["seeds"][seed.name]
        trace = run_traced(build.binary, seed.read_bytes(), timeout_s=5.0)
        assert trace.exit_status == "normal"
        reached, covered = interpret_trace_arms(index, trace)
        want_reached = {find_cond(index, f).cond_id for f in want["reached"]}
        want_covered = resolve_pairs(index, want["covered"])
        assert reached == want_reached, seed.name
        assert covered == want_covered, seed.name
        # the independent record-counting oracle must agree exactly
        assert count_arm_coverage(index, trace) == (reached, covered)
        union_covered |= covered
    # covered / open / dormant partitions the whole arm inventory
    all_pairs = {(c.cond_id, a.arm_id)
                 for c in index.conditionals.values() for a in c.arms}
    open_arms = resolve_pairs(index, exp["open_arms"])
    dormant = {find_cond(index, f).cond_id for f in exp["dormant"]}
    dormant_pairs = {p for p in all_pairs if p[0] in dormant}
    assert not union_covered & open_arms
    assert not union_covered & dormant_pairs
    assert union_covered | open_arms | dormant_pairs == all_pairs


@pytest.mark.parametrize("name", CASE_NAMES)
def test_corpus_analysis_matches_fold_replay(built, name, tmp_path):
    case, index, build = built[name]
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for seed in case.seeds:
        (corpus / seed.name).write_bytes(seed.read_bytes())
    state = CoverageState()
    trace_fn = lambda data: run_traced(build.binary, data, timeout_s=5.0)
    analyze_corpus(index, state, sorted(corpus.iterdir()), trace_fn)
    folds = [(str(p), p.stat().st_size, trace_fn(p.read_bytes()))
             for p in sorted(corpus.iterdir(), key=str)]
    assert validate_corpus(index, state, folds) == []
    exp = expected_corpus_state(index, folds)
    assert state.reached == exp["reached"]
    assert dict(state.interest) == exp["interest"]


@pytest.mark.parametrize("name", CASE_NAMES)
def test_slices_contain_reference_closure(built, name):
    case, index, build = built[name]
    for seed in case.seeds:
        data = seed.read_bytes()
        full = run_traced(build.binary, data, timeout_s=5.0)
        reached, _ = interpret_trace_arms(index, full)
        for cond_id in sorted(reached):
            stop = guard_record_key(index, cond_id)
            anchored = run_traced(build.binary, data, timeout_s=5.0,
                                  stop_at=stop)
            assert anchored.records and anchored.records[-1] == stop
            for arm in index.conditionals[cond_id].arms:
                sl = build_slice(index, anchored, cond_id, arm.arm_id)
                ref = reference_slice(index, anchored, cond_id, arm.arm_id)
                missing = ref - set(sl.retained_records)
                assert not missing, (seed.name, cond_id, arm.arm_id)
                assert sl.parse_ok, (seed.name, cond_id, arm.arm_id)


@pytest.mark.parametrize("name", CASE_NAMES)
def test_pinned_slice_content(built, name):
    case, index, build = built[name]
    entries = slice_expectations(case)
    if not entries:
        pytest.skip("no slice pins for this case")
    for entry in entries:
        cond = find_cond(index, entry["guard_contains"])
        data = bytes.fromhex(entry["input_hex"])
        stop = guard_record_key(index, cond.cond_id)
        anchored = run_traced(build.binary, data, timeout_s=5.0,
                              stop_at=stop)
        assert anchored.records and anchored.records[-1] == stop
        sl = build_slice(index, anchored, cond.cond_id, entry["arm"])
        assert sl.parse_ok
        for fragment in entry["must_contain"]:
            assert fragment in sl.text, fragment
        for fragment in entry.get("must_not_contain", []):
            assert fragment not in sl.text, fragment


@pytest.mark.parametrize(
    "name", [n for n in CASE_NAMES
             if load_case(n).replay is not None])
def test_replay_materializes_against_index(built, name, tmp_path):
    case, index, build = built[name]
    dest = tmp_path / "replay.json"
    materialize_replay(case, index, dest)
    entries = json.loads(dest.read_text())
    assert entries, "replay file must not be empty"
    valid_keys = {f"{c.cond_id}#arm{a.arm_id}"
                  for c in index.conditionals.values() for a in c.arms}
    for entry in entries:
        assert entry["roadblock"] == "*" or entry["roadblock"] in valid_keys
        # every scripted payload must decode as a single fenced block
        decode_response(entry["response"])
