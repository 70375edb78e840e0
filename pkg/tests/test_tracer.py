"""Tracer tests: record transport, exit statuses, timing, determinism."""

from __future__ import annotations

import os
import struct
import subprocess
import tempfile
import time
from pathlib import Path

import pytest
from hypothesis import given, settings

from slicefuzz.ast_index import build_ast_index, reparse_ok
from slicefuzz.tracer import (
    PROTOTYPE_LINE,
    RECORD_BYTES,
    BuildError,
    TraceRecord,
    build_target,
    guard_record_key,
    instrument_file,
    parse_trace_file,
    run_traced,
)
from conftest import make_target
from test_ast_index import gen_program

CALL_CHAIN = """\
int add(int a, int b) {
    int r = a + b;
    return r;
}
int main(void) {
    int x = 2;
    int y = 0;
    if (x > 1) {
        y = add(x, 3);
    }
    return y;
}
"""

STDIN_SUM = """\
#include <stdio.h>

int main(void) {
    unsigned char buf[8] = {0};
    long n = fread(buf, 1, 8, stdin);
    int sum = 0;
    for (long i = 0; i < n; i = i + 1) {
        sum = sum + buf[i];
    }
    if (sum > 200) {
        return 1;
    }
    return 0;
}
"""

FILE_ARG = """\
#include <stdio.h>

int main(int argc, char **argv) {
    unsigned char buf[4] = {0};
    FILE *fh = fopen(argv[1], "rb");
    if (!fh) {
        return 9;
    }
    fread(buf, 1, 4, fh);
    if (buf[0] == 'K') {
        return 1;
    }
    return 0;
}
"""

CRASHER = """\
int main(void) {
    int x = 1;
    int y = x + 1;
    *(volatile int *)0 = y;
    return 0;
}
"""

SPINNER = """\
int main(void) {
    volatile int x = 0;
    while (x < 2) {
        x = 1 - 1;
    }
    return x;
}
"""

LOOPER = """\
int main(void) {
    int total = 0;
    for (int i = 0; i < 200; i = i + 1) {
        total = total + i;
    }
    return total % 7;
}
"""


def kinds_of(idx, trace):
    out = []
    for rec in trace.records:
        tp = idx.resolve_record(*rec)
        assert tp is not None, f"unmapped record {rec}"
        out.append((rec.line, tp.kind))
    return out


def test_record_sequence_matches_hand_trace(tmp_path):
    idx, res = make_target(tmp_path, CALL_CHAIN)
    tr = run_traced(res.binary, b"")
    assert tr.exit_status == "normal"
    assert tr.returncode == 5
    assert kinds_of(idx, tr) == [
        (5, "func"), (6, "stmt"), (7, "stmt"),
        (8, "guard"), (8, "arm"), (9, "stmt"),
        (1, "func"), (2, "stmt"), (3, "stmt"),
        (11, "stmt"),
    ]


def test_raw_record_format_is_ten_byte_le(tmp_path):
    idx, res = make_target(tmp_path, CALL_CHAIN)
    trace_path = tmp_path / "raw.bin"
    env = dict(os.environ, TRACE_OUT=str(trace_path))
    subprocess.run([str(res.binary)], env=env, check=False)
    data = trace_path.read_bytes()
    assert len(data) % RECORD_BYTES == 0 and len(data) > 0
    f, l, o = struct.unpack_from("<IIH", data, 0)
    assert (f, l, o) == (0, 5, 0)  # main's entry marker
    # a torn trailing record is dropped, earlier records survive
    n_full = len(data) // RECORD_BYTES
    trace_path.write_bytes(data + b"\x01\x02\x03")
    assert len(parse_trace_file(trace_path)) == n_full


def test_trace_disabled_without_env(tmp_path):
    _, res = make_target(tmp_path, CALL_CHAIN)
    env = {k: v for k, v in os.environ.items() if k != "TRACE_OUT"}
    proc = subprocess.run([str(res.binary)], env=env, check=False)
    assert proc.returncode == 5  # program behaves identically untraced


def test_exit_status_normal_and_replay_deterministic(tmp_path):
    idx, res = make_target(tmp_path, STDIN_SUM)
    a = run_traced(res.binary, b"\x10" * 8)
    b = run_traced(res.binary, b"\x10" * 8)
    assert a.exit_status == b.exit_status == "normal"
    assert a.records == b.records
    c = run_traced(res.binary, b"\xff" * 8)
    assert c.records != a.records  # sum > 200 takes the other arm


def test_exit_status_crash_keeps_trace_prefix(tmp_path):
    idx, res = make_target(tmp_path, CRASHER)
    tr = run_traced(res.binary, b"")
    assert tr.exit_status == "crash"
    assert tr.returncode < 0
    lines = [rec.line for rec in tr.records]
    assert lines[:4] == [1, 2, 3, 4]  # entry + three statements, then boom


def test_timeout_killed_within_twice_the_budget(tmp_path):
    idx, res = make_target(tmp_path, SPINNER)
    budget = 0.5
    started = time.monotonic()
    tr = run_traced(res.binary, b"", timeout_s=budget, trace_cap=500)
    wall = time.monotonic() - started
    assert tr.exit_status == "timeout"
    assert wall < 2 * budget
    assert tr.duration_s < 2 * budget
    # SIGTERM flush preserved a capped prefix of the spin
    assert len(tr.records) == 500 and tr.truncated


def test_trace_cap_truncates_and_flags(tmp_path):
    idx, res = make_target(tmp_path, LOOPER)
    full = run_traced(res.binary, b"")
    assert full.exit_status == "normal" and not full.truncated
    capped = run_traced(res.binary, b"", trace_cap=100)
    assert capped.exit_status == "trace-cap"
    assert capped.truncated
    assert len(capped.records) == 100


@pytest.mark.parametrize("cap", [1, 37, 250])
def test_capped_trace_is_prefix_of_full_trace(tmp_path, cap):
    idx, res = make_target(tmp_path, LOOPER)
    full = run_traced(res.binary, b"")
    capped = run_traced(res.binary, b"", trace_cap=cap)
    assert capped.records == full.records[:cap]


def test_stop_at_truncates_at_first_guard_hit(tmp_path):
    idx, res = make_target(tmp_path, LOOPER)
    cond = next(c for c in idx.conditionals.values() if c.kind == "for")
    key = guard_record_key(idx, cond.cond_id)
    assert key is not None
    tr = run_traced(res.binary, b"", stop_at=key)
    assert tr.records[-1] == key
    assert tr.records.count(key) == 1  # later evaluations cut away


def test_file_argument_transport(tmp_path):
    idx, res = make_target(tmp_path, FILE_ARG)
    hit = run_traced(res.binary, b"KZZZ", run_args=["@@"])
    miss = run_traced(res.binary, b"AZZZ", run_args=["@@"])
    assert hit.returncode == 1
    assert miss.returncode == 0
    assert hit.records != miss.records


def test_build_error_raises(tmp_path):
    src = tmp_path / "broken.c"
    src.write_text("int main(void) { return undeclared_fn(); }\n")
    idx = build_ast_index([src])
    with pytest.raises(BuildError):
        build_target(idx, tmp_path / "build", cflags=["-O0", "-Werror"])


def test_instrumented_fixture_reparses(tmp_path):
    src = tmp_path / "p.c"
    src.write_text(CALL_CHAIN)
    idx = build_ast_index([src])
    out = instrument_file(idx, 0)
    assert out.startswith(PROTOTYPE_LINE)
    assert reparse_ok(out)


@settings(max_examples=25, deadline=None)
@given(gen_program())
def test_generated_programs_instrument_to_reparseable_c(tmp_path_factory, prog):
    src_text, _census = prog
    p = tmp_path_factory.mktemp("instr") / "g.c"
    p.write_text(src_text)
    idx = build_ast_index([p])
    assert reparse_ok(instrument_file(idx, 0))
