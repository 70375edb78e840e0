"""Indexer tests: construct census, ranges, ordinals, scopes, determinism."""

from __future__ import annotations

import re
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from slicefuzz.ast_index import (
    build_ast_index,
    conditional_at,
    dump_index,
    reparse_ok,
    resolve_declaration,
)

FIXTURE = """\
#define CAP 9

int clamp(int v) {
    if (v > CAP)
        v = CAP;
    return v;
}

int main(void) {
    int x = 1;
    int y = 0;
    if (x > 0) {
        y = 1;
    } else {
        y = 2;
    }
    if (y == 2)
        y = 3;
    while (x < 4) {
        x = x + 1;
    }
    for (x = 0; x < 3; x = x + 1) {
        y = y + x;
    }
    do {
        y = y - 1;
    } while (y > 8);
    switch (x) {
    case 0:
        y = 10;
        break;
    case 1:
        y = 11;
        break;
    case 2:
    case 3:
        y = 12;
        break;
    }
    return clamp(y);
}
"""

# Executable lines of the fixture, by construction (1-based).
EXECUTABLE_LINES = {
    3, 4, 5, 6,                 # clamp: entry, guard, then-stmt, return
    9, 10, 11, 12, 13, 15,      # main entry, decls, if guard, arms
    17, 18, 19, 20, 22, 23, 25, 26, 27, 28,
    30, 31, 32, 33, 34, 35, 36, 37, 38, 40,
}


def write_fixture(tmp_path: Path, text: str = FIXTURE, name: str = "fix.c") -> Path:
    p = tmp_path / name
    p.write_text(text)
    return p


def grep_census(text: str) -> dict[str, int]:
    """Count control keywords straight off the text (fixture keeps keywords
    out of strings and comments, so word-boundary counts are exact)."""
    count = lambda kw: len(re.findall(rf"\b{kw}\b", text))
    n_do = count("do")
    return {
        "if": count("if"),
        "switch": count("switch"),
        "while": count("while") - n_do,   # `} while (...)` closes each do
        "do-while": n_do,
        "for": count("for"),
        "case": count("case"),
        "default": count("default"),
        "else": count("else"),
    }


def test_conditional_census_matches_grep_oracle(tmp_path):
    p = write_fixture(tmp_path)
    idx = build_ast_index([p])
    assert idx.warnings == []
    got = {}
    for c in idx.conditionals.values():
        got[c.kind] = got.get(c.kind, 0) + 1
    want = grep_census(FIXTURE)
    assert got["if"] == want["if"]
    assert got["switch"] == want["switch"]
    assert got["while"] == want["while"]
    assert got["do-while"] == want["do-while"]
    assert got["for"] == want["for"]


def test_arm_census_matches_grep_oracle(tmp_path):
    p = write_fixture(tmp_path)
    idx = build_ast_index([p])
    want = grep_census(FIXTURE)
    arms_by_kind = {"then": 0, "else": 0, "case": 0, "default": 0,
                    "loop-body": 0, "loop-exit": 0, "fall-past": 0}
    synthetic_else = 0
    for c in idx.conditionals.values():
        for a in c.arms:
            arms_by_kind[a.kind] += 1
            if a.kind == "else" and a.synthetic:
                synthetic_else += 1
    # every if has a then arm and an else arm (synthetic when absent)
    assert arms_by_kind["then"] == want["if"]
    assert arms_by_kind["else"] == want["if"]
    assert synthetic_else == want["if"] - want["else"]
    assert arms_by_kind["case"] == want["case"]
    assert arms_by_kind["default"] == want["default"]
    n_loops = want["while"] + want["do-while"] + want["for"]
    assert arms_by_kind["loop-body"] == n_loops
    assert arms_by_kind["loop-exit"] == n_loops
    # a switch without a default gets exactly one fall-past arm
    assert arms_by_kind["fall-past"] == want["switch"] - want["default"]


def test_switch_without_default_has_k_plus_one_arms(tmp_path):
    p = write_fixture(tmp_path)
    idx = build_ast_index([p])
    sw = [c for c in idx.conditionals.values() if c.kind == "switch"]
    assert len(sw) == 1
    arms = sw[0].arms
    assert len(arms) == 4 + 1          # 4 case labels, no default
    assert arms[-1].kind == "fall-past" and arms[-1].synthetic
    assert [a.guard_value for a in arms[:4]] == ["0", "1", "2", "3"]


def test_guard_ranges_exclude_parens(tmp_path):
    p = write_fixture(tmp_path)
    idx = build_ast_index([p])
    guards = sorted(idx.text(c.guard_range) for c in idx.conditionals.values())
    assert "x > 0" in guards
    assert "v > CAP" in guards
    assert "y > 8" in guards
    for c in idx.conditionals.values():
        text = idx.text(c.guard_range)
        assert not text.startswith("(") or text.count("(") == text.count(")")


def test_conditional_at_finds_by_line(tmp_path):
    p = write_fixture(tmp_path)
    idx = build_ast_index([p])
    c = conditional_at(idx, "fix.c", 12)
    assert c is not None and c.kind == "if"
    assert idx.text(c.guard_range) == "x > 0"
    assert conditional_at(idx, "fix.c", 2) is None


def test_range_closure_invariants(tmp_path):
    p = write_fixture(tmp_path)
    idx = build_ast_index([p])
    size = len(idx.files[0].content)
    for c in idx.conditionals.values():
        assert 0 <= c.guard_range.start_byte <= c.guard_range.end_byte <= size
        assert c.range.contains(c.guard_range)
        for a in c.arms:
            assert 0 <= a.body_range.start_byte <= a.body_range.end_byte <= size
            if not a.synthetic:
                assert c.range.contains(a.body_range)
    for tp in idx.trace_points:
        assert 0 <= tp.range.start_byte <= tp.range.end_byte <= size


def test_trace_point_ordinals_dense_and_byte_ordered(tmp_path):
    p = write_fixture(tmp_path)
    idx = build_ast_index([p])
    for (fid, line), pts in idx.statements.items():
        assert [tp.ordinal for tp in pts] == list(range(len(pts)))
        anchors = [tp.anchor for tp in pts]
        assert anchors == sorted(anchors)
        for tp in pts:
            assert tp.file_id == fid and tp.line == line


def test_statement_lookup_total_over_executable_lines(tmp_path):
    p = write_fixture(tmp_path)
    idx = build_ast_index([p])
    keyed_lines = {line for (fid, line) in idx.statements}
    assert EXECUTABLE_LINES <= keyed_lines


def test_resolve_declaration_prefers_innermost_scope(tmp_path):
    src = (
        "int g = 1;\n"
        "int main(void) {\n"
        "    int g = 2;\n"
        "    {\n"
        "        int g = 3;\n"
        "        g = g + 1;\n"
        "    }\n"
        "    return g;\n"
        "}\n"
    )
    p = write_fixture(tmp_path, src, "shadow.c")
    idx = build_ast_index([p])
    text = src.encode()
    use_inner = text.index(b"g = g + 1")
    use_outer = text.index(b"return g") + len(b"return ")
    inner = resolve_declaration(idx, "g", (0, use_inner))
    outer = resolve_declaration(idx, "g", (0, use_outer))
    assert inner is not None and inner.start_line == 5
    assert outer is not None and outer.start_line == 3
    before_main = resolve_declaration(idx, "g", (0, 0))
    assert before_main is not None and before_main.start_line == 1


def test_declarations_seen_across_files(tmp_path):
    a = write_fixture(tmp_path, "int shared_total = 0;\n", "a.c")
    b = write_fixture(
        tmp_path,
        "extern int shared_total;\nint main(void){ return shared_total; }\n",
        "b.c",
    )
    idx = build_ast_index([a, b])
    # resolution inside b.c first sees b.c's own extern declaration
    r = resolve_declaration(idx, "shared_total", (1, 60))
    assert r is not None and r.file_id == 1
    # a name declared only in the sibling file still resolves
    r2 = resolve_declaration(idx, "main", (0, 5))
    assert r2 is not None


def test_macros_enums_typedefs_registered(tmp_path):
    src = (
        "#define WIDTH 4\n"
        "#define TWICE(v) ((v)+(v))\n"
        "enum state { IDLE, BUSY = 2 };\n"
        "typedef unsigned short u16;\n"
        "int main(void){ u16 a = WIDTH; return a + IDLE; }\n"
    )
    p = write_fixture(tmp_path, src, "defs.c")
    idx = build_ast_index([p])
    assert "WIDTH" in idx.macros and "TWICE" not in idx.macros
    assert "TWICE" in idx.macro_fns
    assert set(idx.enum_consts) >= {"IDLE", "BUSY"}
    assert "u16" in idx.typedefs


def test_build_is_deterministic(tmp_path):
    p = write_fixture(tmp_path)
    dump_a = dump_index(build_ast_index([p]))
    dump_b = dump_index(build_ast_index([p]))
    assert dump_a == dump_b


def test_cond_ids_are_stable_path_at_offset(tmp_path):
    p = write_fixture(tmp_path)
    idx = build_ast_index([p])
    for cond_id, c in idx.conditionals.items():
        name, _, off = cond_id.rpartition("@")
        assert name == "fix.c"
        assert int(off) == c.guard_range.start_byte


def test_reparse_ok_on_fixture_and_on_assert_statement(tmp_path):
    assert reparse_ok(FIXTURE)
    assert reparse_ok("int f(void){ assert(!((x > 1))); return 0; }")
    assert not reparse_ok("int f(void){ if (x { return 0; }")


def test_parser_recovers_and_warns_on_bad_region(tmp_path):
    src = "int main(void){ int x = 1; @@garbage if (x) { x = 2; } return x; }\n"
    p = write_fixture(tmp_path, src, "bad.c")
    idx = build_ast_index([p])
    # the conditional after the bad region is still found
    assert any(c.kind == "if" for c in idx.conditionals.values())


# ---------------------------------------------------------------------------
# property: generated control-flow nests index to exactly the constructed shape


@st.composite
def gen_program(draw):
    """Generate a small C body; returns (source, census dict)."""
    census = {"if": 0, "else": 0, "while": 0, "for": 0, "switch": 0, "case": 0}
    names = ["a", "b", "c"]

    def gen_stmts(depth: int) -> list[str]:
        n = draw(st.integers(min_value=1, max_value=3))
        out = []
        for _ in range(n):
            out.extend(gen_stmt(depth))
        return out

    def gen_stmt(depth: int) -> list[str]:
        choices = ["assign"]
        if depth < 3:
            choices += ["if", "while", "for", "switch"]
        kind = draw(st.sampled_from(choices))
        v = draw(st.sampled_from(names))
        w = draw(st.sampled_from(names))
        k = draw(st.integers(min_value=0, max_value=9))
        if kind == "assign":
            return [f"{v} = {w} + {k};"]
        if kind == "if":
            census["if"] += 1
            body = ["if (" + f"{v} > {k}" + ") {"] + gen_stmts(depth + 1) + ["}"]
            if draw(st.booleans()):
                census["else"] += 1
                body += ["else {"] + gen_stmts(depth + 1) + ["}"]
            return body
        if kind == "while":
            census["while"] += 1
            return [f"while ({v} < {k}) {{"] + gen_stmts(depth + 1) + ["}"]
        if kind == "for":
            census["for"] += 1
            return [f"for ({v} = 0; {v} < {k}; {v} = {v} + 1) {{"] + \
                gen_stmts(depth + 1) + ["}"]
        census["switch"] += 1
        n_cases = draw(st.integers(min_value=1, max_value=3))
        census["case"] += n_cases
        lines = [f"switch ({v}) {{"]
        for i in range(n_cases):
            lines += [f"case {i}:"] + gen_stmts(depth + 1) + ["break;"]
        lines.append("}")
        return lines

    body = gen_stmts(0)
    src = "int main(void) {\nint a = 0; int b = 0; int c = 0;\n" + \
        "\n".join(body) + "\nreturn a;\n}\n"
    return src, census


@settings(max_examples=40, deadline=None)
@given(gen_program())
def test_generated_programs_index_to_constructed_shape(tmp_path_factory, prog):
    src, census = prog
    p = tmp_path_factory.mktemp("gen") / "gen.c"
    p.write_text(src)
    idx = build_ast_index([p])
    assert idx.warnings == []
    got = {"if": 0, "while": 0, "for": 0, "switch": 0, "case": 0, "else": 0}
    for c in idx.conditionals.values():
        if c.kind in got:
            got[c.kind] += 1
        for a in c.arms:
            if a.kind == "case":
                got["case"] += 1
            if a.kind == "else" and not a.synthetic:
                got["else"] += 1
    assert got["if"] == census["if"]
    assert got["while"] == census["while"]
    assert got["for"] == census["for"]
    assert got["switch"] == census["switch"]
    assert got["case"] == census["case"]
    assert got["else"] == census["else"]
    # ranges stay inside the file and ordinals stay dense
    size = len(idx.files[0].content)
    for tp in idx.trace_points:
        assert 0 <= tp.range.start_byte <= tp.range.end_byte <= size
    for pts in idx.statements.values():
        assert [tp.ordinal for tp in pts] == list(range(len(pts)))
