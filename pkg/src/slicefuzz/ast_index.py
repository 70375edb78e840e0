"""Byte-range C source indexer.

Tokenizes and parses a small-but-useful subset of C (functions,
declarations, if/switch/while/for/do-while, preprocessor lines) into an
index keyed by byte offsets, good enough to drive instrumentation,
coverage accounting and slicing without a real compiler frontend:

  * every conditional with its guard range and outgoing arms (synthetic
    arms included: a missing else, a switch's fall-past, a loop's exit),
  * every executable statement as a trace point with a per-line ordinal,
  * declarations per lexical scope, object-like macros, enum constants.

Parsing is tolerant: regions that do not fit the grammar are skipped and
recorded as warnings rather than aborting the build.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

KEYWORDS = {
    "auto", "break", "case", "char", "const", "continue", "default", "do",
    "double", "else", "enum", "extern", "float", "for", "goto", "if",
    "inline", "int", "long", "register", "restrict", "return", "short",
    "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
    "unsigned", "void", "volatile", "while", "_Bool", "_Complex",
    "_Noreturn", "_Static_assert",
}

# Specifier tokens that can open a declaration.
TYPE_START = {
    "void", "char", "short", "int", "long", "float", "double", "signed",
    "unsigned", "_Bool", "_Complex", "struct", "union", "enum", "const",
    "volatile", "static", "extern", "register", "inline", "restrict",
    "typedef", "auto", "_Noreturn",
}

# Widely used typedef names accepted as declaration openers without a
# typedef in the indexed files.
COMMON_TYPEDEFS = {
    "size_t", "ssize_t", "ptrdiff_t", "intptr_t", "uintptr_t", "FILE",
    "int8_t", "int16_t", "int32_t", "int64_t",
    "uint8_t", "uint16_t", "uint32_t", "uint64_t",
    "bool", "wchar_t",
}

_PUNCT = [
    "<<=", ">>=", "...",
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "{", "}", "(", ")", "[", "]", ";", ",", ".", "?", ":",
    "+", "-", "*", "/", "%", "&", "|", "^", "~", "!", "<", ">", "=",
]

ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="}


@dataclass(frozen=True)
class FileRange:
    """Half-open byte range [start_byte, end_byte) within one file."""

    file_id: int
    start_byte: int
    end_byte: int
    start_line: int
    end_line: int

    def contains(self, other: "FileRange") -> bool:
        return (
            self.file_id == other.file_id
            and self.start_byte <= other.start_byte
            and other.end_byte <= self.end_byte
        )

    def contains_byte(self, file_id: int, byte: int) -> bool:
        return self.file_id == file_id and self.start_byte <= byte < self.end_byte

    @property
    def empty(self) -> bool:
        return self.start_byte >= self.end_byte


@dataclass
class Token:
    kind: str          # id | num | str | char | punct
    text: bytes
    start: int
    end: int
    line: int

    @property
    def s(self) -> str:
        return self.text.decode("utf-8", errors="replace")


@dataclass
class Arm:
    """One outgoing direction of a conditional."""

    arm_id: int
    kind: str                  # then | else | case | default | loop-body | loop-exit | fall-past
    body_range: FileRange      # empty for synthetic arms
    guard_value: Optional[str] = None   # case literal text
    synthetic: bool = False


@dataclass
class Conditional:
    cond_id: str
    kind: str                  # if | switch | while | do-while | for
    file_id: int
    line: int                  # guard start line
    guard_range: FileRange
    arms: list[Arm]
    range: FileRange           # the whole statement
    func_name: Optional[str] = None

    def guard_text(self, index: "AstIndex") -> str:
        return index.text(self.guard_range)

    def arm(self, arm_id: int) -> Arm:
        return self.arms[arm_id]


@dataclass
class TracePoint:
    """One instrumentation site; (file_id, line, ordinal) names its records."""

    file_id: int
    line: int
    ordinal: int               # assigned after parse, per (file_id, line)
    kind: str                  # stmt | guard | arm | func
    anchor: int                # byte position ordering points within a line
    range: FileRange
    style: str                 # how the tracer realizes this point
    cond_id: Optional[str] = None
    arm_id: Optional[int] = None
    func_name: Optional[str] = None
    wrap_range: Optional[FileRange] = None   # unbraced arm body to brace
    node: Optional["Stmt"] = None

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.file_id, self.line, self.ordinal)


@dataclass
class Stmt:
    """A parsed statement node (simple statements and control structures)."""

    kind: str                  # expr | decl | return | break | continue | goto | empty
                               # | block | if | switch | while | do-while | for
    range: FileRange
    file_id: int
    tokens: list[Token] = field(default_factory=list)   # simple statements only
    children: list["Stmt"] = field(default_factory=list)
    parent: Optional["Stmt"] = None
    func: Optional["FunctionDef"] = None
    # control-structure extras
    guard_tokens: list[Token] = field(default_factory=list)
    guard_range: Optional[FileRange] = None
    header_range: Optional[FileRange] = None   # keyword .. closing paren
    cond: Optional[Conditional] = None
    arm_of: Optional[tuple[str, int]] = None   # (cond_id, arm_id) this stmt is the body of
    label_ranges: list[FileRange] = field(default_factory=list)
    body_interior: Optional[FileRange] = None  # blocks: inside the braces
    init_tokens: list[Token] = field(default_factory=list)   # for-loops
    incr_tokens: list[Token] = field(default_factory=list)
    declared: list[tuple[str, FileRange]] = field(default_factory=list)

    def ancestors(self) -> Iterable["Stmt"]:
        node = self.parent
        while node is not None:
            yield node
            node = node.parent


@dataclass
class FunctionDef:
    name: str
    file_id: int
    signature_range: FileRange     # specifiers .. closing paren of params
    range: FileRange               # whole definition
    body: Stmt                     # the top-level block
    params: list[tuple[str, FileRange]] = field(default_factory=list)
    line: int = 0


@dataclass
class Scope:
    """A lexical scope: byte range plus the names it declares."""

    file_id: int
    start: int
    end: int
    names: dict[str, FileRange] = field(default_factory=dict)
    decl_stmts: dict[str, Stmt] = field(default_factory=dict)


@dataclass
class FileInfo:
    file_id: int
    path: str
    display: str
    content: bytes
    sha256: str
    line_offsets: list[int]

    def line_of(self, byte: int) -> int:
        return bisect.bisect_right(self.line_offsets, byte)


@dataclass
class AstIndex:
    """The queryable result of indexing one or more C files."""

    files: list[FileInfo]
    functions: dict[str, FunctionDef] = field(default_factory=dict)
    conditionals: dict[str, Conditional] = field(default_factory=dict)
    statements: dict[tuple[int, int], list[TracePoint]] = field(default_factory=dict)
    trace_points: list[TracePoint] = field(default_factory=list)
    scopes: list[Scope] = field(default_factory=list)
    macros: dict[str, FileRange] = field(default_factory=dict)       # object-like
    macro_fns: set[str] = field(default_factory=set)                 # function-like
    enum_consts: dict[str, FileRange] = field(default_factory=dict)
    typedefs: set[str] = field(default_factory=set)
    comments: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    preproc: dict[int, list[FileRange]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    top_level: dict[int, list[Stmt]] = field(default_factory=dict)   # functions + global decls in order

    def file(self, file_id: int) -> FileInfo:
        return self.files[file_id]

    def file_by_name(self, name: str) -> Optional[FileInfo]:
        for fi in self.files:
            if fi.display == name or fi.path == name or os.path.basename(fi.path) == name:
                return fi
        return None

    def text(self, r: FileRange) -> str:
        return self.files[r.file_id].content[r.start_byte:r.end_byte].decode(
            "utf-8", errors="replace")

    def raw(self, r: FileRange) -> bytes:
        return self.files[r.file_id].content[r.start_byte:r.end_byte]

    def resolve_record(self, file_id: int, line: int, ordinal: int) -> Optional[TracePoint]:
        pts = self.statements.get((file_id, line))
        if pts is None or ordinal >= len(pts):
            return None
        return pts[ordinal]


# ---------------------------------------------------------------------------
# tokenizer


_ID_START = set(b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_ID_CONT = _ID_START | set(b"0123456789")
_DIGITS = set(b"0123456789")


def tokenize(content: bytes, file_id: int = 0):
    """Return (tokens, comments, preproc_ranges); byte-offset accurate."""
    tokens: list[Token] = []
    comments: list[tuple[int, int]] = []
    preproc: list[tuple[int, int]] = []
    n = len(content)
    i = 0
    line = 1
    at_line_start = True

    def advance_lines(segment: bytes) -> int:
        return segment.count(b"\n")

    while i < n:
        c = content[i]
        if c == 0x0A:
            line += 1
            i += 1
            at_line_start = True
            continue
        if c in (0x20, 0x09, 0x0D, 0x0B, 0x0C):
            i += 1
            continue
        if c == 0x23 and at_line_start:  # '#'
            start = i
            while i < n:
                j = content.find(b"\n", i)
                if j == -1:
                    i = n
                    break
                # honor backslash-newline continuations
                k = j - 1
                while k >= start and content[k] in (0x20, 0x09, 0x0D):
                    k -= 1
                if k >= start and content[k] == 0x5C:
                    line += 1
                    i = j + 1
                    continue
                i = j
                break
            preproc.append((start, i))
            continue
        at_line_start = False
        if c == 0x2F and i + 1 < n:  # '/'
            nxt = content[i + 1]
            if nxt == 0x2F:
                j = content.find(b"\n", i)
                j = n if j == -1 else j
                comments.append((i, j))
                i = j
                continue
            if nxt == 0x2A:
                j = content.find(b"*/", i + 2)
                j = n if j == -1 else j + 2
                comments.append((i, j))
                line += advance_lines(content[i:j])
                i = j
                continue
        if c in _ID_START:
            j = i + 1
            while j < n and content[j] in _ID_CONT:
                j += 1
            tokens.append(Token("id", content[i:j], i, j, line))
            i = j
            continue
        if c in _DIGITS or (c == 0x2E and i + 1 < n and content[i + 1] in _DIGITS):
            j = i + 1
            while j < n:
                ch = content[j]
                if ch in _ID_CONT or ch == 0x2E:
                    j += 1
                elif ch in (0x2B, 0x2D) and content[j - 1] in (0x65, 0x45, 0x70, 0x50):
                    j += 1  # exponent sign after e/E/p/P
                else:
                    break
            tokens.append(Token("num", content[i:j], i, j, line))
            i = j
            continue
        if c in (0x22, 0x27):  # string or char literal
            quote = c
            j = i + 1
            while j < n:
                if content[j] == 0x5C:
                    j += 2
                    continue
                if content[j] == quote:
                    j += 1
                    break
                if content[j] == 0x0A:
                    break  # unterminated; tolerate
                j += 1
            kind = "str" if quote == 0x22 else "char"
            tokens.append(Token(kind, content[i:j], i, j, line))
            i = j
            continue
        for p in _PUNCT:
            pb = p.encode()
            if content.startswith(pb, i):
                tokens.append(Token("punct", pb, i, i + len(pb), line))
                i += len(pb)
                break
        else:
            i += 1  # unknown byte: skip
    return tokens, comments, preproc


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, fi: FileInfo, index: AstIndex):
        self.fi = fi
        self.index = index
        self.toks, comments, preproc = tokenize(fi.content, fi.file_id)
        index.comments[fi.file_id] = comments
        index.preproc[fi.file_id] = [
            self._mkrange(s, e) for (s, e) in preproc
        ]
        self.pos = 0
        self.scope_stack: list[Scope] = []
        self.points: list[TracePoint] = []
        self.cur_func: Optional[FunctionDef] = None
        self._scan_preproc(preproc)

    # -- small helpers ------------------------------------------------------

    def _mkrange(self, start: int, end: int) -> FileRange:
        fi = self.fi
        sl = fi.line_of(start)
        el = fi.line_of(max(start, end - 1)) if end > start else sl
        return FileRange(fi.file_id, start, end, sl, el)

    def _empty_range(self, at: int) -> FileRange:
        line = self.fi.line_of(at)
        return FileRange(self.fi.file_id, at, at, line, line)

    def peek(self, off: int = 0) -> Optional[Token]:
        p = self.pos + off
        return self.toks[p] if p < len(self.toks) else None

    def next(self) -> Optional[Token]:
        t = self.peek()
        if t is not None:
            self.pos += 1
        return t

    def at(self, text: str, off: int = 0) -> bool:
        t = self.peek(off)
        return t is not None and t.text == text.encode()

    def expect(self, text: str) -> Optional[Token]:
        if self.at(text):
            return self.next()
        t = self.peek()
        where = f"line {t.line}" if t else "eof"
        self.warn(f"expected '{text}' at {where}")
        return None

    def warn(self, msg: str) -> None:
        self.index.warnings.append(f"{self.fi.display}: {msg}")

    def skip_balanced(self, open_tok: str, close_tok: str) -> int:
        """pos is at open_tok; skip past the matching close. Returns end byte."""
        depth = 0
        end = self.peek().end if self.peek() else len(self.fi.content)
        while self.pos < len(self.toks):
            t = self.next()
            end = t.end
            if t.text == open_tok.encode():
                depth += 1
            elif t.text == close_tok.encode():
                depth -= 1
                if depth == 0:
                    break
        return end

    def _scan_preproc(self, preproc: list[tuple[int, int]]) -> None:
        """Record #define names (object-like vs function-like)."""
        for (s, e) in preproc:
            text = self.fi.content[s:e]
            m = re.match(rb"#\s*define\s+([A-Za-z_]\w*)(\(?)", text)
            if not m:
                continue
            name = m.group(1).decode()
            if m.group(2) == b"(":
                self.index.macro_fns.add(name)
            else:
                self.index.macros.setdefault(name, self._mkrange(s, e))

    # -- scopes --------------------------------------------------------------

    def push_scope(self, start: int) -> Scope:
        sc = Scope(self.fi.file_id, start, len(self.fi.content))
        self.scope_stack.append(sc)
        self.index.scopes.append(sc)
        return sc

    def pop_scope(self, end: int) -> None:
        self.scope_stack.pop().end = end

    def declare(self, name: str, rng: FileRange, stmt: Optional[Stmt] = None) -> None:
        if self.scope_stack:
            sc = self.scope_stack[-1]
            sc.names.setdefault(name, rng)
            if stmt is not None:
                sc.decl_stmts.setdefault(name, stmt)

    # -- declaration helpers --------------------------------------------------

    def looks_like_decl(self) -> bool:
        t = self.peek()
        if t is None or t.kind != "id":
            return False
        name = t.s
        if name in TYPE_START or name in self.index.typedefs or name in COMMON_TYPEDEFS:
            return True
        if name in KEYWORDS:
            return False
        # `Ident Ident ...` / `Ident * Ident` at statement start
        t1, t2 = self.peek(1), self.peek(2)
        if t1 is not None and t1.kind == "id" and t1.s not in KEYWORDS:
            return True
        if (t1 is not None and t1.text == b"*" and t2 is not None
                and t2.kind == "id" and t2.s not in KEYWORDS):
            return True
        return False

    def extract_declared_names(self, tokens: list[Token]) -> list[tuple[str, FileRange]]:
        """Declarator names from a declaration's tokens (lightweight)."""
        names: list[tuple[str, FileRange]] = []
        # drop leading specifiers/qualifiers and struct/union/enum heads
        i = 0
        depth = 0
        is_typedef = tokens and tokens[0].text == b"typedef"
        seen_specifier = False
        while i < len(tokens):
            t = tokens[i]
            if t.text in (b"{",):
                depth += 1
            elif t.text in (b"}",):
                depth -= 1
            elif depth == 0 and t.kind == "id" and t.s not in KEYWORDS:
                nxt = tokens[i + 1] if i + 1 < len(tokens) else None
                prev = tokens[i - 1] if i > 0 else None
                if prev is not None and prev.text in (b".", b"->"):
                    i += 1
                    continue
                if nxt is not None and nxt.text in (b"=", b",", b";", b"[", b"(", b")"):
                    if not seen_specifier and (
                        t.s in self.index.typedefs or t.s in COMMON_TYPEDEFS
                    ) and nxt.text not in (b"=", b",", b";"):
                        seen_specifier = True
                        i += 1
                        continue
                    names.append((t.s, self._mkrange(t.start, t.end)))
                    # skip initializer / array size / param list
                    i += 1
                    d2 = 0
                    while i < len(tokens):
                        tt = tokens[i]
                        if tt.text in (b"(", b"[", b"{"):
                            d2 += 1
                        elif tt.text in (b")", b"]", b"}"):
                            d2 -= 1
                        elif d2 == 0 and tt.text == b",":
                            break
                        elif d2 == 0 and tt.text == b";":
                            break
                        i += 1
                    continue
            elif depth == 0 and t.kind == "id":
                seen_specifier = True
            i += 1
        if is_typedef:
            for (nm, _r) in names:
                self.index.typedefs.add(nm)
        return names

    def collect_enum_consts(self, tokens: list[Token]) -> None:
        """Register enumeration constants from `enum ... { A, B = 2, ... }`."""
        try:
            b0 = next(i for i, t in enumerate(tokens) if t.text == b"{")
        except StopIteration:
            return
        depth = 0
        expecting = True
        for t in tokens[b0:]:
            if t.text == b"{":
                depth += 1
                expecting = True
            elif t.text == b"}":
                depth -= 1
                if depth == 0:
                    break
            elif depth == 1:
                if expecting and t.kind == "id" and t.s not in KEYWORDS:
                    self.index.enum_consts.setdefault(
                        t.s, self._mkrange(t.start, t.end))
                    expecting = False
                elif t.text == b",":
                    expecting = True

    # -- trace points ----------------------------------------------------------

    def add_point(self, kind: str, anchor: int, rng: FileRange, style: str,
                  **extra) -> TracePoint:
        tp = TracePoint(
            file_id=self.fi.file_id,
            line=self.fi.line_of(anchor) if anchor < len(self.fi.content) else self.fi.line_of(max(0, anchor - 1)),
            ordinal=-1,
            kind=kind,
            anchor=anchor,
            range=rng,
            style=style,
            **extra,
        )
        self.points.append(tp)
        return tp

    # -- top level --------------------------------------------------------------

    def parse_translation_unit(self) -> None:
        self.push_scope(0)  # file scope
        items = self.index.top_level.setdefault(self.fi.file_id, [])
        while self.pos < len(self.toks):
            item = self.parse_external()
            if item is not None:
                items.append(item)
        self.pop_scope(len(self.fi.content))

    def parse_external(self) -> Optional[Stmt]:
        start_tok = self.peek()
        if start_tok is None:
            return None
        start_pos = self.pos
        # scan specifiers / declarator until we can classify
        i = self.pos
        toks = self.toks
        depth = 0
        name_tok: Optional[Token] = None
        while i < len(toks):
            t = toks[i]
            if t.text == b"(" and depth == 0:
                name_tok = toks[i - 1] if i > start_pos else None
                # find matching paren
                d = 0
                j = i
                while j < len(toks):
                    if toks[j].text == b"(":
                        d += 1
                    elif toks[j].text == b")":
                        d -= 1
                        if d == 0:
                            break
                    j += 1
                after = toks[j + 1] if j + 1 < len(toks) else None
                if (after is not None and after.text == b"{"
                        and name_tok is not None and name_tok.kind == "id"):
                    return self.parse_function(start_pos, name_tok, j + 1)
                # prototype or call-like: fall through to declaration scan
                i = j + 1
                continue
            if t.text == b"{":
                depth += 1
            elif t.text == b"}":
                if depth == 0:
                    self.warn(f"stray '}}' at line {t.line}")
                    self.next()
                    return None
                depth -= 1
            elif t.text == b";" and depth == 0:
                return self.parse_global_decl(start_pos, i)
            elif t.text == b"=" and depth == 0:
                # initializer may contain braces; scan to the top-level ';'
                j = i
                d2 = 0
                while j < len(toks):
                    tt = toks[j]
                    if tt.text in (b"{", b"(", b"["):
                        d2 += 1
                    elif tt.text in (b"}", b")", b"]"):
                        d2 -= 1
                    elif tt.text == b";" and d2 == 0:
                        break
                    j += 1
                return self.parse_global_decl(start_pos, j)
            i += 1
        # ran off the end
        self.pos = len(toks)
        self.warn("unterminated external declaration")
        return None

    def parse_global_decl(self, start_pos: int, semi_idx: int) -> Stmt:
        toks = self.toks[start_pos:semi_idx + 1]
        self.pos = semi_idx + 1
        rng = self._mkrange(toks[0].start, toks[-1].end)
        stmt = Stmt(kind="decl", range=rng, file_id=self.fi.file_id, tokens=toks)
        if any(t.text == b"enum" for t in toks):
            self.collect_enum_consts(toks)
        stmt.declared = self.extract_declared_names(toks)
        for (nm, r) in stmt.declared:
            self.declare(nm, rng, stmt)
        return stmt

    def parse_function(self, start_pos: int, name_tok: Token, body_idx: int) -> Stmt:
        toks = self.toks
        sig_range = self._mkrange(toks[start_pos].start, toks[body_idx - 1].end)
        fn = FunctionDef(
            name=name_tok.s,
            file_id=self.fi.file_id,
            signature_range=sig_range,
            range=sig_range,  # patched after body parse
            body=None,  # type: ignore[arg-type]
            line=toks[start_pos].line,
        )
        # parameters: identifiers directly before ',' or ')' at paren depth 1
        d = 0
        params: list[tuple[str, FileRange]] = []
        for i in range(start_pos, body_idx):
            t = toks[i]
            if t.text == b"(":
                d += 1
            elif t.text == b")":
                d -= 1
            elif d >= 1 and t.kind == "id" and t.s not in KEYWORDS:
                nxt = toks[i + 1] if i + 1 < body_idx else None
                if nxt is not None and nxt.text in (b",", b")", b"["):
                    params.append((t.s, self._mkrange(t.start, t.end)))
        fn.params = params

        prev_func = self.cur_func
        self.cur_func = fn
        self.pos = body_idx
        scope = self.push_scope(toks[body_idx].start)
        for (nm, r) in params:
            scope.names.setdefault(nm, self._mkrange(sig_range.start_byte, sig_range.end_byte))
        body = self.parse_block()
        self.pop_scope(body.range.end_byte)
        self.cur_func = prev_func

        fn.body = body
        fn.range = self._mkrange(sig_range.start_byte, body.range.end_byte)
        self.index.functions.setdefault(fn.name, fn)
        self.declare(fn.name, fn.signature_range)
        # function-entry marker, anchored just inside the opening brace
        self.add_point(
            "func", body.range.start_byte + 1, fn.range, "func_entry",
            func_name=fn.name,
        )
        wrapper = Stmt(kind="func", range=fn.range, file_id=self.fi.file_id)
        wrapper.children = [body]
        wrapper.func = fn
        body.parent = wrapper
        self._set_func(body, fn)
        return wrapper

    def _set_func(self, node: Stmt, fn: FunctionDef) -> None:
        node.func = fn
        for ch in node.children:
            self._set_func(ch, fn)

    # -- statements ----------------------------------------------------------------

    def parse_block(self) -> Stmt:
        open_tok = self.expect("{")
        if open_tok is None:
            open_tok = self.peek() or self.toks[-1]
        stmts: list[Stmt] = []
        end = open_tok.end
        while True:
            t = self.peek()
            if t is None:
                self.warn("unterminated block")
                end = len(self.fi.content)
                break
            if t.text == b"}":
                self.next()
                end = t.end
                break
            st = self.parse_statement()
            if st is not None:
                stmts.append(st)
        rng = self._mkrange(open_tok.start, end)
        block = Stmt(kind="block", range=rng, file_id=self.fi.file_id)
        block.children = stmts
        block.body_interior = self._mkrange(open_tok.end, max(open_tok.end, end - 1))
        for s in stmts:
            s.parent = block
        return block

    def parse_statement(self) -> Optional[Stmt]:
        t = self.peek()
        if t is None:
            return None
        labels: list[FileRange] = []
        # goto labels: `name :` at statement start (ternaries never start a stmt
        # with `id :`), but not case/default which the switch parser owns here.
        while True:
            t = self.peek()
            if (t is not None and t.kind == "id" and t.s not in KEYWORDS
                    and self.at(":", 1)):
                colon = self.peek(1)
                labels.append(self._mkrange(t.start, colon.end))
                self.next()
                self.next()
                continue
            break
        t = self.peek()
        if t is None:
            return None

        if t.text == b"{":
            scope = self.push_scope(t.start)
            st = self.parse_block()
            self.pop_scope(st.range.end_byte)
        elif t.text == b"if":
            st = self.parse_if()
        elif t.text == b"switch":
            st = self.parse_switch()
        elif t.text == b"while":
            st = self.parse_while()
        elif t.text == b"do":
            st = self.parse_do_while()
        elif t.text == b"for":
            st = self.parse_for()
        elif t.text == b";":
            self.next()
            st = Stmt(kind="empty", range=self._mkrange(t.start, t.end),
                      file_id=self.fi.file_id)
        else:
            st = self.parse_simple()
        if st is not None and labels:
            st.label_ranges = labels + st.label_ranges
        return st

    def parse_simple(self) -> Optional[Stmt]:
        """Expression/declaration/jump statement, up to the ';'."""
        start_tok = self.peek()
        assert start_tok is not None
        kind = "expr"
        if start_tok.text in (b"return", b"break", b"continue", b"goto"):
            kind = start_tok.s
        elif self.looks_like_decl():
            kind = "decl"
        toks: list[Token] = []
        depth = 0
        end = start_tok.end
        breakers = {b"if", b"while", b"for", b"switch", b"do", b"else",
                    b"case", b"default", b"return", b"goto", b"break",
                    b"continue"}
        while True:
            t = self.peek()
            if t is None:
                self.warn(f"unterminated statement at line {start_tok.line}")
                break
            if depth == 0 and toks and t.kind == "id" and t.text in breakers:
                self.warn(f"statement recovery before '{t.s}' at line {t.line}")
                break
            if depth == 0 and kind != "decl" and t.text == b"{":
                self.warn(f"statement recovery before '{{' at line {t.line}")
                break
            if t.text in (b"(", b"[", b"{"):
                depth += 1
            elif t.text in (b")", b"]", b"}"):
                if depth == 0 and t.text == b"}":
                    self.warn(f"statement ran into '}}' at line {t.line}")
                    break
                depth -= 1
            toks.append(t)
            end = t.end
            self.next()
            if t.text == b";" and depth <= 0:
                break
        rng = self._mkrange(start_tok.start, end)
        st = Stmt(kind=kind, range=rng, file_id=self.fi.file_id, tokens=toks)
        if kind == "decl":
            if any(tt.text == b"enum" for tt in toks):
                self.collect_enum_consts(toks)
            st.declared = self.extract_declared_names(toks)
            for (nm, r) in st.declared:
                self.declare(nm, rng, st)
        self.add_point("stmt", rng.start_byte, rng, "stmt", node=st)
        return st

    def _parse_guard(self) -> tuple[list[Token], Optional[FileRange]]:
        """Parse `( expr )`; returns (tokens, range-between-parens)."""
        if not self.at("("):
            self.expect("(")
            return [], None
        open_tok = self.next()
        toks: list[Token] = []
        depth = 1
        end = open_tok.end
        while True:
            t = self.peek()
            if t is None:
                self.warn("unterminated guard")
                break
            if t.text == b"(":
                depth += 1
            elif t.text == b")":
                depth -= 1
                if depth == 0:
                    self.next()
                    end = t.start
                    break
            toks.append(t)
            end = t.end
            self.next()
        if not toks:
            return [], self._empty_range(end)
        return toks, self._mkrange(toks[0].start, toks[-1].end)

    def _next_cond_id(self, guard_range: FileRange) -> str:
        return f"{self.fi.display}@{guard_range.start_byte}"

    def _arm_body(self, arm_kind: str) -> tuple[Stmt, FileRange, bool]:
        """Parse an arm body; returns (node, body_range, braced)."""
        if self.at("{"):
            scope = self.push_scope(self.peek().start)
            block = self.parse_block()
            self.pop_scope(block.range.end_byte)
            return block, block.body_interior, True
        st = self.parse_statement()
        if st is None:
            st = Stmt(kind="empty", range=self._empty_range(len(self.fi.content)),
                      file_id=self.fi.file_id)
        return st, st.range, False

    def parse_if(self) -> Stmt:
        kw = self.next()
        guard_toks, guard_range = self._parse_guard()
        if guard_range is None:
            guard_range = self._empty_range(kw.end)
        header_range = self._mkrange(kw.start, guard_range.end_byte + 1)
        cond_id = self._next_cond_id(guard_range)

        then_node, then_range, then_braced = self._arm_body("then")
        else_node = None
        else_range = None
        else_kw = None
        if self.at("else"):
            else_kw = self.next()
            else_node, else_range, _else_braced = self._arm_body("else")

        end_byte = (else_node or then_node).range.end_byte
        stmt_range = self._mkrange(kw.start, end_byte)

        arms = [Arm(0, "then", then_range)]
        if else_node is not None:
            arms.append(Arm(1, "else", else_range))
        else:
            arms.append(Arm(1, "else", self._empty_range(end_byte), synthetic=True))

        cond = Conditional(
            cond_id=cond_id, kind="if", file_id=self.fi.file_id,
            line=guard_toks[0].line if guard_toks else kw.line,
            guard_range=guard_range, arms=arms, range=stmt_range,
            func_name=self.cur_func.name if self.cur_func else None,
        )
        self.index.conditionals[cond_id] = cond

        st = Stmt(kind="if", range=stmt_range, file_id=self.fi.file_id,
                  guard_tokens=guard_toks, guard_range=guard_range,
                  header_range=header_range, cond=cond)
        st.children = [then_node] + ([else_node] if else_node is not None else [])
        then_node.parent = st
        then_node.arm_of = (cond_id, 0)
        if else_node is not None:
            else_node.parent = st
            else_node.arm_of = (cond_id, 1)
            st.label_ranges.append(self._mkrange(else_kw.start, else_kw.end))

        self.add_point("guard", guard_range.start_byte, guard_range,
                       "guard_wrap", cond_id=cond_id, node=st)
        self._add_arm_marker(cond, 0, then_node, then_braced)
        if else_node is not None:
            braced = else_node.kind == "block"
            self._add_arm_marker(cond, 1, else_node, braced)
        else:
            self.add_point("arm", end_byte, arms[1].body_range,
                           "arm_synthetic_else", cond_id=cond_id, arm_id=1, node=st)
        return st

    def _add_arm_marker(self, cond: Conditional, arm_id: int, body: Stmt,
                        braced: bool) -> None:
        arm = cond.arms[arm_id]
        if braced:
            self.add_point("arm", body.range.start_byte + 1, arm.body_range,
                           "arm_after_brace", cond_id=cond.cond_id, arm_id=arm_id,
                           node=body)
        else:
            self.add_point("arm", body.range.start_byte, arm.body_range,
                           "arm_wrap_stmt", cond_id=cond.cond_id, arm_id=arm_id,
                           wrap_range=body.range, node=body)

    def parse_while(self) -> Stmt:
        kw = self.next()
        guard_toks, guard_range = self._parse_guard()
        if guard_range is None:
            guard_range = self._empty_range(kw.end)
        header_range = self._mkrange(kw.start, guard_range.end_byte + 1)
        cond_id = self._next_cond_id(guard_range)
        body_node, body_range, braced = self._arm_body("loop-body")
        stmt_range = self._mkrange(kw.start, body_node.range.end_byte)
        arms = [
            Arm(0, "loop-body", body_range),
            Arm(1, "loop-exit", self._empty_range(stmt_range.end_byte), synthetic=True),
        ]
        cond = Conditional(
            cond_id=cond_id, kind="while", file_id=self.fi.file_id,
            line=guard_toks[0].line if guard_toks else kw.line,
            guard_range=guard_range, arms=arms, range=stmt_range,
            func_name=self.cur_func.name if self.cur_func else None,
        )
        self.index.conditionals[cond_id] = cond
        st = Stmt(kind="while", range=stmt_range, file_id=self.fi.file_id,
                  guard_tokens=guard_toks, guard_range=guard_range,
                  header_range=header_range, cond=cond)
        st.children = [body_node]
        body_node.parent = st
        body_node.arm_of = (cond_id, 0)
        self.add_point("guard", guard_range.start_byte, guard_range,
                       "guard_wrap", cond_id=cond_id, node=st)
        self._add_arm_marker(cond, 0, body_node, braced)
        return st

    def parse_do_while(self) -> Stmt:
        kw = self.next()
        body_node, body_range, braced = self._arm_body("loop-body")
        self.expect("while")
        guard_toks, guard_range = self._parse_guard()
        if guard_range is None:
            guard_range = self._empty_range(body_node.range.end_byte)
        semi = self.expect(";")
        end_byte = semi.end if semi else guard_range.end_byte + 1
        stmt_range = self._mkrange(kw.start, end_byte)
        cond_id = self._next_cond_id(guard_range)
        arms = [
            Arm(0, "loop-body", body_range),
            Arm(1, "loop-exit", self._empty_range(end_byte), synthetic=True),
        ]
        cond = Conditional(
            cond_id=cond_id, kind="do-while", file_id=self.fi.file_id,
            line=guard_toks[0].line if guard_toks else kw.line,
            guard_range=guard_range, arms=arms, range=stmt_range,
            func_name=self.cur_func.name if self.cur_func else None,
        )
        self.index.conditionals[cond_id] = cond
        st = Stmt(kind="do-while", range=stmt_range, file_id=self.fi.file_id,
                  guard_tokens=guard_toks, guard_range=guard_range,
                  header_range=self._mkrange(kw.start, kw.end), cond=cond)
        st.children = [body_node]
        body_node.parent = st
        body_node.arm_of = (cond_id, 0)
        self.add_point("guard", guard_range.start_byte, guard_range,
                       "guard_wrap", cond_id=cond_id, node=st)
        self._add_arm_marker(cond, 0, body_node, braced)
        return st

    def parse_for(self) -> Stmt:
        kw = self.next()
        if not self.at("("):
            self.expect("(")
            return Stmt(kind="expr", range=self._mkrange(kw.start, kw.end),
                        file_id=self.fi.file_id)
        self.next()  # '('
        scope = self.push_scope(kw.start)

        def grab_until(stops: tuple[bytes, ...]) -> list[Token]:
            out: list[Token] = []
            depth = 0
            while True:
                t = self.peek()
                if t is None:
                    return out
                if t.text in (b"(", b"[", b"{"):
                    depth += 1
                elif t.text in (b")", b"]", b"}"):
                    if depth == 0 and t.text == b")":
                        return out
                    depth -= 1
                if depth == 0 and t.text in stops:
                    return out
                out.append(t)
                self.next()

        init_toks = grab_until((b";",))
        if self.at(";"):
            self.next()
        cond_toks = grab_until((b";",))
        if self.at(";"):
            self.next()
        incr_toks = grab_until(())
        self.expect(")")

        guard_range = (self._mkrange(cond_toks[0].start, cond_toks[-1].end)
                       if cond_toks else None)
        header_end = (incr_toks[-1].end if incr_toks else
                      (cond_toks[-1].end if cond_toks else kw.end)) + 1
        header_range = self._mkrange(kw.start, header_end)

        body_node, body_range, braced = self._arm_body("loop-body")
        self.pop_scope(body_node.range.end_byte)
        stmt_range = self._mkrange(kw.start, body_node.range.end_byte)

        st = Stmt(kind="for", range=stmt_range, file_id=self.fi.file_id,
                  header_range=header_range, init_tokens=init_toks,
                  incr_tokens=incr_toks)
        st.children = [body_node]
        body_node.parent = st

        # declarations in the init clause live in the loop's scope
        if init_toks and init_toks[0].kind == "id" and (
                init_toks[0].s in TYPE_START
                or init_toks[0].s in self.index.typedefs
                or init_toks[0].s in COMMON_TYPEDEFS):
            for (nm, r) in self.extract_declared_names(init_toks + [Token("punct", b";", init_toks[-1].end, init_toks[-1].end, init_toks[-1].line)]):
                self.declare(nm, self._mkrange(init_toks[0].start, init_toks[-1].end), st)

        # one record before the whole for (covers the init clause)
        self.add_point("stmt", kw.start, self._mkrange(kw.start, header_end), "stmt",
                       node=st)
        if incr_toks:
            incr_range = self._mkrange(incr_toks[0].start, incr_toks[-1].end)
            self.add_point("stmt", incr_range.start_byte, incr_range,
                           "for_incr_wrap", node=st)
        if cond_toks:
            cond_id = self._next_cond_id(guard_range)
            arms = [
                Arm(0, "loop-body", body_range),
                Arm(1, "loop-exit", self._empty_range(stmt_range.end_byte),
                    synthetic=True),
            ]
            cond = Conditional(
                cond_id=cond_id, kind="for", file_id=self.fi.file_id,
                line=cond_toks[0].line, guard_range=guard_range, arms=arms,
                range=stmt_range,
                func_name=self.cur_func.name if self.cur_func else None,
            )
            self.index.conditionals[cond_id] = cond
            st.cond = cond
            st.guard_tokens = cond_toks
            st.guard_range = guard_range
            body_node.arm_of = (cond_id, 0)
            self.add_point("guard", guard_range.start_byte, guard_range,
                           "guard_wrap", cond_id=cond_id, node=st)
            self._add_arm_marker(cond, 0, body_node, braced)
        return st

    def parse_switch(self) -> Stmt:
        kw = self.next()
        guard_toks, guard_range = self._parse_guard()
        if guard_range is None:
            guard_range = self._empty_range(kw.end)
        header_range = self._mkrange(kw.start, guard_range.end_byte + 1)
        cond_id = self._next_cond_id(guard_range)

        cond = Conditional(
            cond_id=cond_id, kind="switch", file_id=self.fi.file_id,
            line=guard_toks[0].line if guard_toks else kw.line,
            guard_range=guard_range, arms=[], range=header_range,  # patched below
            func_name=self.cur_func.name if self.cur_func else None,
        )
        self.index.conditionals[cond_id] = cond

        st = Stmt(kind="switch", range=header_range, file_id=self.fi.file_id,
                  guard_tokens=guard_toks, guard_range=guard_range,
                  header_range=header_range, cond=cond)
        self.add_point("guard", guard_range.start_byte, guard_range,
                       "guard_wrap", cond_id=cond_id, node=st)

        if not self.at("{"):
            # unbraced switch body: parse one statement, no arm bookkeeping
            self.warn(f"unbraced switch body at line {kw.line}")
            body = self.parse_statement()
            if body is not None:
                st.children = [body]
                body.parent = st
            end = body.range.end_byte if body else header_range.end_byte
            st.range = self._mkrange(kw.start, end)
            cond.range = st.range
            return st

        open_brace = self.next()
        scope = self.push_scope(open_brace.start)
        arm_records: list[dict] = []   # {kind, guard_value, label_range, start}
        stmts: list[Stmt] = []
        end = open_brace.end
        has_default = False
        while True:
            t = self.peek()
            if t is None:
                self.warn("unterminated switch body")
                end = len(self.fi.content)
                break
            if t.text == b"}":
                self.next()
                end = t.end
                break
            if t.text in (b"case", b"default"):
                lab_start = t.start
                self.next()
                value_toks: list[Token] = []
                while not self.at(":") and self.peek() is not None:
                    value_toks.append(self.next())
                colon = self.expect(":")
                lab_end = colon.end if colon else (
                    value_toks[-1].end if value_toks else t.end)
                kind = "case" if t.text == b"case" else "default"
                if kind == "default":
                    has_default = True
                arm_records.append({
                    "kind": kind,
                    "guard_value": b" ".join(v.text for v in value_toks).decode(
                        "utf-8", errors="replace") if value_toks else None,
                    "label_range": self._mkrange(lab_start, lab_end),
                    "start": lab_end,
                })
                continue
            sub = self.parse_statement()
            if sub is not None:
                stmts.append(sub)
                sub.parent = st
        self.pop_scope(end)

        interior_end = max(open_brace.end, end - 1)
        st.children = stmts
        st.range = self._mkrange(kw.start, end)
        st.body_interior = self._mkrange(open_brace.end, interior_end)
        cond.range = st.range

        arms: list[Arm] = []
        for i, rec in enumerate(arm_records):
            body_end = (arm_records[i + 1]["label_range"].start_byte
                        if i + 1 < len(arm_records) else interior_end)
            body_range = self._mkrange(rec["start"], max(rec["start"], body_end))
            arms.append(Arm(i, rec["kind"], body_range,
                            guard_value=rec["guard_value"]))
            self.add_point("arm", rec["start"], body_range, "arm_after_label",
                           cond_id=cond_id, arm_id=i, node=st)
        if not has_default:
            fall = Arm(len(arms), "fall-past", self._empty_range(interior_end),
                       synthetic=True)
            arms.append(fall)
            self.add_point("arm", interior_end, fall.body_range,
                           "arm_synth_default", cond_id=cond_id,
                           arm_id=fall.arm_id, node=st)
        cond.arms = arms
        # attach each parsed stmt to the arm whose body contains it
        for sub in stmts:
            for arm in arms:
                if not arm.body_range.empty and arm.body_range.contains(sub.range):
                    sub.arm_of = (cond_id, arm.arm_id)
                    break
        return st


_STYLE_RANK = {"guard": 0, "func": 1, "arm": 2, "stmt": 3}


def build_ast_index(paths: Iterable[str | Path],
                    displays: Optional[list[str]] = None) -> AstIndex:
    """Parse the given C files into an AstIndex.

    Files are indexed in the order given; file_id is the position in that
    list. Only listed files are indexed — #include is never followed.
    """
    path_list = [str(p) for p in paths]
    if displays is None:
        basenames = [os.path.basename(p) for p in path_list]
        if len(set(basenames)) == len(basenames):
            displays = basenames
        else:
            displays = [str(Path(p).as_posix()) for p in path_list]
    files: list[FileInfo] = []
    for fid, (p, disp) in enumerate(zip(path_list, displays)):
        content = Path(p).read_bytes()
        offsets = [0]
        idx = content.find(b"\n")
        while idx != -1:
            offsets.append(idx + 1)
            idx = content.find(b"\n", idx + 1)
        files.append(FileInfo(
            file_id=fid, path=p, display=disp, content=content,
            sha256=hashlib.sha256(content).hexdigest(),
            line_offsets=offsets,
        ))
    index = AstIndex(files=files)
    all_points: list[TracePoint] = []
    for fi in files:
        parser = _Parser(fi, index)
        parser.parse_translation_unit()
        all_points.extend(parser.points)

    # ordinal assignment: per (file, line), ordered by anchor byte then kind
    by_line: dict[tuple[int, int], list[TracePoint]] = {}
    for tp in all_points:
        by_line.setdefault((tp.file_id, tp.line), []).append(tp)
    for key, pts in by_line.items():
        pts.sort(key=lambda tp: (tp.anchor, _STYLE_RANK[tp.kind]))
        for i, tp in enumerate(pts):
            tp.ordinal = i
    index.statements = by_line
    index.trace_points = sorted(
        all_points, key=lambda tp: (tp.file_id, tp.anchor, _STYLE_RANK[tp.kind]))
    return index


def conditional_at(index: AstIndex, file: str, line: int) -> Optional[Conditional]:
    """Find the conditional whose guard starts on `line` of `file`."""
    fi = index.file_by_name(file)
    if fi is None:
        return None
    hits = [c for c in index.conditionals.values()
            if c.file_id == fi.file_id and c.line == line]
    if not hits:
        return None
    hits.sort(key=lambda c: c.guard_range.start_byte)
    return hits[0]


def resolve_declaration(index: AstIndex, name: str,
                        at: tuple[int, int]) -> Optional[FileRange]:
    """Resolve `name` visible at (file_id, byte) to its declaration range.

    Innermost enclosing scope wins; falls back to the file scope of other
    files (in file_id order) for cross-file globals.
    """
    file_id, byte = at
    best: Optional[FileRange] = None
    best_start = -1
    for sc in index.scopes:
        if sc.file_id != file_id or not (sc.start <= byte <= sc.end):
            continue
        if name in sc.names and sc.start >= best_start:
            best = sc.names[name]
            best_start = sc.start
    if best is not None:
        return best
    # file scopes of the other files
    for sc in index.scopes:
        if sc.file_id == file_id or sc.start != 0:
            continue
        if name in sc.names:
            return sc.names[name]
    return None


def declaration_stmt(index: AstIndex, name: str,
                     at: tuple[int, int]) -> Optional[Stmt]:
    """Like resolve_declaration but returns the declaring statement node."""
    file_id, byte = at
    best: Optional[Stmt] = None
    best_start = -1
    for sc in index.scopes:
        if sc.file_id != file_id or not (sc.start <= byte <= sc.end):
            continue
        if name in sc.decl_stmts and sc.start >= best_start:
            best = sc.decl_stmts[name]
            best_start = sc.start
    if best is not None:
        return best
    for sc in index.scopes:
        if sc.file_id == file_id or sc.start != 0:
            continue
        if name in sc.decl_stmts:
            return sc.decl_stmts[name]
    return None


def reparse_ok(text: str | bytes) -> bool:
    """True iff `text` parses under the grammar without warnings."""
    data = text.encode() if isinstance(text, str) else text
    import tempfile

    with tempfile.NamedTemporaryFile(suffix=".c", delete=False) as fh:
        fh.write(data)
        tmp = fh.name
    try:
        idx = build_ast_index([tmp])
        return not idx.warnings
    finally:
        os.unlink(tmp)


def dump_index(index: AstIndex) -> str:
    """JSON rendering of the index for debugging (--dump-index)."""
    payload = {
        "files": [
            {"file_id": fi.file_id, "path": fi.path, "display": fi.display,
             "sha256": fi.sha256}
            for fi in index.files
        ],
        "functions": [
            {"name": fn.name, "file": index.files[fn.file_id].display,
             "line": fn.line,
             "params": [nm for (nm, _r) in fn.params]}
            for fn in index.functions.values()
        ],
        "conditionals": [
            {
                "cond_id": c.cond_id, "kind": c.kind,
                "file": index.files[c.file_id].display, "line": c.line,
                "guard": index.text(c.guard_range),
                "arms": [
                    {"arm_id": a.arm_id, "kind": a.kind,
                     "synthetic": a.synthetic,
                     "guard_value": a.guard_value}
                    for a in c.arms
                ],
            }
            for c in sorted(index.conditionals.values(),
                            key=lambda c: (c.file_id, c.guard_range.start_byte))
        ],
        "statement_lines": sorted(
            f"{index.files[f].display}:{l}" for (f, l) in index.statements
        ),
        "warnings": index.warnings,
    }
    return json.dumps(payload, indent=2)
