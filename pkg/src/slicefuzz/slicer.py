"""Dynamic path-constraint slicing over execution traces.

Given a trace that ends at the evaluation of a target conditional, the
slicer walks the records backward and keeps exactly the statements that
feed the target guard: a statement is retained when it writes a tracked
variable, a conditional when its guard reads one, and every retained
statement's own reads join the tracked set. Call boundaries are followed
through the trace — a callee span is entered only when its return value
feeds a tracked variable (binding the return expression's variables), and
a function entry binds tracked parameters back to the caller's argument
expressions at the recorded call site.

Tracking is by name and monotone, which deliberately over-approximates:
the slice may keep more than a flow-sensitive dependence analysis would,
but never less.

Flattening renders the retained material back to compilable C: enclosing
control-flow headers and function signatures are kept verbatim, untouched
regions collapse to elision comments, declarations of tracked variables
and the #define lines of macros used in retained text are pulled in, and
the target conditional is replaced by (or bracketed with, for loops) an
assert stating the untaken arm's constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .ast_index import (
    COMMON_TYPEDEFS,
    KEYWORDS,
    AstIndex,
    Arm,
    Conditional,
    FunctionDef,
    Stmt,
    Token,
    declaration_stmt,
    reparse_ok,
    tokenize,
)
from .tracer import ExecutionTrace

MAX_SLICE_CHARS = 12_000

_ASSIGN_OPS = {b"=", b"+=", b"-=", b"*=", b"/=", b"%=", b"&=", b"|=", b"^=",
               b"<<=", b">>="}


class SliceError(RuntimeError):
    pass


@dataclass
class Slice:
    cond_id: str
    arm_id: int
    assertion: str
    vars: set[str]
    retained_nodes: list[Stmt]
    retained_records: list[int]
    text: str = ""
    parse_ok: bool = False
    widened: bool = False
    dropped_statements: int = 0


# ---------------------------------------------------------------------------
# variable extraction


def _tokens_of(index: AstIndex, source) -> list[Token]:
    if isinstance(source, list):
        return source
    data = source.encode() if isinstance(source, str) else bytes(source)
    toks, _comments, _preproc = tokenize(data)
    return toks


def get_vars(index: AstIndex, source) -> set[str]:
    """Variable names read by an expression or statement.

    Excludes keywords, called function names, struct/union field names,
    enumeration constants, and macro names — those are context, not data
    dependencies.
    """
    toks = _tokens_of(index, source)
    out: set[str] = set()
    for i, t in enumerate(toks):
        if t.kind != "id" or t.s in KEYWORDS:
            continue
        nxt = toks[i + 1] if i + 1 < len(toks) else None
        prev = toks[i - 1] if i > 0 else None
        if nxt is not None and nxt.text == b"(":
            continue  # callee position
        if prev is not None and prev.text in (b".", b"->"):
            continue  # field name
        name = t.s
        if name in index.enum_consts or name in index.macros \
                or name in index.macro_fns or name in index.typedefs \
                or name in COMMON_TYPEDEFS:
            continue
        out.add(name)
    return out


def _pointerish(index: AstIndex, name: str, at: tuple[int, int]) -> bool:
    """Does `name` resolve to a declaration with pointer or array shape?"""
    node = declaration_stmt(index, name, at)
    if node is None:
        return False
    text = index.text(node.range)
    # look only at the declarator region around the name
    return "*" in text or "[" in text


def stmt_effects(index: AstIndex, node: Stmt, tokens: list[Token]
                 ) -> tuple[set[str], set[str]]:
    """(reads, writes) for one executed statement's tokens."""
    reads: set[str] = set()
    writes: set[str] = set()
    at = (node.file_id, node.range.start_byte)

    if node.kind == "decl" and tokens is node.tokens:
        declared = {nm for (nm, _r) in node.declared}
        writes |= declared
        reads |= get_vars(index, tokens) - declared
        r2, w2 = _call_arg_effects(index, tokens, at)
        return reads | r2, writes | w2

    # split on top-level assignment operators
    segments: list[list[Token]] = []
    ops: list[bytes] = []
    depth = 0
    cur: list[Token] = []
    for t in tokens:
        if t.text in (b"(", b"[", b"{"):
            depth += 1
        elif t.text in (b")", b"]", b"}"):
            depth -= 1
        if depth == 0 and t.kind == "punct" and t.text in _ASSIGN_OPS:
            segments.append(cur)
            ops.append(t.text)
            cur = []
            continue
        cur.append(t)
    segments.append(cur)

    if ops:
        *lhs_segments, rhs = segments
        for seg, op in zip(lhs_segments, ops):
            ids = [t for t in seg if t.kind == "id" and t.s not in KEYWORDS
                   and t.s not in index.enum_consts]
            if not ids:
                continue
            base = ids[0].s
            writes.add(base)
            rest = get_vars(index, seg) - {base}
            reads |= rest
            plain = (len(seg) and seg[-1].kind == "id"
                     and seg[-1].s == base and len(ids) == 1
                     and all(t.kind != "punct" or t.text in (b"*", b"(", b")")
                             for t in seg))
            if op != b"=" or not plain or len(seg) > 1:
                reads.add(base)  # compound ops and a[i]/*p forms read the base
        reads |= get_vars(index, rhs)
    else:
        reads |= get_vars(index, tokens)

    # increment/decrement operators write their operand
    for i, t in enumerate(tokens):
        if t.text in (b"++", b"--"):
            for j in (i + 1, i - 1):
                if 0 <= j < len(tokens) and tokens[j].kind == "id" \
                        and tokens[j].s not in KEYWORDS:
                    writes.add(tokens[j].s)
                    reads.add(tokens[j].s)
                    break

    r2, w2 = _call_arg_effects(index, tokens, at)
    return reads | r2, writes | w2


def _call_arg_effects(index: AstIndex, tokens: list[Token],
                      at: tuple[int, int]) -> tuple[set[str], set[str]]:
    """&x and pointer/array-shaped identifiers in call arguments may be
    written by the callee; count them as both read and written."""
    reads: set[str] = set()
    writes: set[str] = set()
    i = 0
    n = len(tokens)
    while i < n:
        t = tokens[i]
        if (t.kind == "id" and t.s not in KEYWORDS and i + 1 < n
                and tokens[i + 1].text == b"("):
            depth = 0
            j = i + 1
            while j < n:
                if tokens[j].text == b"(":
                    depth += 1
                elif tokens[j].text == b")":
                    depth -= 1
                    if depth == 0:
                        break
                j += 1
            for k in range(i + 2, min(j, n)):
                tk = tokens[k]
                if tk.text == b"&" and k + 1 < n and tokens[k + 1].kind == "id":
                    nm = tokens[k + 1].s
                    if nm not in KEYWORDS:
                        writes.add(nm)
                        reads.add(nm)
                elif tk.kind == "id" and tk.s not in KEYWORDS \
                        and tk.s not in index.enum_consts:
                    prev = tokens[k - 1]
                    nxt = tokens[k + 1] if k + 1 < n else None
                    if prev.text in (b".", b"->"):
                        continue
                    if nxt is not None and nxt.text == b"(":
                        continue
                    if _pointerish(index, tk.s, at):
                        writes.add(tk.s)
                        reads.add(tk.s)
            i = j
        i += 1
    return reads, writes


# ---------------------------------------------------------------------------
# condition negation


def _single_identifier(text: str) -> bool:
    toks, _c, _p = tokenize(text.encode())
    return len(toks) == 1 and toks[0].kind == "id"


def negate_condition(index: AstIndex, cond: Conditional, arm: Arm) -> str:
    """The assert() that states `arm` is the taken direction of `cond`."""
    guard = index.text(cond.guard_range).strip()
    if cond.kind == "switch":
        scrutinee = guard if _single_identifier(guard) else f"({guard})"
        if arm.kind == "case":
            return f"assert({scrutinee} == {arm.guard_value});"
        literals = [a.guard_value for a in cond.arms if a.kind == "case"]
        clauses = " && ".join(f"{scrutinee} != {lit}" for lit in literals)
        return f"assert({clauses});"
    if arm.kind in ("then", "loop-body"):
        return f"assert({guard});"
    return f"assert(!(({guard})));"


# ---------------------------------------------------------------------------
# trace frames


@dataclass
class _Frame:
    func: str
    entry_idx: int
    parent: Optional["_Frame"]
    returning: bool = False


def _frame_walk(index: AstIndex, records) -> list[Optional[_Frame]]:
    """rec2frame: the frame each record executes in (entry records map to
    the frame they open). Mirrors the depth logic used by coverage."""
    rec2frame: list[Optional[_Frame]] = []
    top: Optional[_Frame] = None
    for i, rec in enumerate(records):
        tp = index.resolve_record(*rec)
        if tp is None:
            rec2frame.append(top)
            continue
        if tp.kind == "func":
            top = _Frame(func=tp.func_name or "", entry_idx=i, parent=top)
            rec2frame.append(top)
            continue
        fname = ""
        if tp.node is not None and tp.node.func is not None:
            fname = tp.node.func.name
        while top is not None and (top.func != fname or top.returning):
            top = top.parent
        if top is None or top.func != fname:
            top = _Frame(func=fname, entry_idx=i, parent=top)
        rec2frame.append(top)
        if tp.node is not None and tp.node.kind == "return":
            top.returning = True
    return rec2frame


def record_tokens(tp) -> Optional[list[Token]]:
    """The tokens a stmt/guard record evaluates, or None for pure events."""
    if tp.kind == "guard":
        return tp.node.guard_tokens if tp.node is not None else None
    if tp.kind != "stmt" or tp.node is None:
        return None
    if tp.style == "for_incr_wrap":
        return tp.node.incr_tokens
    if tp.node.kind == "for":
        return tp.node.init_tokens
    return tp.node.tokens


def split_call_args(tokens: list[Token], fname: str) -> Optional[list[list[Token]]]:
    """Argument token lists of the first call to fname in tokens."""
    for i, t in enumerate(tokens):
        if t.kind == "id" and t.s == fname and i + 1 < len(tokens) \
                and tokens[i + 1].text == b"(":
            depth = 0
            args: list[list[Token]] = []
            cur: list[Token] = []
            for t2 in tokens[i + 1:]:
                if t2.text == b"(":
                    depth += 1
                    if depth == 1:
                        continue
                elif t2.text == b")":
                    depth -= 1
                    if depth == 0:
                        if cur:
                            args.append(cur)
                        return args
                elif depth == 1 and t2.text == b",":
                    args.append(cur)
                    cur = []
                    continue
                cur.append(t2)
            return args if args else None
    return None


# ---------------------------------------------------------------------------
# the backward walk


def build_slice(index: AstIndex, trace: ExecutionTrace, cond_id: str,
                arm_id: int) -> Slice:
    """Slice the statements feeding `cond_id`'s guard out of `trace`.

    The trace must end at the target guard's record (capture it with
    stop_at so the first evaluation is the anchor).
    """
    cond = index.conditionals.get(cond_id)
    if cond is None:
        raise SliceError(f"unknown conditional: {cond_id}")
    arm = cond.arms[arm_id]
    records = trace.records
    if not records:
        raise SliceError("empty trace")
    last_tp = index.resolve_record(*records[-1])
    if last_tp is None or last_tp.kind != "guard" or last_tp.cond_id != cond_id:
        raise SliceError("trace does not end at the target guard")

    rec2frame = _frame_walk(index, records)
    last_of: dict[int, int] = {}
    for j, fr in enumerate(rec2frame):
        if fr is not None:
            last_of[id(fr)] = j

    assertion = negate_condition(index, cond, arm)
    tracked: set[str] = get_vars(index, index.text(cond.guard_range))
    target_node = last_tp.node
    retained_nodes: dict[int, Stmt] = {}
    retained_records: list[int] = [len(records) - 1]
    retained_record_set = {len(records) - 1}
    if target_node is not None:
        retained_nodes[id(target_node)] = target_node

    def retain(idx_rec: int, node: Optional[Stmt]) -> None:
        if idx_rec not in retained_record_set:
            retained_record_set.add(idx_rec)
            retained_records.append(idx_rec)
        if node is not None:
            retained_nodes.setdefault(id(node), node)

    def callsite_of(frame: _Frame) -> Optional[int]:
        """Record index of the call-site stmt/guard in the parent frame."""
        j = frame.entry_idx - 1
        while j >= 0:
            if rec2frame[j] is frame.parent:
                tp = index.resolve_record(*records[j])
                if tp is not None and tp.kind in ("stmt", "guard"):
                    return j
                if tp is not None and tp.kind == "func":
                    return None
            j -= 1
        return None

    def callsite_feeds_tracked(cs: Optional[int],
                               parent: Optional[_Frame]) -> bool:
        if cs is None:
            return False
        if cs in retained_record_set:
            return True
        cs_tp = index.resolve_record(*records[cs])
        toks = record_tokens(cs_tp) if cs_tp is not None else None
        if not toks:
            return False
        if cs_tp.kind == "guard":
            return bool(get_vars(index, toks) & tracked)
        if cs_tp.node is not None and cs_tp.node.kind == "return":
            # a call inside `return EXPR;` feeds exactly what that return feeds
            if parent is None:
                return False
            return callsite_feeds_tracked(callsite_of(parent), parent.parent)
        _r, w = stmt_effects(index, cs_tp.node, toks)
        return bool(w & tracked)

    def bind_return(i: int, frame: _Frame) -> None:
        """At a span's last record: if the call's value feeds tracked state,
        the callee's return expression joins the tracked set."""
        ret_tp = index.resolve_record(*records[i])
        if ret_tp is None or ret_tp.node is None \
                or ret_tp.node.kind != "return":
            return
        if not callsite_feeds_tracked(callsite_of(frame), frame.parent):
            return
        tracked.update(get_vars(index, ret_tp.node.tokens))
        retain(i, ret_tp.node)

    def bind_params(frame: _Frame) -> None:
        """At a frame's entry record: tracked parameters pull in the caller's
        argument expressions at the recorded call site."""
        fn = index.functions.get(frame.func)
        if fn is None:
            return
        bound = [p for (p, _r) in fn.params if p in tracked]
        if not bound:
            return
        cs = callsite_of(frame)
        if cs is None:
            return
        cs_tp = index.resolve_record(*records[cs])
        toks = record_tokens(cs_tp) if cs_tp is not None else None
        args = split_call_args(toks or [], fn.name)
        if args is None:
            return
        names = [p for (p, _r) in fn.params]
        for p in bound:
            k = names.index(p)
            if k < len(args):
                tracked.update(get_vars(index, args[k]))
        retain(cs, cs_tp.node if cs_tp is not None else None)

    for i in range(len(records) - 2, -1, -1):
        frame = rec2frame[i]
        tp = index.resolve_record(*records[i])
        if tp is None:
            continue
        if frame is not None and last_of.get(id(frame)) == i:
            bind_return(i, frame)
        if tp.kind == "func":
            if frame is not None:
                bind_params(frame)
            continue
        if tp.kind == "arm":
            continue
        toks = record_tokens(tp)
        if toks is None:
            continue
        node = tp.node
        if tp.kind == "guard":
            if get_vars(index, toks) & tracked:
                retain(i, node)
                tracked.update(get_vars(index, toks))
            continue
        reads, writes = stmt_effects(index, node, toks)
        if writes & tracked:
            retain(i, node)
            tracked.update(reads)

    sl = Slice(
        cond_id=cond_id,
        arm_id=arm_id,
        assertion=assertion,
        vars=tracked,
        retained_nodes=list(retained_nodes.values()),
        retained_records=sorted(retained_records),
    )
    flatten_slice(index, sl, target_node=target_node)
    return sl


# ---------------------------------------------------------------------------
# context + flattening


def _indent_of(index: AstIndex, node: Stmt) -> str:
    fi = index.files[node.file_id]
    line_start = fi.line_offsets[node.range.start_line - 1]
    return " " * (node.range.start_byte - line_start)


def _verbatim(index: AstIndex, node: Stmt, strip_comments: bool) -> str:
    text = index.text(node.range)
    if node.label_ranges:
        labels = " ".join(
            index.text(r) for r in node.label_ranges
            if index.text(r) != "else"
        )
        if labels:
            text = labels + " " + text
    if strip_comments:
        text = _drop_comments(text)
    return text


def _drop_comments(text: str) -> str:
    out = []
    i = 0
    n = len(text)
    while i < n:
        if text.startswith("//", i):
            j = text.find("\n", i)
            i = n if j == -1 else j
        elif text.startswith("/*", i):
            j = text.find("*/", i + 2)
            i = n if j == -1 else j + 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def _collect_context(index: AstIndex, sl: Slice, target_node: Optional[Stmt]
                     ) -> tuple[set[int], list[Stmt], list[str]]:
    """(kept header node ids, declaration stmts, #define lines)."""
    headers: set[int] = set()
    for node in sl.retained_nodes:
        for anc in node.ancestors():
            if anc.kind in ("if", "switch", "while", "do-while", "for",
                            "func", "block"):
                headers.add(id(anc))

    decl_nodes: dict[int, Stmt] = {}
    anchors: list[tuple[int, int]] = []
    if target_node is not None:
        anchors.append((target_node.file_id, target_node.range.start_byte))
    funcs_seen: set[int] = set()
    for node in sl.retained_nodes:
        if node.func is not None and id(node.func) not in funcs_seen:
            funcs_seen.add(id(node.func))
            anchors.append((node.file_id, node.range.start_byte))
    for v in sorted(sl.vars):
        for at in anchors:
            node = declaration_stmt(index, v, at)
            if node is not None and node.kind == "decl":
                decl_nodes.setdefault(id(node), node)

    used_macros: set[str] = set()
    for node in list(sl.retained_nodes) + list(decl_nodes.values()):
        for t in _tokens_of(index, index.raw(node.range)):
            if t.kind == "id" and (t.s in index.macros):
                used_macros.add(t.s)
    defines = [index.text(index.macros[m]).rstrip()
               for m in sorted(used_macros)]
    return headers, list(decl_nodes.values()), defines


def _render(index: AstIndex, sl: Slice, target_node: Optional[Stmt],
            kept: set[int], headers: set[int], decl_nodes: list[Stmt],
            strip_comments: bool) -> str:
    """Walk top-level items and render kept material."""

    def has_material(node: Stmt) -> bool:
        if id(node) in kept or id(node) in headers:
            return True
        return any(has_material(ch) for ch in node.children)

    def render_children(node: Stmt, depth: int) -> list[str]:
        lines: list[str] = []
        prev_rendered = None
        for ch in node.children:
            if not has_material(ch):
                prev_rendered = False
                continue
            if prev_rendered is False and lines:
                lines.append(_indent_of(index, ch) + "/* ... */")
            lines.extend(render_node(ch, depth))
            prev_rendered = True
        return lines

    def render_structure(node: Stmt, depth: int) -> list[str]:
        ind = _indent_of(index, node)
        header = index.text(node.header_range) if node.header_range else ""
        if strip_comments:
            header = _drop_comments(header)
        lines: list[str] = []
        if node.kind == "func":
            fn = node.func
            sig = index.text(fn.signature_range)
            if strip_comments:
                sig = _drop_comments(sig)
            lines.append(sig + " {")
            lines.extend(render_children(node.children[0], depth + 1))
            lines.append("}")
            return lines
        if node.kind == "block":
            return render_children(node, depth)
        if node.kind == "if":
            then_node = node.children[0] if node.children else None
            else_node = node.children[1] if len(node.children) > 1 else None
            lines.append(ind + header + " {")
            if then_node is not None and has_material(then_node):
                lines.extend(render_node(then_node, depth + 1)
                             if then_node.kind != "block"
                             else render_children(then_node, depth + 1))
            else:
                lines.append(ind + "    /* ... */")
            if else_node is not None and has_material(else_node):
                lines.append(ind + "} else {")
                lines.extend(render_node(else_node, depth + 1)
                             if else_node.kind != "block"
                             else render_children(else_node, depth + 1))
            lines.append(ind + "}")
            return lines
        if node.kind in ("while", "for"):
            body = node.children[0] if node.children else None
            lines.append(ind + header + " {")
            if body is not None and has_material(body):
                lines.extend(render_node(body, depth + 1)
                             if body.kind != "block"
                             else render_children(body, depth + 1))
            else:
                lines.append(ind + "    /* ... */")
            lines.append(ind + "}")
            return lines
        if node.kind == "do-while":
            body = node.children[0] if node.children else None
            guard = index.text(node.guard_range) if node.guard_range else ""
            lines.append(ind + "do {")
            if body is not None and has_material(body):
                lines.extend(render_node(body, depth + 1)
                             if body.kind != "block"
                             else render_children(body, depth + 1))
            else:
                lines.append(ind + "    /* ... */")
            lines.append(ind + "}" + f" while ({guard});")
            return lines
        if node.kind == "switch":
            lines.append(ind + header + " {")
            cond = node.cond
            if cond is not None:
                arm_children: dict[int, list[Stmt]] = {}
                for ch in node.children:
                    if ch.arm_of is not None:
                        arm_children.setdefault(ch.arm_of[1], []).append(ch)
                for a in cond.arms:
                    kids = arm_children.get(a.arm_id, [])
                    if not any(has_material(k) for k in kids):
                        continue
                    if a.kind == "case":
                        lines.append(ind + f"case {a.guard_value}:")
                    elif a.kind == "default":
                        lines.append(ind + "default:")
                    for k in kids:
                        if has_material(k):
                            lines.extend(render_node(k, depth + 1))
            else:
                lines.extend(render_children(node, depth + 1))
            lines.append(ind + "}")
            return lines
        return [ind + _verbatim(index, node, strip_comments)]

    def render_node(node: Stmt, depth: int) -> list[str]:
        ind = _indent_of(index, node)
        if target_node is not None and node is target_node:
            cond = index.conditionals[sl.cond_id]
            if cond.kind in ("while", "for", "do-while"):
                arm = cond.arms[sl.arm_id]
                inner = render_structure(node, depth)
                if arm.kind == "loop-body":
                    return [ind + sl.assertion] + inner
                return inner + [ind + sl.assertion]
            return [ind + sl.assertion]
        if node.kind in ("if", "switch", "while", "do-while", "for",
                         "func", "block"):
            return render_structure(node, depth)
        return [ind + _verbatim(index, node, strip_comments)]

    chunks: list[str] = []
    multi = sum(
        1 for fid in index.top_level
        if any(has_material(n) for n in index.top_level[fid])
    ) > 1
    global_decl_ids = set()
    for fid in sorted(index.top_level):
        items = [n for n in index.top_level[fid] if has_material(n)]
        extra_decls = [d for d in decl_nodes
                       if d.file_id == fid and d.func is None
                       and not any(d is n for n in items)]
        if not items and not extra_decls:
            continue
        if multi:
            chunks.append(f"// file: {index.files[fid].display}")
        for d in sorted(extra_decls, key=lambda n: n.range.start_byte):
            if id(d) not in global_decl_ids:
                global_decl_ids.add(id(d))
                chunks.append(_verbatim(index, d, strip_comments))
        for item in sorted(items, key=lambda n: n.range.start_byte):
            chunks.extend(render_node(item, 0))
    return "\n".join(chunks) + "\n"


def flatten_slice(index: AstIndex, sl: Slice,
                  target_node: Optional[Stmt]) -> None:
    """Render sl.text, enforcing the size budget and a re-parse check."""
    headers, decl_nodes, defines = _collect_context(index, sl, target_node)
    kept = {id(n) for n in sl.retained_nodes}
    for d in decl_nodes:
        kept.add(id(d))
        for anc in d.ancestors():
            headers.add(id(anc))

    def assemble(strip: bool, kept_now: set[int]) -> str:
        body = _render(index, sl, target_node, kept_now, headers,
                       decl_nodes, strip)
        head = "\n".join(defines) + "\n" if defines else ""
        return head + body

    text = assemble(False, kept)
    strip = False
    if len(text) > MAX_SLICE_CHARS:
        strip = True
        text = assemble(True, kept)
    # still too big: shed the retained statements farthest from the target
    shed_order = [n for n in sl.retained_nodes if n is not target_node]
    dropped = 0
    while len(text) > MAX_SLICE_CHARS and shed_order:
        shed_order = shed_order[len(shed_order) // 2:]
        dropped = len(sl.retained_nodes) - 1 - len(shed_order)
        kept_now = {id(n) for n in shed_order} | {id(d) for d in decl_nodes}
        if target_node is not None:
            kept_now.add(id(target_node))
        text = assemble(True, kept_now)
        if len(shed_order) == 1:
            break
    sl.dropped_statements = dropped
    sl.parse_ok = reparse_ok(text)
    if not sl.parse_ok:
        widened = _widen_to_functions(index, sl, target_node, defines)
        if widened is not None:
            sl.text = widened
            sl.widened = True
            sl.parse_ok = reparse_ok(widened)
            return
    sl.text = text


def _widen_to_functions(index: AstIndex, sl: Slice,
                        target_node: Optional[Stmt],
                        defines: list[str]) -> Optional[str]:
    """Fallback: verbatim enclosing functions, assertion spliced over the
    target conditional's bytes."""
    funcs: dict[int, FunctionDef] = {}
    for node in sl.retained_nodes:
        if node.func is not None:
            funcs.setdefault(id(node.func), node.func)
    if not funcs:
        return None
    chunks = list(defines)
    for fn in sorted(funcs.values(),
                     key=lambda f: (f.file_id, f.range.start_byte)):
        raw = index.raw(fn.range)
        if target_node is not None and target_node.func is fn:
            cond = index.conditionals[sl.cond_id]
            off = fn.range.start_byte
            s = cond.range.start_byte - off
            e = cond.range.end_byte - off
            if cond.kind in ("while", "for", "do-while"):
                arm = cond.arms[sl.arm_id]
                if arm.kind == "loop-body":
                    raw = raw[:s] + sl.assertion.encode() + b" " + raw[s:]
                else:
                    raw = raw[:e] + b" " + sl.assertion.encode() + raw[e:]
            else:
                raw = raw[:s] + sl.assertion.encode() + raw[e:]
        chunks.append(raw.decode("utf-8", errors="replace"))
    return "\n".join(chunks) + "\n"
