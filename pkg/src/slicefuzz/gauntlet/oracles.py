"""Independent reference implementations used to cross-check the engine.

Two oracles live here, each answering a question the engine already
answers — by a deliberately different route:

* ``reference_slice`` recomputes the statements a path constraint depends
  on with a flow-sensitive backward walk: per-call-frame "needed variable"
  sets that writes *kill*.  The production slicer tracks one monotonically
  growing variable set across all frames and never kills, so everything
  this oracle retains the slicer must retain too; a slicer that drops an
  oracle statement has lost a real data dependence.  Both sides share the
  token-level read/write extraction (`get_vars`/`stmt_effects`), which is
  unit-tested on its own; the cross-check targets the walk and the call
  boundary bindings, where the subtle bugs live.

* ``count_arm_coverage`` recomputes (reached, covered) for a trace by
  counting marker records instead of interpreting control flow.  Every
  if/switch arm — including synthetic else and fall-past arms — executes
  an explicit marker, so presence in the trace is coverage.  Loop exits
  have no marker; for while/for loops a complete trace satisfies
  ``#exits = #guard evaluations - #body entries``, so the exit arm is
  covered exactly when guards outnumber body markers.  That arithmetic
  has no do-while analogue (the body runs before the first guard) and
  counting treats a switch fall-through as covering the arm it falls
  into, which dispatch-based interpretation does not; the oracle refuses
  do-while targets and the case corpus avoids fall-through.

``expected_corpus_state`` stacks the counting oracle into an independent
replay of the corpus bookkeeping (covered arms, witness choice, interest
map), and ``validate_corpus`` diffs that against a live state object.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from ..ast_index import AstIndex
from ..coverage import LOOP_EXIT_ARM, CoverageState
from ..slicer import get_vars, record_tokens, split_call_args, stmt_effects
from ..tracer import ExecutionTrace

__all__ = [
    "reference_slice",
    "count_arm_coverage",
    "expected_corpus_state",
    "validate_corpus",
]


# ---------------------------------------------------------------------------
# dynamic dependence closure


@dataclass
class _Frame:
    func: str
    entry_idx: int
    parent: Optional["_Frame"]
    returning: bool = False
    needs: set[str] = field(default_factory=set)


def _frame_walk(index: AstIndex, records) -> list[Optional[_Frame]]:
    """Frame of each record, rebuilt from entry markers and return records."""
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


def _storage_class(index: AstIndex, name: str, at: tuple[int, int]) -> str:
    """'local', 'global', or 'unknown' for `name` as seen from `at`.

    Innermost enclosing scope that declares the name wins; a hit in a
    file scope (byte 0 of any file) is a global.  Names nothing declares
    (libc, implicit) are 'unknown' and exempt from kills.
    """
    file_id, byte = at
    best_start = -1
    best_global = False
    found = False
    for sc in index.scopes:
        if sc.file_id != file_id or not (sc.start <= byte <= sc.end):
            continue
        if name in sc.names and sc.start >= best_start:
            best_start = sc.start
            best_global = sc.start == 0
            found = True
    if found:
        return "global" if best_global else "local"
    for sc in index.scopes:
        if sc.file_id != file_id or sc.start != 0:
            continue
        if name in sc.names:
            return "global"
    return "unknown"


def reference_slice(index: AstIndex, trace: ExecutionTrace, cond_id: str,
                    arm_id: int) -> set[int]:
    """Record indices a correct slice of `cond_id`'s guard must retain.

    Same contract as the production slicer: the trace must end at the
    target guard's record.  Returns the retained indices (the anchor
    guard included); the engine's slice is adequate iff this is a subset
    of its retained records.
    """
    cond = index.conditionals.get(cond_id)
    if cond is None:
        raise ValueError(f"unknown conditional: {cond_id}")
    records = trace.records
    if not records:
        raise ValueError("empty trace")
    last_tp = index.resolve_record(*records[-1])
    if last_tp is None or last_tp.kind != "guard" \
            or last_tp.cond_id != cond_id:
        raise ValueError("trace does not end at the target guard")

    rec2frame = _frame_walk(index, records)
    last_of: dict[int, int] = {}
    for j, fr in enumerate(rec2frame):
        if fr is not None:
            last_of[id(fr)] = j

    needs_global: set[str] = set()
    retained: set[int] = {len(records) - 1}

    def add_need(frame: Optional[_Frame], name: str,
                 at: tuple[int, int]) -> None:
        if _storage_class(index, name, at) == "global":
            needs_global.add(name)
        elif frame is not None:
            frame.needs.add(name)

    def drop_need(frame: Optional[_Frame], name: str,
                  at: tuple[int, int]) -> None:
        # unknown storage is never killed: without a declaration there is
        # no telling which frames alias it
        cls = _storage_class(index, name, at)
        if cls == "global":
            needs_global.discard(name)
        elif cls == "local" and frame is not None:
            frame.needs.discard(name)

    def needed(frame: Optional[_Frame], names: Iterable[str]) -> set[str]:
        local = frame.needs if frame is not None else set()
        return {n for n in names if n in local or n in needs_global}

    guard_at = (cond.file_id, cond.guard_range.start_byte)
    target_frame = rec2frame[-1]
    for name in get_vars(index, index.text(cond.guard_range)):
        add_need(target_frame, name, guard_at)

    def callsite_of(frame: _Frame) -> Optional[int]:
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

    def call_value_needed(cs: Optional[int], parent: Optional[_Frame]) -> bool:
        """Does the value produced at call site record `cs` feed a need?"""
        if cs is None:
            return False
        if cs in retained:
            return True
        cs_tp = index.resolve_record(*records[cs])
        toks = record_tokens(cs_tp) if cs_tp is not None else None
        if not toks:
            return False
        if cs_tp.kind == "guard":
            # only the anchor guard seeds the closure; other guards are
            # control context and contribute nothing here
            return cs == len(records) - 1
        if cs_tp.node is not None and cs_tp.node.kind == "return":
            if parent is None:
                return False
            return call_value_needed(callsite_of(parent), parent.parent)
        _r, writes = stmt_effects(index, cs_tp.node, toks)
        return bool(needed(parent, writes))

    def bind_return(i: int, frame: _Frame) -> None:
        ret_tp = index.resolve_record(*records[i])
        if ret_tp is None or ret_tp.node is None \
                or ret_tp.node.kind != "return":
            return
        if not call_value_needed(callsite_of(frame), frame.parent):
            return
        retained.add(i)
        at = (ret_tp.node.file_id, ret_tp.node.range.start_byte)
        for name in get_vars(index, ret_tp.node.tokens):
            add_need(frame, name, at)

    def bind_params(frame: _Frame) -> None:
        fn = index.functions.get(frame.func)
        if fn is None:
            return
        bound = [p for (p, _r) in fn.params if p in frame.needs]
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
        parent = frame.parent
        at = (cs_tp.node.file_id, cs_tp.node.range.start_byte) \
            if cs_tp.node is not None else (0, 0)
        names = [p for (p, _r) in fn.params]
        for p in bound:
            k = names.index(p)
            if k < len(args):
                for name in get_vars(index, args[k]):
                    add_need(parent, name, at)
        retained.add(cs)

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
        if tp.kind in ("arm", "guard"):
            continue
        toks = record_tokens(tp)
        if toks is None:
            continue
        node = tp.node
        reads, writes = stmt_effects(index, node, toks)
        hit = needed(frame, writes)
        if not hit:
            continue
        retained.add(i)
        at = (node.file_id, node.range.start_byte)
        for name in writes:
            drop_need(frame, name, at)
        for name in reads:
            add_need(frame, name, at)
    return retained


# ---------------------------------------------------------------------------
# marker-counting coverage


def count_arm_coverage(index: AstIndex, trace: ExecutionTrace
                       ) -> tuple[set[str], set[tuple[str, int]]]:
    """(reached, covered) recomputed by counting marker records.

    Defined for complete, normally exited traces only; do-while loops
    fall outside the counting arithmetic (see the module docstring) and
    raise.
    """
    if trace.exit_status != "normal":
        raise ValueError(
            f"counting oracle needs a normal trace, got {trace.exit_status}")
    for cond in index.conditionals.values():
        if cond.kind == "do-while":
            raise ValueError("counting oracle does not support do-while")
    reached: set[str] = set()
    covered: set[tuple[str, int]] = set()
    guard_evals: Counter[str] = Counter()
    body_entries: Counter[str] = Counter()
    for rec in trace.records:
        tp = index.resolve_record(*rec)
        if tp is None or tp.cond_id is None:
            continue
        if tp.kind == "guard":
            reached.add(tp.cond_id)
            guard_evals[tp.cond_id] += 1
        elif tp.kind == "arm":
            covered.add((tp.cond_id, tp.arm_id))
            if tp.arm_id == 0 \
                    and index.conditionals[tp.cond_id].kind in ("while", "for"):
                body_entries[tp.cond_id] += 1
    for cond_id, evals in guard_evals.items():
        if index.conditionals[cond_id].kind in ("while", "for") \
                and evals > body_entries[cond_id]:
            covered.add((cond_id, LOOP_EXIT_ARM))
    return reached, covered


# ---------------------------------------------------------------------------
# corpus bookkeeping replay


def expected_corpus_state(index: AstIndex,
                          folds: Sequence[tuple[str, int, ExecutionTrace]]
                          ) -> dict:
    """Replay corpus folding over `folds` = ordered (path, size, trace).

    Returns {"covered", "reached", "interest", "witnesses"} as a freshly
    analyzed state would hold them: every reached-but-partial conditional
    sits at interest zero, fully covered ones are absent, and each
    witness is the shortest input reaching the conditional (newest wins
    ties).  Callers must present folds in the same order the engine
    analyzed them.
    """
    covered: dict[str, set[int]] = {}
    reached: set[str] = set()
    witnesses: dict[str, tuple[int, str]] = {}  # size, path
    for (path, size, trace) in folds:
        got_reached, got_covered = count_arm_coverage(index, trace)
        reached |= got_reached
        for cond_id in got_reached:
            old = witnesses.get(cond_id)
            # smaller wins; a tie goes to the newer fold, and folds replay
            # in analysis order, so <= is exactly that rule
            if old is None or size <= old[0]:
                witnesses[cond_id] = (size, path)
        for (cond_id, arm_id) in got_covered:
            covered.setdefault(cond_id, set()).add(arm_id)
    interest: dict[str, int] = {}
    for cond_id in reached:
        arms = {a.arm_id for a in index.conditionals[cond_id].arms}
        if not arms <= covered.get(cond_id, set()):
            interest[cond_id] = 0
    return {
        "covered": covered,
        "reached": reached,
        "interest": interest,
        "witnesses": {c: (w[1], w[0]) for c, w in witnesses.items()},
    }


def validate_corpus(index: AstIndex, state: CoverageState,
                    folds: Sequence[tuple[str, int, ExecutionTrace]]
                    ) -> list[str]:
    """Diff a freshly analyzed state against the counting-oracle replay.

    Returns human-readable discrepancies; empty means the state matches
    exactly (covered arms, reached set, interest keys and values, witness
    paths and sizes).  Only meaningful for states that have not yet been
    through roadblock selection — selection decrements interest.
    """
    expect = expected_corpus_state(index, folds)
    problems: list[str] = []
    got_covered = {c: set(a) for c, a in state.covered.items() if a}
    if got_covered != expect["covered"]:
        only_state = {
            (c, a) for c, arms in got_covered.items() for a in arms
        } - {(c, a) for c, arms in expect["covered"].items() for a in arms}
        only_oracle = {
            (c, a) for c, arms in expect["covered"].items() for a in arms
        } - {(c, a) for c, arms in got_covered.items() for a in arms}
        if only_state:
            problems.append(f"state covers extra pairs: {sorted(only_state)}")
        if only_oracle:
            problems.append(f"state misses pairs: {sorted(only_oracle)}")
    if state.reached != expect["reached"]:
        problems.append(
            f"reached mismatch: state-only {sorted(state.reached - expect['reached'])}, "
            f"oracle-only {sorted(expect['reached'] - state.reached)}")
    if dict(state.interest) != expect["interest"]:
        problems.append(
            f"interest mismatch: state {dict(sorted(state.interest.items()))} "
            f"!= oracle {dict(sorted(expect['interest'].items()))}")
    got_witnesses = {c: (w.path, w.size) for c, w in state.witnesses.items()}
    if got_witnesses != expect["witnesses"]:
        for cond_id in sorted(set(got_witnesses) | set(expect["witnesses"])):
            a = got_witnesses.get(cond_id)
            b = expect["witnesses"].get(cond_id)
            if a != b:
                problems.append(
                    f"witness mismatch for {cond_id}: state {a} != oracle {b}")
    return problems
