"""Arm-level coverage accounting and roadblock selection.

A trace is interpreted by walking its records with a reconstructed call
depth (function-entry markers push frames; a frame pops when control
provably left it). Each guard record resolves to the conditional's taken
arm by looking at the first later record at the same or shallower depth:
an arm-entry marker of the same conditional names the arm outright; for
loops, anything else means the guard went false (loop-exit).

Two deliberate edges, chosen so interpretation matches straight record
counting on cleanly exiting runs:

  * a do-while's loop-body arm means "the guard re-entered the body", so
    a single-pass do-while covers only loop-exit;
  * a loop guard as the very last record counts as loop-exit only when
    the run exited normally — on a crash or timeout nothing is credited.

The interest map tracks reached-but-not-fully-covered conditionals.
Retrieval picks uniformly among the highest-interest entries, then
decrements the pick, which round-robins equal-interest roadblocks;
solved roadblocks earn a reward that pushes them back up the queue.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from .ast_index import AstIndex
from .tracer import ExecutionTrace, TraceRecord

LOOP_KINDS = {"while", "for", "do-while"}
LOOP_BODY_ARM = 0
LOOP_EXIT_ARM = 1
REWARD_DELTA = 2
SELECTION_DECREMENT = 1


@dataclass
class Witness:
    """Best input known to reach a conditional (shortest wins, then newest)."""

    path: str
    size: int
    order: int

    def better_than(self, other: Optional["Witness"]) -> bool:
        if other is None:
            return True
        if self.size != other.size:
            return self.size < other.size
        return self.order > other.order


@dataclass
class Roadblock:
    cond_id: str
    arm_id: int
    witness_path: str
    interest: int
    arm_kind: str
    synthetic: bool


@dataclass
class CoverageState:
    covered: dict[str, set[int]] = field(default_factory=dict)
    reached: set[str] = field(default_factory=set)
    interest: dict[str, int] = field(default_factory=dict)
    witnesses: dict[str, Witness] = field(default_factory=dict)
    analyzed: dict[str, tuple[int, int]] = field(default_factory=dict)
    order_counter: int = 0


def record_depths(index: AstIndex, records: list[TraceRecord]) -> list[int]:
    """Call depth of each record, reconstructed from entry markers.

    A record that cannot belong to any live frame pops frames until one
    matches: leaving a function without a return record (void fall-off)
    and returns from direct recursion (frames marked by their return
    record) both resolve that way.
    """
    frames: list[list] = []  # [func_name, returning]
    depths: list[int] = []
    for rec in records:
        tp = index.resolve_record(*rec)
        if tp is None:
            depths.append(max(0, len(frames) - 1))
            continue
        if tp.kind == "func":
            frames.append([tp.func_name, False])
            depths.append(len(frames) - 1)
            continue
        fname = ""
        if tp.node is not None and tp.node.func is not None:
            fname = tp.node.func.name
        while frames:
            top_name, top_returning = frames[-1]
            if top_name != fname or top_returning:
                frames.pop()
                continue
            break
        if not frames or frames[-1][0] != fname:
            frames.append([fname, False])
        depths.append(len(frames) - 1)
        if tp.node is not None and tp.node.kind == "return":
            frames[-1][1] = True
    return depths


def _next_at_or_below(depths: list[int]) -> list[Optional[int]]:
    """For each i, the first j > i with depths[j] <= depths[i]."""
    n = len(depths)
    result: list[Optional[int]] = [None] * n
    stack: list[int] = []
    for i in range(n - 1, -1, -1):
        while stack and depths[stack[-1]] > depths[i]:
            stack.pop()
        result[i] = stack[-1] if stack else None
        stack.append(i)
    return result


def interpret_trace_arms(
    index: AstIndex, trace: ExecutionTrace
) -> tuple[set[str], set[tuple[str, int]]]:
    """(reached conditional ids, covered (cond_id, arm_id) pairs)."""
    records = trace.records
    depths = record_depths(index, records)
    nxt = _next_at_or_below(depths)
    reached: set[str] = set()
    covered: set[tuple[str, int]] = set()
    for i, rec in enumerate(records):
        tp = index.resolve_record(*rec)
        if tp is None or tp.kind != "guard" or tp.cond_id is None:
            continue
        cond = index.conditionals[tp.cond_id]
        reached.add(cond.cond_id)
        j = nxt[i]
        if j is None:
            if cond.kind in LOOP_KINDS and trace.exit_status == "normal":
                covered.add((cond.cond_id, LOOP_EXIT_ARM))
            continue
        tj = index.resolve_record(*records[j])
        if tj is not None and tj.kind == "arm" and tj.cond_id == cond.cond_id:
            covered.add((cond.cond_id, tj.arm_id))
            continue
        if cond.kind in LOOP_KINDS:
            covered.add((cond.cond_id, LOOP_EXIT_ARM))
            continue
        # if/switch with a non-marker next record at the same depth: only
        # reachable through unusual control flow; fall back to containment.
        if tj is not None and depths[j] == depths[i]:
            for arm in cond.arms:
                if not arm.body_range.empty and arm.body_range.contains(tj.range):
                    covered.add((cond.cond_id, arm.arm_id))
                    break
    return reached, covered


def fully_covered(index: AstIndex, cond_id: str, arms: set[int]) -> bool:
    cond = index.conditionals[cond_id]
    return all(a.arm_id in arms for a in cond.arms)


def apply_trace(index: AstIndex, state: CoverageState, trace: ExecutionTrace,
                seed_path: str, seed_size: int) -> set[tuple[str, int]]:
    """Fold one trace into the state; returns newly covered pairs."""
    reached, covered = interpret_trace_arms(index, trace)
    new_pairs: set[tuple[str, int]] = set()
    state.order_counter += 1
    order = state.order_counter
    for cond_id in reached:
        state.reached.add(cond_id)
        w = Witness(path=seed_path, size=seed_size, order=order)
        if w.better_than(state.witnesses.get(cond_id)):
            state.witnesses[cond_id] = w
    for (cond_id, arm_id) in covered:
        got = state.covered.setdefault(cond_id, set())
        if arm_id not in got:
            got.add(arm_id)
            new_pairs.add((cond_id, arm_id))
    # interest map maintenance: partial conditionals enter at zero interest
    # (keeping any earned value), fully covered ones leave for good
    for cond_id in reached:
        if fully_covered(index, cond_id, state.covered.get(cond_id, set())):
            state.interest.pop(cond_id, None)
        else:
            state.interest.setdefault(cond_id, 0)
    for (cond_id, _arm) in covered:
        if fully_covered(index, cond_id, state.covered.get(cond_id, set())):
            state.interest.pop(cond_id, None)
    return new_pairs


def analyze_corpus(
    index: AstIndex,
    state: CoverageState,
    seeds: Iterable[str | Path],
    trace_fn: Callable[[bytes], ExecutionTrace],
) -> set[tuple[str, int]]:
    """Trace every not-yet-analyzed seed and fold it into the state.

    Seeds are keyed by (path, size, mtime); a file that changes gets
    re-analyzed, and a file that vanishes mid-pass (a writer still
    renaming it into place) is skipped and picked up next round.
    """
    new_pairs: set[tuple[str, int]] = set()
    for seed in sorted(str(s) for s in seeds):
        try:
            stat = os.stat(seed)
            key = (stat.st_size, stat.st_mtime_ns)
            if state.analyzed.get(seed) == key:
                continue
            data = Path(seed).read_bytes()
        except OSError:
            continue
        trace = trace_fn(data)
        new_pairs |= apply_trace(index, state, trace, seed, len(data))
        state.analyzed[seed] = key
    return new_pairs


def retrieve_roadblock(index: AstIndex, state: CoverageState,
                       rng: random.Random) -> Optional[Roadblock]:
    """Pick an uncovered arm to attack, uniformly among the most
    interesting conditionals, and decrement the pick's interest."""
    candidates = {
        cond_id: value for cond_id, value in state.interest.items()
        if cond_id in state.witnesses
    }
    if not candidates:
        return None
    top = max(candidates.values())
    pool = sorted(c for c, v in candidates.items() if v == top)
    cond_id = rng.choice(pool)
    state.interest[cond_id] = state.interest[cond_id] - SELECTION_DECREMENT
    cond = index.conditionals[cond_id]
    covered = state.covered.get(cond_id, set())
    open_arms = [a for a in cond.arms if a.arm_id not in covered]
    if not open_arms:
        state.interest.pop(cond_id, None)
        return None
    arm = rng.choice(open_arms)
    return Roadblock(
        cond_id=cond_id,
        arm_id=arm.arm_id,
        witness_path=state.witnesses[cond_id].path,
        interest=top,
        arm_kind=arm.kind,
        synthetic=arm.synthetic,
    )


def reward(state: CoverageState, cond_id: str,
           delta: int = REWARD_DELTA) -> None:
    """Bump a solved roadblock back up the retrieval queue."""
    if cond_id in state.interest:
        state.interest[cond_id] = state.interest[cond_id] + delta


def coverage_counts(index: AstIndex, state: CoverageState) -> dict:
    total_arms = sum(len(c.arms) for c in index.conditionals.values())
    covered_arms = sum(len(v) for v in state.covered.values())
    partial = sum(
        1 for cond_id in state.reached
        if not fully_covered(index, cond_id, state.covered.get(cond_id, set()))
    )
    return {
        "conditionals": len(index.conditionals),
        "reached": len(state.reached),
        "arms_total": total_arms,
        "arms_covered": covered_arms,
        "partially_covered": partial,
    }


def save_state(state: CoverageState, coverage_path: str | Path,
               interest_path: str | Path) -> None:
    cov_payload = {
        "covered": {k: sorted(v) for k, v in sorted(state.covered.items())},
        "reached": sorted(state.reached),
        "witnesses": {
            k: {"path": w.path, "size": w.size, "order": w.order}
            for k, w in sorted(state.witnesses.items())
        },
        "order_counter": state.order_counter,
    }
    for path, payload in ((coverage_path, cov_payload),
                          (interest_path, dict(sorted(state.interest.items())))):
        tmp = str(path) + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
        os.replace(tmp, path)


def load_state(coverage_path: str | Path,
               interest_path: str | Path) -> CoverageState:
    state = CoverageState()
    try:
        with open(coverage_path) as fh:
            cov = json.load(fh)
        state.covered = {k: set(v) for k, v in cov.get("covered", {}).items()}
        state.reached = set(cov.get("reached", []))
        state.witnesses = {
            k: Witness(**w) for k, w in cov.get("witnesses", {}).items()
        }
        state.order_counter = cov.get("order_counter", 0)
    except (OSError, ValueError):
        pass
    try:
        with open(interest_path) as fh:
            state.interest = {k: int(v) for k, v in json.load(fh).items()}
    except (OSError, ValueError):
        pass
    return state
