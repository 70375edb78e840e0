"""Coverage-guided greybox fuzzing over an instrumented binary.

The fuzzer keeps a file-backed seed queue, mutates one seed per step with
a small geometric stack of byte-level operators, executes the candidate
under tracing, and keeps it exactly when it covers a (conditional, arm)
pair no earlier seed has covered. Crashing inputs are archived separately
and contribute no coverage — a truncated trace is not trustworthy
evidence that an arm runs.

Solver-produced candidates arrive through a drop-box directory
(``<out>/llm/queue``); ``import_injections`` executes each new file and
promotes the keepers into the main queue. All corpus communication is
plain files written atomically, so an external process — or a second
thread — can watch or feed the same directories safely.
"""

from __future__ import annotations

import os
import random
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .ast_index import AstIndex
from .coverage import CoverageState, apply_trace, interpret_trace_arms
from .tracer import (
    DEFAULT_TIMEOUT_S,
    DEFAULT_TRACE_CAP,
    ExecutionTrace,
    run_traced,
)

MUTATORS = ("bit_flip", "byte_sub", "byte_insert", "byte_delete",
            "block_duplicate", "splice")
STACK_CAP = 8
STACK_P = 0.5
RECENT_WINDOW = 5
RECENT_PROB = 0.25

_ID_RE = re.compile(r"^id:(\d{6})")


# ---------------------------------------------------------------------------
# mutation operators


def bit_flip(rng: random.Random, data: bytes) -> bytes:
    if not data:
        return data
    buf = bytearray(data)
    pos = rng.randrange(len(buf))
    buf[pos] ^= 1 << rng.randrange(8)
    return bytes(buf)


def byte_sub(rng: random.Random, data: bytes) -> bytes:
    if not data:
        return data
    buf = bytearray(data)
    buf[rng.randrange(len(buf))] = rng.randrange(256)
    return bytes(buf)


def byte_insert(rng: random.Random, data: bytes) -> bytes:
    pos = rng.randrange(len(data) + 1)
    return data[:pos] + bytes([rng.randrange(256)]) + data[pos:]


def byte_delete(rng: random.Random, data: bytes) -> bytes:
    if len(data) <= 1:
        return data
    pos = rng.randrange(len(data))
    return data[:pos] + data[pos + 1:]


def block_duplicate(rng: random.Random, data: bytes) -> bytes:
    if not data:
        return data
    a = rng.randrange(len(data))
    b = rng.randrange(a, min(len(data), a + 16) + 1)
    if a == b:
        b = min(len(data), a + 1)
    block = data[a:b]
    pos = rng.randrange(len(data) + 1)
    return data[:pos] + block + data[pos:]


def splice(rng: random.Random, data: bytes, other: bytes) -> bytes:
    if not data:
        return other
    if not other:
        return data
    cut_a = rng.randrange(1, len(data) + 1)
    cut_b = rng.randrange(len(other) + 1)
    return data[:cut_a] + other[cut_b:]


def apply_mutator(name: str, rng: random.Random, data: bytes,
                  other: bytes = b"") -> bytes:
    if name == "splice":
        return splice(rng, data, other)
    fn = {"bit_flip": bit_flip, "byte_sub": byte_sub,
          "byte_insert": byte_insert, "byte_delete": byte_delete,
          "block_duplicate": block_duplicate}[name]
    return fn(rng, data)


def stack_depth(rng: random.Random) -> int:
    """Geometric stack size: depth k with probability (1/2)^k, capped."""
    depth = 1
    while depth < STACK_CAP and rng.random() < STACK_P:
        depth += 1
    return depth


# ---------------------------------------------------------------------------
# file-backed corpus


@dataclass
class SeedEntry:
    seed_id: int
    path: Path
    data: bytes
    src: Optional[int] = None
    op: Optional[str] = None


class Corpus:
    """The on-disk corpus layout under one output directory."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.main_queue = self.out_dir / "main" / "queue"
        self.crash_dir = self.out_dir / "main" / "crashes"
        self.llm_queue = self.out_dir / "llm" / "queue"
        self.stats_path = self.out_dir / "main" / "stats.tsv"
        for d in (self.main_queue, self.crash_dir, self.llm_queue):
            d.mkdir(parents=True, exist_ok=True)
        self._next_main = self._scan_next_id(self.main_queue)
        self._next_crash = self._scan_next_id(self.crash_dir)
        self._next_llm = self._scan_next_id(self.llm_queue)

    @staticmethod
    def _scan_next_id(directory: Path) -> int:
        top = -1
        for p in directory.iterdir():
            m = _ID_RE.match(p.name)
            if m:
                top = max(top, int(m.group(1)))
        return top + 1

    @staticmethod
    def _atomic_write(path: Path, data: bytes) -> None:
        tmp = path.parent / f".tmp_{path.name}"
        tmp.write_bytes(data)
        os.replace(tmp, path)

    def add_seed(self, data: bytes, src: Optional[int] = None,
                 op: Optional[str] = None,
                 orig: Optional[str] = None) -> SeedEntry:
        seed_id = self._next_main
        self._next_main += 1
        if orig is not None:
            safe = re.sub(r"[^A-Za-z0-9._-]", "_", orig)[:48]
            name = f"id:{seed_id:06d},orig:{safe}"
        elif op == "sync:llm":
            name = f"id:{seed_id:06d},sync:llm,src:{src:06d}"
        else:
            name = f"id:{seed_id:06d},src:{src or 0:06d},op:{op or 'none'}"
        path = self.main_queue / name
        self._atomic_write(path, data)
        return SeedEntry(seed_id=seed_id, path=path, data=data,
                         src=src, op=op)

    def add_import(self, data: bytes, llm_id: int) -> SeedEntry:
        return self.add_seed(data, src=llm_id, op="sync:llm")

    def add_crash(self, data: bytes, src: Optional[int]) -> Path:
        crash_id = self._next_crash
        self._next_crash += 1
        path = self.crash_dir / f"id:{crash_id:06d},src:{src or 0:06d}"
        self._atomic_write(path, data)
        return path

    def add_injection(self, data: bytes) -> tuple[int, Path]:
        llm_id = self._next_llm
        self._next_llm += 1
        path = self.llm_queue / f"id:{llm_id:06d}"
        self._atomic_write(path, data)
        return llm_id, path

    def list_injections(self) -> list[tuple[int, Path]]:
        out = []
        for p in sorted(self.llm_queue.iterdir()):
            m = _ID_RE.match(p.name)
            if m:
                out.append((int(m.group(1)), p))
        return out

    def append_stats(self, now: float, execs: int, kept: int,
                     arms: int) -> None:
        fresh = not self.stats_path.exists()
        with open(self.stats_path, "a") as fh:
            if fresh:
                fh.write("time\texecs\tkept\tarms\n")
            fh.write(f"{now:.3f}\t{execs}\t{kept}\t{arms}\n")


def read_stats(stats_path: str | Path) -> list[dict]:
    """Parse a stats.tsv into a list of row dicts."""
    path = Path(stats_path)
    if not path.exists():
        return []
    rows = []
    lines = path.read_text().splitlines()
    if not lines:
        return []
    header = lines[0].split("\t")
    for line in lines[1:]:
        parts = line.split("\t")
        if len(parts) != len(header):
            continue
        row = dict(zip(header, parts))
        rows.append({
            "time": float(row["time"]),
            "execs": int(row["execs"]),
            "kept": int(row["kept"]),
            "arms": int(row["arms"]),
        })
    return rows


def last_progress_time(rows: list[dict]) -> Optional[float]:
    """Timestamp of the last row where the kept counter moved."""
    last = None
    prev_kept = None
    for row in rows:
        if prev_kept is None or row["kept"] > prev_kept:
            last = row["time"]
        prev_kept = row["kept"]
    return last


# ---------------------------------------------------------------------------
# execution outcomes


@dataclass
class ExecOutcome:
    status: str                       # kept | boring | crash | timeout
    new_pairs: set[tuple[str, int]] = field(default_factory=set)
    covered: set[tuple[str, int]] = field(default_factory=set)
    entry: Optional[SeedEntry] = None
    trace: Optional[ExecutionTrace] = None


@dataclass
class ImportResult:
    llm_id: int
    status: str                       # kept | discarded | crash
    new_pairs: set[tuple[str, int]] = field(default_factory=set)
    covered: set[tuple[str, int]] = field(default_factory=set)
    entry: Optional[SeedEntry] = None


class Fuzzer:
    """One greybox fuzzing loop bound to an instrumented binary."""

    def __init__(self, index: AstIndex, binary: str | Path,
                 out_dir: str | Path, *,
                 rng: Optional[random.Random] = None,
                 clock: Callable[[], float] = time.monotonic,
                 timeout_s: float = DEFAULT_TIMEOUT_S,
                 trace_cap: int = DEFAULT_TRACE_CAP,
                 run_args: Optional[list[str]] = None):
        self.index = index
        self.binary = Path(binary)
        self.corpus = Corpus(out_dir)
        self.rng = rng or random.Random()
        self.clock = clock
        self.timeout_s = timeout_s
        self.trace_cap = trace_cap
        self.run_args = run_args
        self.state = CoverageState()
        self.queue: list[SeedEntry] = []
        self.execs = 0
        self.kept = 0
        self.crash_count = 0
        self.timeout_count = 0
        self.last_kept_time: Optional[float] = None
        self._cursor = 0
        self._imported: set[int] = set()

    # -- plumbing ------------------------------------------------------------

    def trace_of(self, data: bytes) -> ExecutionTrace:
        self.execs += 1
        return run_traced(self.binary, data, timeout_s=self.timeout_s,
                          trace_cap=self.trace_cap, run_args=self.run_args)

    def arm_count(self) -> int:
        return sum(len(v) for v in self.state.covered.values())

    def flush_stats(self) -> None:
        self.corpus.append_stats(self.clock(), self.execs, self.kept,
                                 self.arm_count())

    # -- seeding -------------------------------------------------------------

    def load_initial(self, seed_files) -> int:
        """Import starting seeds; every initial seed stays in the queue."""
        count = 0
        for sf in sorted(Path(p) for p in seed_files):
            data = sf.read_bytes()
            entry = self.corpus.add_seed(data, orig=sf.name)
            self.queue.append(entry)
            trace = self.trace_of(data)
            if trace.exit_status != "crash":
                new = apply_trace(self.index, self.state, trace,
                                  str(entry.path), len(data))
                if new:
                    self.kept += 1
                    self.last_kept_time = self.clock()
            count += 1
        if not self.queue:
            entry = self.corpus.add_seed(b"\x00", orig="auto")
            self.queue.append(entry)
            trace = self.trace_of(b"\x00")
            if trace.exit_status != "crash":
                apply_trace(self.index, self.state, trace,
                            str(entry.path), 1)
            count = 1
        return count

    # -- seed scheduling -------------------------------------------------------

    def select_seed(self) -> SeedEntry:
        if self.rng.random() < RECENT_PROB:
            recent = self.queue[-RECENT_WINDOW:]
            return self.rng.choice(recent)
        entry = self.queue[self._cursor % len(self.queue)]
        self._cursor += 1
        return entry

    def mutate(self, data: bytes) -> tuple[bytes, str]:
        depth = stack_depth(self.rng)
        buf = data if data else bytes([self.rng.randrange(256)])
        ops = []
        for _ in range(depth):
            op = self.rng.choice(MUTATORS)
            other = b""
            if op == "splice":
                if len(self.queue) < 2:
                    op = "byte_sub"
                else:
                    other = self.rng.choice(self.queue).data
            buf = apply_mutator(op, self.rng, buf, other)
            ops.append(op)
        return buf, (ops[0] if len(ops) == 1 else "havoc")

    # -- the loop body ---------------------------------------------------------

    def classify(self, data: bytes, trace: ExecutionTrace,
                 src: Optional[int], op: Optional[str]) -> ExecOutcome:
        """Fold one executed candidate into corpus + coverage state."""
        if trace.exit_status == "crash":
            self.crash_count += 1
            self.corpus.add_crash(data, src)
            return ExecOutcome(status="crash", trace=trace)
        if trace.exit_status == "timeout":
            self.timeout_count += 1
            return ExecOutcome(status="timeout", trace=trace)
        _reached, covered = interpret_trace_arms(self.index, trace)
        fresh = {
            pair for pair in covered
            if pair[1] not in self.state.covered.get(pair[0], set())
        }
        if not fresh:
            return ExecOutcome(status="boring", covered=covered)
        if op == "sync:llm":
            entry = self.corpus.add_import(data, src or 0)
        else:
            entry = self.corpus.add_seed(data, src=src, op=op)
        new_pairs = apply_trace(self.index, self.state, trace,
                                str(entry.path), len(data))
        self.queue.append(entry)
        self.kept += 1
        self.last_kept_time = self.clock()
        return ExecOutcome(status="kept", new_pairs=new_pairs,
                           covered=covered, entry=entry)

    def step(self) -> ExecOutcome:
        parent = self.select_seed()
        data, op = self.mutate(parent.data)
        trace = self.trace_of(data)
        return self.classify(data, trace, src=parent.seed_id, op=op)

    # -- solver drop-box ---------------------------------------------------------

    def import_injections(self) -> list[ImportResult]:
        results = []
        for llm_id, path in self.corpus.list_injections():
            if llm_id in self._imported:
                continue
            self._imported.add(llm_id)
            try:
                data = path.read_bytes()
            except OSError:
                continue
            trace = self.trace_of(data)
            outcome = self.classify(data, trace, src=llm_id, op="sync:llm")
            status = {"kept": "kept", "crash": "crash"}.get(
                outcome.status, "discarded")
            results.append(ImportResult(
                llm_id=llm_id, status=status,
                new_pairs=outcome.new_pairs, covered=outcome.covered,
                entry=outcome.entry))
        return results
