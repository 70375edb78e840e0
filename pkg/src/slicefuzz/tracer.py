"""Source instrumentation, target builds, and traced execution.

Instrumentation rewrites each indexed file so every trace point emits one
record: statements get a record before them, guards are comma-wrapped so
the record fires on every evaluation, conditional arms get an entry marker
(materializing an `else`/`default` when the source has none, and bracing
unbraced bodies), and function bodies get an entry marker used to
reconstruct call depth. Records carry the ORIGINAL (file_id, line,
ordinal) coordinates, so traces read back against the untouched index.
"""

from __future__ import annotations

import os
import shlex
import struct
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

from .ast_index import AstIndex, TracePoint

RECORD_BYTES = 10
RECORD_FORMAT = "<IIH"
DEFAULT_TRACE_CAP = 1_000_000
DEFAULT_TIMEOUT_S = 5.0

RUNTIME_SOURCE = Path(__file__).parent / "runtime" / "sf_trace_runtime.c"
PROTOTYPE_LINE = (
    b"int __sf_trace(unsigned int file_id, unsigned int line,"
    b" unsigned int ordinal);\n"
)

# splice ordering at equal byte positions: text that belongs to the region
# ENDING here (phase 0) lands before text that belongs to the region
# STARTING here (phase 1); nested regions unwind innermost-first.
_PHASE_END, _PHASE_START = 0, 1
_RANK = {
    "guard_close": 0, "incr_close": 0, "synthetic_else": 1, "close_wrap": 2,
    "synth_default": 3,                                     # phase 0
    "open_wrap": 0, "marker": 0, "stmt": 1, "guard_open": 2,
    "incr_open": 2,                                         # phase 1
}


class TraceRecord(NamedTuple):
    file_id: int
    line: int
    ordinal: int


@dataclass
class ExecutionTrace:
    records: list[TraceRecord]
    exit_status: str            # normal | crash | timeout | trace-cap
    returncode: Optional[int]
    duration_s: float
    truncated: bool = False
    stdout: bytes = b""
    stderr: bytes = b""


@dataclass
class BuildResult:
    binary: Path
    instrumented: list[Path]
    build_dir: Path
    command: list[str] = field(default_factory=list)


class BuildError(RuntimeError):
    pass


def _record_call(tp: TracePoint) -> str:
    return f"__sf_trace({tp.file_id}u,{tp.line}u,{tp.ordinal}u)"


def _inserts_for_point(tp: TracePoint) -> list[tuple[int, int, int, str, str]]:
    """(pos, phase, region_start, kind, text) splice pieces for one point."""
    call = _record_call(tp)
    r = tp.range
    if tp.style == "stmt":
        return [(tp.anchor, _PHASE_START, tp.anchor, "stmt", call + "; ")]
    if tp.style == "guard_wrap":
        return [
            (r.start_byte, _PHASE_START, r.start_byte, "guard_open", call + ", ("),
            (r.end_byte, _PHASE_END, r.start_byte, "guard_close", ")"),
        ]
    if tp.style == "for_incr_wrap":
        return [
            (r.start_byte, _PHASE_START, r.start_byte, "incr_open", call + ", ("),
            (r.end_byte, _PHASE_END, r.start_byte, "incr_close", ")"),
        ]
    if tp.style in ("func_entry", "arm_after_brace", "arm_after_label"):
        return [(tp.anchor, _PHASE_START, tp.anchor, "marker", " " + call + ";")]
    if tp.style == "arm_wrap_stmt":
        w = tp.wrap_range
        return [
            (w.start_byte, _PHASE_START, w.start_byte, "open_wrap",
             "{ " + call + "; "),
            (w.end_byte, _PHASE_END, w.start_byte, "close_wrap", " }"),
        ]
    if tp.style == "arm_synthetic_else":
        region_start = tp.node.range.start_byte if tp.node else tp.anchor
        return [(tp.anchor, _PHASE_END, region_start, "synthetic_else",
                 " else { " + call + "; }")]
    if tp.style == "arm_synth_default":
        region_start = tp.node.range.start_byte if tp.node else 0
        return [(tp.anchor, _PHASE_END, region_start, "synth_default",
                 " default: " + call + ";")]
    raise ValueError(f"unknown trace point style: {tp.style}")


def instrument_file(index: AstIndex, file_id: int) -> bytes:
    """Return the instrumented text of one indexed file."""
    content = index.files[file_id].content
    pieces: list[tuple[int, int, int, int, int, str]] = []
    seq = 0
    for tp in index.trace_points:
        if tp.file_id != file_id:
            continue
        for (pos, phase, region_start, kind, text) in _inserts_for_point(tp):
            key_region = -region_start if phase == _PHASE_END else region_start
            pieces.append((pos, phase, key_region, _RANK[kind], seq, text))
            seq += 1
    pieces.sort(key=lambda p: p[:5])
    out = bytearray()
    out += PROTOTYPE_LINE
    cursor = 0
    for (pos, _phase, _region, _rank, _seq, text) in pieces:
        out += content[cursor:pos]
        out += text.encode()
        cursor = pos
    out += content[cursor:]
    return bytes(out)


def instrument_sources(index: AstIndex, build_dir: str | Path) -> list[Path]:
    """Write instrumented copies of all indexed files into build_dir."""
    build_dir = Path(build_dir)
    build_dir.mkdir(parents=True, exist_ok=True)
    names: list[str] = []
    for fi in index.files:
        base = os.path.basename(fi.display)
        names.append(base if base not in names
                     else f"f{fi.file_id}_{base}")
    written: list[Path] = []
    for fi, name in zip(index.files, names):
        dest = build_dir / name
        dest.write_bytes(instrument_file(index, fi.file_id))
        written.append(dest)
    return written


def build_target(index: AstIndex, build_dir: str | Path, cc: str = "cc",
                 cflags: Optional[list[str]] = None,
                 build_cmd: Optional[str] = None) -> BuildResult:
    """Instrument, compile and link the target with the trace runtime.

    build_cmd, when given, is a template with {cc} {cflags} {sources}
    {runtime} {out} placeholders, split shell-style.
    """
    build_dir = Path(build_dir)
    sources = instrument_sources(index, build_dir)
    out = build_dir / "target_bin"
    cflags = list(cflags or ["-O0", "-g", "-w"])
    if build_cmd:
        rendered = build_cmd.format(
            cc=cc,
            cflags=" ".join(cflags),
            sources=" ".join(str(s) for s in sources),
            runtime=str(RUNTIME_SOURCE),
            out=str(out),
        )
        cmd = shlex.split(rendered)
    else:
        cmd = [cc, *cflags, "-o", str(out),
               *[str(s) for s in sources], str(RUNTIME_SOURCE)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0 or not out.exists():
        raise BuildError(
            f"compile failed ({' '.join(cmd)}):\n{proc.stderr.strip()}")
    return BuildResult(binary=out, instrumented=sources,
                       build_dir=build_dir, command=cmd)


def parse_trace_file(path: str | Path) -> list[TraceRecord]:
    """Decode a raw record stream; a torn trailing record is dropped."""
    data = Path(path).read_bytes()
    usable = len(data) - (len(data) % RECORD_BYTES)
    return [TraceRecord(*fields)
            for fields in struct.iter_unpack(RECORD_FORMAT, data[:usable])]


def guard_record_key(index: AstIndex, cond_id: str) -> Optional[TraceRecord]:
    """The trace record identifying one conditional's guard evaluation."""
    for tp in index.trace_points:
        if tp.kind == "guard" and tp.cond_id == cond_id:
            return TraceRecord(tp.file_id, tp.line, tp.ordinal)
    return None


def run_traced(binary: str | Path, data: bytes, *,
               timeout_s: float = DEFAULT_TIMEOUT_S,
               trace_cap: int = DEFAULT_TRACE_CAP,
               run_args: Optional[list[str]] = None,
               stop_at: Optional[TraceRecord] = None,
               capture_output: bool = False) -> ExecutionTrace:
    """Execute the instrumented binary on `data` and collect its trace.

    Input arrives on stdin unless run_args contains `@@`, which is replaced
    by the path of a file holding `data`. A run that outlives timeout_s is
    SIGTERMed (the runtime flushes and exits) and SIGKILLed shortly after,
    keeping total wall time under twice the timeout. stop_at truncates the
    returned records just after the first occurrence of that record.
    """
    tmpdir = tempfile.mkdtemp(prefix="sftrace-")
    trace_path = os.path.join(tmpdir, "trace.bin")
    input_path = None
    argv = [str(binary)]
    stdin_data: Optional[bytes] = data
    if run_args:
        rendered = []
        for a in run_args:
            if a == "@@":
                if input_path is None:
                    input_path = os.path.join(tmpdir, "input.bin")
                    Path(input_path).write_bytes(data)
                rendered.append(input_path)
                stdin_data = b""
            else:
                rendered.append(a)
        argv += rendered

    env = dict(os.environ)
    env["TRACE_OUT"] = trace_path
    env["TRACE_CAP"] = str(trace_cap + 1)

    out_target = subprocess.PIPE if capture_output else subprocess.DEVNULL
    started = time.monotonic()
    proc = subprocess.Popen(
        argv, stdin=subprocess.PIPE, stdout=out_target, stderr=out_target,
        env=env,
    )
    status = "normal"
    stdout = stderr = b""
    try:
        stdout, stderr = proc.communicate(stdin_data, timeout=timeout_s)
    except subprocess.TimeoutExpired:
        status = "timeout"
        proc.terminate()
        grace = min(timeout_s * 0.5, 0.3)
        try:
            proc.wait(timeout=grace)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        try:
            stdout, stderr = proc.communicate(timeout=0.1)
        except (subprocess.TimeoutExpired, ValueError):
            pass
    duration = time.monotonic() - started

    returncode = proc.returncode
    if status == "normal" and returncode is not None and returncode < 0:
        status = "crash"

    records: list[TraceRecord] = []
    if os.path.exists(trace_path):
        records = parse_trace_file(trace_path)
    truncated = len(records) > trace_cap
    if truncated:
        records = records[:trace_cap]
        if status == "normal":
            status = "trace-cap"
    if stop_at is not None:
        for i, rec in enumerate(records):
            if rec == stop_at:
                records = records[:i + 1]
                break

    for p in (trace_path, input_path):
        if p and os.path.exists(p):
            os.unlink(p)
    os.rmdir(tmpdir)

    return ExecutionTrace(
        records=records, exit_status=status, returncode=returncode,
        duration_s=duration, truncated=truncated,
        stdout=stdout or b"", stderr=stderr or b"",
    )


def describe_trace(index: AstIndex, trace: ExecutionTrace,
                   limit: Optional[int] = None) -> str:
    """Human-readable rendering of a trace (the `trace` CLI output)."""
    lines = []
    records = trace.records if limit is None else trace.records[:limit]
    for rec in records:
        tp = index.resolve_record(*rec)
        if tp is None:
            lines.append(f"?:{rec.line}:{rec.ordinal}  (unmapped)")
            continue
        fi = index.files[tp.file_id]
        tag = tp.kind
        if tp.cond_id is not None and tp.kind == "arm":
            tag = f"arm[{tp.arm_id}] of {tp.cond_id}"
        elif tp.cond_id is not None:
            tag = f"{tp.kind} of {tp.cond_id}"
        elif tp.func_name:
            tag = f"enter {tp.func_name}"
        lines.append(f"{fi.display}:{rec.line}:{rec.ordinal}  {tag}")
    if limit is not None and len(trace.records) > limit:
        lines.append(f"... {len(trace.records) - limit} more records")
    lines.append(
        f"[{trace.exit_status}] rc={trace.returncode} "
        f"records={len(trace.records)} {trace.duration_s:.3f}s")
    return "\n".join(lines)
