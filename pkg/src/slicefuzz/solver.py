"""Roadblock solving: turn a slice plus a witness input into a new input.

Three interchangeable backends produce candidates:

* ``remote``     — POST a chat-completion request to an HTTP endpoint and
                   decode the reply. The endpoint and bearer token come from
                   SOLVER_ENDPOINT / SOLVER_API_KEY (credentials are never
                   read from config files).
* ``scripted``   — replay canned responses from a JSON file, matched to
                   roadblocks by key; deterministic stand-in for the remote
                   backend in tests and offline runs.
* ``bruteforce`` — no language model at all: paste literals harvested from
                   the slice over the witness, then enumerate single-byte
                   substitutions, executing each candidate until one drives
                   the target arm.

Candidate inputs travel as byte strings rendered printable: ASCII stands
for itself and everything else uses \\n, \\t, \\\\ and \\xNN escapes, with
backtick forced to \\x60 so a payload can never break out of its fenced
block. A reply must contain exactly one fenced block.

Every query — including retried HTTP requests — consumes one unit of the
shared query budget; at zero the solver reports budget exhaustion and the
campaign continues as a plain greybox fuzzer.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import requests

from .ast_index import tokenize

DEFAULT_MODEL = "gpt-4o"
DEFAULT_MAX_TOKENS = 4096
DEFAULT_TEMPERATURE = 0.5
DEFAULT_QUERY_BUDGET = 3000
MAX_RETRIES = 2
DEFAULT_BRUTEFORCE_TRIALS = 8192

ENDPOINT_ENV = "SOLVER_ENDPOINT"
API_KEY_ENV = "SOLVER_API_KEY"


class SolverError(RuntimeError):
    pass


class DecodeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# byte-string codec


def encode_bytes(data: bytes) -> str:
    """Render arbitrary bytes as a single printable line."""
    out: list[str] = []
    for b in data:
        if b == 0x5C:
            out.append("\\\\")
        elif b == 0x60:
            out.append("\\x60")
        elif b == 0x0A:
            out.append("\\n")
        elif b == 0x09:
            out.append("\\t")
        elif 0x20 <= b <= 0x7E:
            out.append(chr(b))
        else:
            out.append(f"\\x{b:02x}")
    return "".join(out)


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\r?\n?(.*?)```", re.DOTALL)


def decode_payload(text: str) -> bytes:
    """Unescape one encoded byte-string line (the codec's inverse)."""
    out = bytearray()
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\\" and i + 1 < n:
            nxt = text[i + 1]
            if nxt == "\\":
                out.append(0x5C)
                i += 2
                continue
            if nxt == "n":
                out.append(0x0A)
                i += 2
                continue
            if nxt == "t":
                out.append(0x09)
                i += 2
                continue
            if nxt == "x":
                hexpair = text[i + 2:i + 4]
                if len(hexpair) == 2 and all(
                        h in "0123456789abcdefABCDEF" for h in hexpair):
                    out.append(int(hexpair, 16))
                    i += 4
                    continue
            # unknown escape: keep the backslash literally
            out.append(0x5C)
            i += 1
            continue
        out.extend(c.encode("utf-8", errors="replace"))
        i += 1
    return bytes(out)


def decode_response(text: str) -> bytes:
    """Extract and decode the reply's single fenced block."""
    blocks = _FENCE_RE.findall(text)
    if len(blocks) != 1:
        raise DecodeError(
            f"expected exactly one fenced block, found {len(blocks)}")
    payload = blocks[0]
    if payload.endswith("\n"):
        payload = payload[:-1]
    if payload.endswith("\r"):
        payload = payload[:-1]
    return decode_payload(payload)


# ---------------------------------------------------------------------------
# prompt


@dataclass
class Prompt:
    system: str
    user: str


SYSTEM_PROMPT = (
    "You are an expert in concolic testing and constraint solving for C "
    "programs.\n"
    "A fuzzer is stuck at the conditional shown below. You will receive the "
    "sliced C code that computes the branch condition, ending in an assert() "
    "that states the direction we want execution to take, together with one "
    "concrete input that reaches the conditional but does not satisfy the "
    "assert.\n"
    "Proceed step by step: read the slice, work out how the input bytes flow "
    "into the variables of the assert, then construct a new concrete input "
    "that makes the assert pass. If the constraint is only partially clear, "
    "slightly modify or havoc the given input rather than inventing an "
    "unrelated one. The given input may look malformed for the program's "
    "expected input format; disregard format issues and focus on satisfying "
    "the assert."
)

USER_TEMPLATE = (
    "Respond with a single concrete input, not a program that would generate "
    "one.\n"
    "Output format: reply with exactly one fenced code block containing the "
    "new input as a byte string on one line. Printable ASCII stands for "
    "itself; use \\n, \\t, \\\\ and \\xNN escapes for other bytes, and write "
    "any backtick as \\x60. No prose inside the block.\n"
    "\n"
    "Sliced program:\n"
    "<<<SLICE>>>\n"
    "{slice}\n"
    "<<<END SLICE>>>\n"
    "\n"
    "Given input (reaches the conditional, fails the assert):\n"
    "<<<INPUT>>>\n"
    "{witness}\n"
    "<<<END INPUT>>>"
)


def build_prompt(slice_text: str, witness: bytes) -> Prompt:
    user = USER_TEMPLATE.format(
        slice=slice_text.rstrip("\n"),
        witness=encode_bytes(witness),
    )
    return Prompt(system=SYSTEM_PROMPT, user=user)


# ---------------------------------------------------------------------------
# configuration and results


@dataclass
class SolverConfig:
    backend: str = "bruteforce"          # remote | scripted | bruteforce
    model: str = DEFAULT_MODEL
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = DEFAULT_TEMPERATURE
    query_budget: int = DEFAULT_QUERY_BUDGET
    endpoint: Optional[str] = None       # default: SOLVER_ENDPOINT env var
    timeout_s: float = 60.0
    replay_path: Optional[str] = None    # scripted backend
    bruteforce_trials: int = DEFAULT_BRUTEFORCE_TRIALS


@dataclass
class SolverResult:
    status: str                          # ok | decode-failed | exhausted
                                         # | budget-exhausted | error
                                         # | no-candidate
    candidate: Optional[bytes] = None
    response_text: Optional[str] = None
    requests_used: int = 0
    latency_s: float = 0.0
    detail: str = ""


def roadblock_key(cond_id: str, arm_id: int) -> str:
    return f"{cond_id}#arm{arm_id}"


class Solver:
    """Stateful solver: tracks the query budget and replay position."""

    def __init__(self, config: SolverConfig):
        self.config = config
        self.budget_left = config.query_budget
        self.requests_made = 0
        self._replay: Optional[list[dict]] = None
        self._replay_used: set[int] = set()
        if config.backend not in ("remote", "scripted", "bruteforce"):
            raise SolverError(f"unknown backend: {config.backend}")

    # -- public ------------------------------------------------------------

    def solve(self, slice_text: str, witness: bytes, cond_id: str,
              arm_id: int, *,
              check: Optional[Callable[[bytes], bool]] = None,
              archive_to: Optional[Path] = None) -> SolverResult:
        prompt = build_prompt(slice_text, witness)
        if archive_to is not None:
            archive_to = Path(archive_to)
            archive_to.mkdir(parents=True, exist_ok=True)
            (archive_to / "prompt.txt").write_text(
                prompt.system + "\n\n--- user ---\n\n" + prompt.user)
        start = time.monotonic()
        if self.config.backend == "bruteforce":
            result = self._bruteforce(slice_text, witness, check)
        elif self.config.backend == "scripted":
            result = self._scripted(cond_id, arm_id)
        else:
            result = self._remote(prompt)
        result.latency_s = time.monotonic() - start
        if archive_to is not None:
            if result.response_text is not None:
                (archive_to / "response.txt").write_text(result.response_text)
            if result.candidate is not None:
                (archive_to / "candidate.bin").write_bytes(result.candidate)
        return result

    # -- remote ------------------------------------------------------------

    def _remote(self, prompt: Prompt) -> SolverResult:
        endpoint = self.config.endpoint or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            return SolverResult(status="error",
                                detail=f"no endpoint ({ENDPOINT_ENV} unset)")
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        }
        used = 0
        last_err = ""
        for attempt in range(MAX_RETRIES + 1):
            if self.budget_left <= 0:
                return SolverResult(status="budget-exhausted",
                                    requests_used=used, detail=last_err)
            self.budget_left -= 1
            self.requests_made += 1
            used += 1
            try:
                resp = requests.post(endpoint, json=payload, headers=headers,
                                     timeout=self.config.timeout_s)
                if resp.status_code >= 500:
                    last_err = f"server error {resp.status_code}"
                    continue
                if resp.status_code >= 400:
                    return SolverResult(
                        status="error", requests_used=used,
                        detail=f"request rejected ({resp.status_code})")
                text = resp.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError,
                    TypeError, ValueError) as exc:
                last_err = f"{type(exc).__name__}: {exc}"
                continue
            return self._finish_text(text, used)
        return SolverResult(status="error", requests_used=used,
                            detail=last_err or "retries exhausted")

    # -- scripted ----------------------------------------------------------

    def _load_replay(self) -> list[dict]:
        if self._replay is None:
            if not self.config.replay_path:
                raise SolverError("scripted backend needs replay_path")
            with open(self.config.replay_path, "r") as fh:
                entries = json.load(fh)
            if not isinstance(entries, list):
                raise SolverError("replay file must hold a JSON array")
            self._replay = entries
        return self._replay

    def _scripted(self, cond_id: str, arm_id: int) -> SolverResult:
        entries = self._load_replay()
        key = roadblock_key(cond_id, arm_id)
        if self.budget_left <= 0:
            return SolverResult(status="budget-exhausted")
        for i, entry in enumerate(entries):
            if i in self._replay_used:
                continue
            want = entry.get("roadblock", "*")
            if want not in ("*", key):
                continue
            self._replay_used.add(i)
            self.budget_left -= 1
            self.requests_made += 1
            return self._finish_text(str(entry.get("response", "")), 1)
        return SolverResult(status="exhausted",
                            detail=f"no replay entry for {key}")

    # -- bruteforce --------------------------------------------------------

    def _bruteforce(self, slice_text: str, witness: bytes,
                    check: Optional[Callable[[bytes], bool]]) -> SolverResult:
        if check is None:
            return SolverResult(status="error",
                                detail="bruteforce backend needs a check "
                                       "function")
        if self.budget_left <= 0:
            return SolverResult(status="budget-exhausted")
        self.budget_left -= 1
        self.requests_made += 1
        trials = 0
        seen: set[bytes] = set()

        def try_candidate(cand: bytes) -> Optional[SolverResult]:
            nonlocal trials
            if cand in seen or cand == witness:
                return None
            seen.add(cand)
            if trials >= self.config.bruteforce_trials:
                return SolverResult(status="no-candidate", requests_used=1,
                                    detail=f"trial limit after {trials}")
            trials += 1
            if check(cand):
                return SolverResult(status="ok", candidate=cand,
                                    requests_used=1,
                                    detail=f"found after {trials} trials")
            return None

        base = witness if witness else b"\x00"
        for entry in slice_dictionary(slice_text):
            for pos in range(len(base)):
                out = try_candidate(
                    base[:pos] + entry + base[pos + len(entry):])
                if out is not None:
                    return out
        for pos in range(len(base)):
            for b in range(256):
                out = try_candidate(base[:pos] + bytes([b]) + base[pos + 1:])
                if out is not None:
                    return out
        return SolverResult(status="no-candidate", requests_used=1,
                            detail=f"search space spent after {trials} trials")

    # -- shared ------------------------------------------------------------

    def _finish_text(self, text: str, used: int) -> SolverResult:
        try:
            candidate = decode_response(text)
        except DecodeError as exc:
            return SolverResult(status="decode-failed", response_text=text,
                                requests_used=used, detail=str(exc))
        return SolverResult(status="ok", candidate=candidate,
                            response_text=text, requests_used=used)


# ---------------------------------------------------------------------------
# bruteforce dictionary


_C_ESCAPES = {"n": 0x0A, "t": 0x09, "r": 0x0D, "0": 0x00, "a": 0x07,
              "b": 0x08, "f": 0x0C, "v": 0x0B, "\\": 0x5C, "'": 0x27,
              '"': 0x22, "?": 0x3F}


def _unescape_c(body: bytes) -> bytes:
    out = bytearray()
    i = 0
    n = len(body)
    while i < n:
        c = body[i:i + 1]
        if c == b"\\" and i + 1 < n:
            nxt = chr(body[i + 1])
            if nxt == "x":
                j = i + 2
                hexs = []
                while j < n and chr(body[j]) in "0123456789abcdefABCDEF" \
                        and len(hexs) < 2:
                    hexs.append(chr(body[j]))
                    j += 1
                if hexs:
                    out.append(int("".join(hexs), 16))
                    i = j
                    continue
            if nxt in _C_ESCAPES:
                out.append(_C_ESCAPES[nxt])
                i += 2
                continue
            out.append(body[i + 1])
            i += 2
            continue
        out.extend(c)
        i += 1
    return bytes(out)


def slice_dictionary(slice_text: str) -> list[bytes]:
    """Byte sequences worth pasting, harvested from a slice's literals.

    Strings decode their escapes, character constants become their byte,
    and integers contribute decimal, lower-hex and upper-hex spellings.
    """
    toks, _comments, _preproc = tokenize(slice_text.encode())
    out: list[bytes] = []
    seen: set[bytes] = set()

    def add(entry: bytes) -> None:
        if entry and entry not in seen:
            seen.add(entry)
            out.append(entry)

    for t in toks:
        if t.kind == "str" and len(t.text) >= 2:
            add(_unescape_c(t.text[1:-1]))
        elif t.kind == "char" and len(t.text) >= 2:
            add(_unescape_c(t.text[1:-1]))
        elif t.kind == "num":
            text = t.s.rstrip("uUlL")
            try:
                value = int(text, 0)
            except ValueError:
                continue
            add(str(value).encode())
            if value > 9:
                add(format(value, "x").encode())
                add(format(value, "X").encode())
    return out
