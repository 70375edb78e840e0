"""A corpus of small C targets with hand-derived ground truth.

Each case directory bundles a target program, a starting corpus, and
expectation files derived by reading the program rather than by running
the engine: per-seed arm coverage (``expect/arms.json``), required slice
content (``expect/slices.json``), and canned solver answers
(``replay.json``) for gates a dictionary bruteforce cannot crack.

Expectation files name conditionals by a fragment of their guard text —
stable across reformatting, unlike raw conditional ids, which embed byte
offsets.  ``find_cond`` resolves a fragment to the one conditional whose
guard contains it and refuses ambiguity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..ast_index import AstIndex, Conditional, build_ast_index
from ..solver import roadblock_key
from ..tracer import BuildResult, build_target

__all__ = [
    "GauntletCase",
    "cases_root",
    "list_cases",
    "load_case",
    "build_case",
    "find_cond",
    "resolve_pairs",
    "arm_expectations",
    "slice_expectations",
    "materialize_replay",
]


def cases_root() -> Path:
    return Path(__file__).resolve().parent / "cases"


@dataclass(frozen=True)
class GauntletCase:
    name: str
    root: Path
    title: str
    solver: str                 # backend the end-to-end drill uses, or "off"
    hash_case: bool             # gate needs a preimage: mutation-proof
    e2e_targets: tuple[tuple[str, int], ...]   # (guard fragment, arm_id)
    notes: str
    sources: tuple[Path, ...]
    seeds: tuple[Path, ...]
    replay: Optional[Path]

    @property
    def expect_dir(self) -> Path:
        return self.root / "expect"


def list_cases() -> list[str]:
    root = cases_root()
    if not root.is_dir():
        return []
    return sorted(p.name for p in root.iterdir()
                  if (p / "case.json").is_file())


def load_case(name: str) -> GauntletCase:
    root = cases_root() / name
    meta_path = root / "case.json"
    if not meta_path.is_file():
        raise KeyError(f"no such gauntlet case: {name}")
    meta = json.loads(meta_path.read_text())
    sources = tuple(sorted((root / "src").glob("*.c")))
    if not sources:
        raise ValueError(f"gauntlet case {name} has no sources")
    seeds_dir = root / "seeds"
    seeds = tuple(sorted(p for p in seeds_dir.iterdir() if p.is_file())) \
        if seeds_dir.is_dir() else ()
    replay = root / "replay.json"
    return GauntletCase(
        name=name,
        root=root,
        title=meta.get("title", name),
        solver=meta.get("solver", "bruteforce"),
        hash_case=bool(meta.get("hash_case", False)),
        e2e_targets=tuple((str(f), int(a))
                          for (f, a) in meta.get("e2e_targets", [])),
        notes=meta.get("notes", ""),
        sources=sources,
        seeds=seeds,
        replay=replay if replay.is_file() else None,
    )


def build_case(case: GauntletCase, build_dir: str | Path
               ) -> tuple[AstIndex, BuildResult]:
    """Index and compile a case; case directories are never written to."""
    index = build_ast_index(case.sources)
    if index.warnings:
        raise ValueError(
            f"case {case.name} indexed with warnings: {index.warnings}")
    return index, build_target(index, build_dir)


def find_cond(index: AstIndex, fragment: str) -> Conditional:
    """The unique conditional whose guard text contains `fragment`."""
    hits = [c for c in index.conditionals.values()
            if fragment in index.text(c.guard_range)]
    if len(hits) != 1:
        raise ValueError(
            f"guard fragment {fragment!r} matches {len(hits)} conditionals")
    return hits[0]


def resolve_pairs(index: AstIndex,
                  pairs: list) -> set[tuple[str, int]]:
    """[(guard fragment, arm_id), ...] -> {(cond_id, arm_id), ...}."""
    return {(find_cond(index, f).cond_id, int(a)) for (f, a) in pairs}


def arm_expectations(case: GauntletCase) -> dict:
    """expect/arms.json: per-seed reached fragments and covered pairs."""
    return json.loads((case.expect_dir / "arms.json").read_text())


def slice_expectations(case: GauntletCase) -> list[dict]:
    """expect/slices.json entries, or [] when the case pins no slices."""
    path = case.expect_dir / "slices.json"
    if not path.is_file():
        return []
    return json.loads(path.read_text())


def materialize_replay(case: GauntletCase, index: AstIndex,
                       dest: str | Path) -> Path:
    """Write `case`'s replay in the solver's format.

    Case files key entries by guard fragment; the solver wants concrete
    roadblock keys and fenced response text.  Wildcard entries pass
    through.
    """
    if case.replay is None:
        raise ValueError(f"case {case.name} has no replay file")
    entries = json.loads(case.replay.read_text())
    out = []
    for entry in entries:
        if "guard_contains" in entry:
            cond = find_cond(index, entry["guard_contains"])
            key = roadblock_key(cond.cond_id, int(entry["arm"]))
        else:
            key = entry.get("roadblock", "*")
        out.append({
            "roadblock": key,
            "response": "```\n" + entry["response_payload"] + "\n```",
        })
    dest = Path(dest)
    dest.write_text(json.dumps(out, indent=2) + "\n")
    return dest
