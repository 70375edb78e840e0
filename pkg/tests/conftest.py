import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from slicefuzz.ast_index import build_ast_index
from slicefuzz.tracer import build_target


def make_target(tmp_path: Path, source: str, name: str = "prog.c"):
    """Index and compile one C source; returns (index, BuildResult)."""
    src = Path(tmp_path) / name
    src.write_text(source)
    idx = build_ast_index([src])
    assert idx.warnings == []
    res = build_target(idx, Path(tmp_path) / "build")
    return idx, res
