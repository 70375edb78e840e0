"""Campaign configuration: a small strict TOML subset.

Supported syntax: ``[section]`` headers, ``key = value`` pairs, comments,
and values that are double-quoted strings, integers, floats, booleans, or
(possibly multi-line) arrays of those. Unknown sections and keys are
rejected so typos fail loudly instead of silently running with defaults.

Solver credentials never appear here: the endpoint and API key are read
from the environment by the solver itself, and this schema deliberately
has no place to put them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    """A malformed or invalid campaign configuration."""


# ---------------------------------------------------------------------------
# parsing


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    i = 0
    while i < len(line):
        ch = line[i]
        if in_str:
            if ch == "\\" and i + 1 < len(line):
                out.append(line[i:i + 2])
                i += 2
                continue
            if ch == '"':
                in_str = False
        else:
            if ch == '"':
                in_str = True
            elif ch == "#":
                break
        out.append(ch)
        i += 1
    return "".join(out)


def _bracket_balance(text: str) -> int:
    depth = 0
    in_str = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_str:
            if ch == "\\":
                i += 2
                continue
            if ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        i += 1
    return depth


def _parse_string(text: str, where: str) -> tuple[str, str]:
    assert text[0] == '"'
    out = []
    i = 1
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text):
                raise ConfigError(f"{where}: dangling escape in string")
            esc = text[i + 1]
            mapped = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc)
            if mapped is None:
                raise ConfigError(f"{where}: unsupported escape \\{esc}")
            out.append(mapped)
            i += 2
            continue
        if ch == '"':
            return "".join(out), text[i + 1:]
        out.append(ch)
        i += 1
    raise ConfigError(f"{where}: unterminated string")


def _split_array_items(body: str, where: str) -> list[str]:
    items = []
    current = []
    in_str = False
    depth = 0
    i = 0
    while i < len(body):
        ch = body[i]
        if in_str:
            current.append(ch)
            if ch == "\\" and i + 1 < len(body):
                current.append(body[i + 1])
                i += 2
                continue
            if ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
            current.append(ch)
        elif ch == "[":
            raise ConfigError(f"{where}: nested arrays are not supported")
        elif ch == "," and depth == 0:
            items.append("".join(current))
            current = []
        else:
            current.append(ch)
        i += 1
    items.append("".join(current))
    return [s.strip() for s in items if s.strip()]


def _parse_value(text: str, where: str):
    text = text.strip()
    if not text:
        raise ConfigError(f"{where}: missing value")
    if text[0] == '"':
        value, rest = _parse_string(text, where)
        if rest.strip():
            raise ConfigError(f"{where}: trailing characters after string")
        return value
    if text[0] == "[":
        if not text.endswith("]"):
            raise ConfigError(f"{where}: unterminated array")
        return [_parse_value(item, where)
                for item in _split_array_items(text[1:-1], where)]
    if text in ("true", "false"):
        return text == "true"
    plain = text.replace("_", "")
    try:
        return int(plain, 0)
    except ValueError:
        pass
    try:
        return float(plain)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse value {text!r}") from None


_KEY_CHARS = set("abcdefghijklmnopqrstuvwxyz"
                 "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-")


def parse_toml_subset(text: str, source: str = "<config>") -> dict:
    """Parse the supported TOML subset into {section: {key: value}}."""
    data: dict[str, dict] = {}
    section: Optional[str] = None
    lines = text.splitlines()
    n = 0
    while n < len(lines):
        lineno = n + 1
        line = _strip_comment(lines[n]).strip()
        n += 1
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header")
            name = line[1:-1].strip()
            if not name or not set(name) <= _KEY_CHARS:
                raise ConfigError(f"{where}: bad section name {name!r}")
            if name in data:
                raise ConfigError(f"{where}: duplicate section [{name}]")
            data[name] = {}
            section = name
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected key = value")
        key, _, raw = line.partition("=")
        key = key.strip()
        if not key or not set(key) <= _KEY_CHARS:
            raise ConfigError(f"{where}: bad key {key!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside any [section]")
        # multi-line arrays continue until brackets balance
        while _bracket_balance(raw) > 0 and n < len(lines):
            raw += " " + _strip_comment(lines[n]).strip()
            n += 1
        if key in data[section]:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        data[section][key] = _parse_value(raw, where)
    return data


# ---------------------------------------------------------------------------
# schema


@dataclass
class TargetConfig:
    sources: list[Path]
    build_dir: Optional[Path] = None
    cc: str = "cc"
    cflags: list[str] = field(default_factory=list)
    build_cmd: Optional[str] = None
    run_args: list[str] = field(default_factory=list)
    timeout_s: float = 5.0
    trace_cap: int = 1_000_000


@dataclass
class CampaignSettings:
    out: Path = Path("out")
    seeds: Optional[Path] = None
    duration_s: float = 600.0
    plateau_s: float = 90.0
    rng_seed: int = 0
    mode: str = "deterministic"          # deterministic | threaded
    tick_s: float = 0.01                 # virtual seconds per execution
    flush_every_s: float = 10.0
    poll_s: float = 0.25                 # threaded orchestration poll
    import_every: int = 20               # worker injection sweep cadence


@dataclass
class SolverSettings:
    backend: str = "bruteforce"          # off | remote | scripted | bruteforce
    model: str = "gpt-4o"
    max_tokens: int = 4096
    temperature: float = 0.5
    query_budget: int = 3000
    timeout_s: float = 60.0
    replay: Optional[Path] = None
    bruteforce_trials: int = 8192
    archive: bool = True


@dataclass
class Config:
    target: TargetConfig
    campaign: CampaignSettings = field(default_factory=CampaignSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    base_dir: Path = Path(".")


_MODES = ("deterministic", "threaded")
_BACKENDS = ("off", "remote", "scripted", "bruteforce")


def _take(section: dict, key: str, kinds, default, where: str):
    if key not in section:
        return default
    value = section.pop(key)
    if kinds is float and isinstance(value, int):
        value = float(value)
    if kinds is Path:
        if not isinstance(value, str):
            raise ConfigError(f"{where}.{key}: expected a string path")
        return Path(value)
    if not isinstance(value, kinds):
        raise ConfigError(f"{where}.{key}: wrong type {type(value).__name__}")
    if kinds is bool and not isinstance(value, bool):
        raise ConfigError(f"{where}.{key}: expected a boolean")
    return value


def _take_str_list(section: dict, key: str, default, where: str):
    if key not in section:
        return default
    value = section.pop(key)
    if not isinstance(value, list) or not all(
            isinstance(v, str) for v in value):
        raise ConfigError(f"{where}.{key}: expected an array of strings")
    return value


def _reject_leftovers(section: dict, where: str) -> None:
    if section:
        unknown = ", ".join(sorted(section))
        raise ConfigError(f"unknown key(s) in [{where}]: {unknown}")


def config_from_dict(data: dict, base_dir: Path,
                     source: str = "<config>") -> Config:
    data = {k: dict(v) for k, v in data.items()}
    known = {"target", "campaign", "solver"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")

    tsec = data.get("target")
    if not tsec or "sources" not in tsec:
        raise ConfigError("config needs a [target] section with `sources`")
    sources = _take_str_list(tsec, "sources", None, "target")
    if not sources:
        raise ConfigError("target.sources must list at least one file")
    target = TargetConfig(
        sources=[(base_dir / s) for s in sources],
        build_dir=_take(tsec, "build_dir", Path, None, "target"),
        cc=_take(tsec, "cc", str, "cc", "target"),
        cflags=_take_str_list(tsec, "cflags", [], "target"),
        build_cmd=_take(tsec, "build_cmd", str, None, "target"),
        run_args=_take_str_list(tsec, "run_args", [], "target"),
        timeout_s=_take(tsec, "timeout_s", float, 5.0, "target"),
        trace_cap=_take(tsec, "trace_cap", int, 1_000_000, "target"),
    )
    if target.build_dir is not None:
        target.build_dir = base_dir / target.build_dir
    _reject_leftovers(tsec, "target")

    csec = data.get("campaign", {})
    campaign = CampaignSettings(
        out=_take(csec, "out", Path, Path("out"), "campaign"),
        seeds=_take(csec, "seeds", Path, None, "campaign"),
        duration_s=_take(csec, "duration_s", float, 600.0, "campaign"),
        plateau_s=_take(csec, "plateau_s", float, 90.0, "campaign"),
        rng_seed=_take(csec, "rng_seed", int, 0, "campaign"),
        mode=_take(csec, "mode", str, "deterministic", "campaign"),
        tick_s=_take(csec, "tick_s", float, 0.01, "campaign"),
        flush_every_s=_take(csec, "flush_every_s", float, 10.0, "campaign"),
        poll_s=_take(csec, "poll_s", float, 0.25, "campaign"),
        import_every=_take(csec, "import_every", int, 20, "campaign"),
    )
    campaign.out = base_dir / campaign.out
    if campaign.seeds is not None:
        campaign.seeds = base_dir / campaign.seeds
    if campaign.mode not in _MODES:
        raise ConfigError(f"campaign.mode must be one of {_MODES}")
    if campaign.tick_s <= 0 or campaign.plateau_s <= 0:
        raise ConfigError("campaign.tick_s and plateau_s must be positive")
    _reject_leftovers(csec, "campaign")

    ssec = data.get("solver", {})
    solver = SolverSettings(
        backend=_take(ssec, "backend", str, "bruteforce", "solver"),
        model=_take(ssec, "model", str, "gpt-4o", "solver"),
        max_tokens=_take(ssec, "max_tokens", int, 4096, "solver"),
        temperature=_take(ssec, "temperature", float, 0.5, "solver"),
        query_budget=_take(ssec, "query_budget", int, 3000, "solver"),
        timeout_s=_take(ssec, "timeout_s", float, 60.0, "solver"),
        replay=_take(ssec, "replay", Path, None, "solver"),
        bruteforce_trials=_take(ssec, "bruteforce_trials", int, 8192,
                                "solver"),
        archive=_take(ssec, "archive", bool, True, "solver"),
    )
    if solver.replay is not None:
        solver.replay = base_dir / solver.replay
    if solver.backend not in _BACKENDS:
        raise ConfigError(f"solver.backend must be one of {_BACKENDS}")
    if solver.backend == "scripted" and solver.replay is None:
        raise ConfigError("solver.backend = scripted needs solver.replay")
    _reject_leftovers(ssec, "solver")

    return Config(target=target, campaign=campaign, solver=solver,
                  base_dir=base_dir)


def load_config(path: str | Path) -> Config:
    """Read and validate a campaign file; paths resolve beside it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    data = parse_toml_subset(text, source=str(path))
    return config_from_dict(data, base_dir=path.parent, source=str(path))
