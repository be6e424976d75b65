"""Minimal typed-section config format for experiment recipes.

Syntax::

    # comment
    [recipe]
    name = condition-suite
    seed = 42

    [params]
    depth = 256

One experiment per file.  The parser tracks line numbers so schema errors can
point at the offending line, which is why this is hand-rolled rather than
configparser/TOML.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ConfigEntry:
    section: str
    key: str
    raw: str
    line: int


@dataclass(frozen=True)
class ParsedConfig:
    path: str
    entries: tuple   # ConfigEntry in file order

    def sections(self) -> dict:
        out: dict = {}
        for e in self.entries:
            out.setdefault(e.section, {})[e.key] = e
        return out


class ConfigSyntaxError(ValueError):
    pass


def parse_config_text(text: str, path: str = "<string>") -> ParsedConfig:
    entries = []
    section = None
    seen = set()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigSyntaxError(f"{path}:{lineno}: empty section name")
            continue
        if "=" not in line:
            raise ConfigSyntaxError(
                f"{path}:{lineno}: expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigSyntaxError(
                f"{path}:{lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigSyntaxError(f"{path}:{lineno}: empty key")
        if (section, key) in seen:
            raise ConfigSyntaxError(
                f"{path}:{lineno}: duplicate key {key!r} in [{section}]")
        seen.add((section, key))
        entries.append(ConfigEntry(section=section, key=key, raw=value,
                                   line=lineno))
    return ParsedConfig(path=path, entries=tuple(entries))


def parse_config_file(path) -> ParsedConfig:
    p = Path(path)
    return parse_config_text(p.read_text(), path=str(p))


# -- typed coercion ----------------------------------------------------------

def coerce(entry: ConfigEntry, kind: str):
    """Convert a raw entry per its declared kind; raises ValueError with the
    file location on failure."""
    raw = entry.raw
    where = f"line {entry.line}: [{entry.section}] {entry.key}"
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int-list":
            return [int(tok) for tok in raw.split(",") if tok.strip() != ""]
        if kind == "float-list":
            return [float(tok) for tok in raw.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ValueError(f"{where}: {exc}") from None
    raise ValueError(f"{where}: unknown kind {kind!r}")
