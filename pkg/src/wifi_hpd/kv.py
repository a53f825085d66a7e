"""Flat ``key = value`` text dialect shared by config, scene, report and mapping files.

Lines are UTF-8. ``#`` starts a comment, blank lines are ignored and a line
of the form ``[name]`` opens a named section (used for repeated ``target``
blocks in scene files). Everything else must be ``key = value``.
"""
from __future__ import annotations

from dataclasses import dataclass, field


class KVSyntaxError(ValueError):
    """Malformed key-value text. Carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


@dataclass
class KVSection:
    name: str | None
    lineno: int
    items: dict[str, tuple[str, int]] = field(default_factory=dict)

    def get(self, key, default=None):
        return self.items[key][0] if key in self.items else default

    def line_of(self, key) -> int:
        return self.items[key][1] if key in self.items else self.lineno


def parse_kv(text: str) -> list[KVSection]:
    """Split text into sections. The first section is the unnamed preamble."""
    sections = [KVSection(None, 1)]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise KVSyntaxError(lineno, f"bad section header {raw.strip()!r}")
            sections.append(KVSection(line[1:-1].strip(), lineno))
            continue
        if "=" not in line:
            raise KVSyntaxError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise KVSyntaxError(lineno, "empty key")
        current = sections[-1]
        if key in current.items:
            raise KVSyntaxError(lineno, f"duplicate key {key!r}")
        current.items[key] = (value, lineno)
    return sections


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def format_kv(items: dict, section: str | None = None) -> str:
    lines = [f"[{section}]"] if section else []
    lines += [f"{key} = {format_value(value)}" for key, value in items.items()]
    return "\n".join(lines) + "\n"


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]
