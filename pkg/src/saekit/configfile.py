"""Flat ``key = value`` config files with typed coercion.

Lines starting with ``#`` are comments.  Values are parsed as int, float,
bool, comma tuples, or left as strings.
"""

from __future__ import annotations

from pathlib import Path


def _coerce(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in {"true", "yes", "on"}:
        return True
    if lowered in {"false", "no", "off"}:
        return False
    if "," in text:
        return tuple(_coerce(part) for part in text.split(",") if part.strip())
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def load_config(path) -> dict:
    path = Path(path)
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = _coerce(value)
    return values
