"""Prompt template loading.

Templates ship as plain text files under riskpipe/prompts/ and use
string.Template placeholders. They are tunable deployment artifacts, not
fixed constants, so callers may point at their own files instead.
"""

from __future__ import annotations

import string
from importlib import resources
from pathlib import Path

from .errors import ConfigError

_PROMPT_DIR = "prompts"


def template_text(name: str) -> str:
    """Read a bundled template by file name, e.g. "judge_system.txt"."""
    ref = resources.files("riskpipe") / _PROMPT_DIR / name
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"no bundled prompt template named {name!r}")


def render_template(source: str, **subs: str) -> str:
    """Substitute $placeholders; unknown or missing names fail loudly."""
    try:
        return string.Template(source).substitute(**subs)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"prompt template substitution failed: {exc}") from exc


def load_template_file(path: str | Path) -> str:
    """Read an operator-supplied template from disk."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"prompt template file not found: {p}")
    return p.read_text(encoding="utf-8")
