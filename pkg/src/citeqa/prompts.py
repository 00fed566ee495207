"""Prompt templates for the agents and judges, loadable with overrides.

Templates live as text assets under `citeqa/templates/`, one file per call
site, with `<<SYSTEM>>` and `<<USER>>` sections and `{name}` placeholders.
A directory of same-named files overrides individual templates.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import ConfigError

TEMPLATE_VERSION = "1"

TEMPLATE_NAMES = (
    "agent1_predict",
    "agent2_judge",
    "agent3_generate",
    "agent4_analyze",
    "agent4_followup",
    "agent4_synthesize",
    "judge_correctness",
    "judge_faithfulness",
)

_SYSTEM_MARK = "<<SYSTEM>>"
_USER_MARK = "<<USER>>"

# Prefixed to the user prompt when a structured reply must be requested again.
REPROMPT_PREFIX = (
    "Your previous reply could not be parsed. "
    "Follow the required output format exactly.\n\n"
)


def _split_sections(name: str, raw: str) -> tuple[str, str]:
    if _SYSTEM_MARK not in raw or _USER_MARK not in raw:
        raise ConfigError(f"template {name!r} must contain {_SYSTEM_MARK} and {_USER_MARK} sections")
    _, _, rest = raw.partition(_SYSTEM_MARK)
    system, _, user = rest.partition(_USER_MARK)
    system = system.strip()
    user = user.strip()
    if not system or not user:
        raise ConfigError(f"template {name!r} has an empty system or user section")
    return system, user


class PromptLibrary:
    """Loads, caches, and renders the prompt templates."""

    version = TEMPLATE_VERSION

    def __init__(self, override_dir: str | Path | None = None):
        self._override_dir = Path(override_dir) if override_dir else None
        if self._override_dir and not self._override_dir.is_dir():
            raise ConfigError(f"prompt override directory {self._override_dir} does not exist")
        self._cache: dict[str, tuple[str, str]] = {}

    def _load(self, name: str) -> tuple[str, str]:
        if name not in TEMPLATE_NAMES:
            raise ConfigError(f"unknown template {name!r}")
        cached = self._cache.get(name)
        if cached is not None:
            return cached
        filename = f"{name}.txt"
        if self._override_dir and (self._override_dir / filename).is_file():
            raw = (self._override_dir / filename).read_text(encoding="utf-8")
        else:
            try:
                raw = (resources.files("citeqa") / "templates" / filename).read_text(encoding="utf-8")
            except (FileNotFoundError, OSError) as exc:
                raise ConfigError(f"packaged template {name!r} is missing: {exc}") from exc
        sections = _split_sections(name, raw)
        self._cache[name] = sections
        return sections

    def render(self, name: str, **fields: str) -> tuple[str, str]:
        """Render a template into (system_prompt, user_prompt)."""
        system, user = self._load(name)
        try:
            return system.format(**fields), user.format(**fields)
        except (KeyError, IndexError, ValueError) as exc:
            raise ConfigError(f"template {name!r} rendering failed: {exc}") from exc
