"""Versioned prompt templates shipped in ``data/prompts.toml``."""
from __future__ import annotations

import string
from functools import lru_cache
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

PROMPTS_PATH = Path(__file__).resolve().parent / "data" / "prompts.toml"


class TemplateError(KeyError):
    pass


@lru_cache(maxsize=None)
def load_templates(path: str = str(PROMPTS_PATH)) -> tuple[int, dict]:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return int(raw["version"]), raw["templates"]


def template_version() -> int:
    return load_templates()[0]


def render_prompt(template_id: str, slots: dict) -> str:
    _, templates = load_templates()
    if template_id not in templates:
        raise TemplateError(f"unknown template {template_id!r}")
    body = templates[template_id]["body"]
    needed = {name for _, name, _, _ in string.Formatter().parse(body) if name}
    missing = sorted(needed - set(slots))
    if missing:
        raise TemplateError(f"template {template_id!r} missing slots: {', '.join(missing)}")
    return body.format(**{k: slots[k] for k in needed})
