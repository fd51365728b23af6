"""Versioned prompt templates shipped as package data.

Templates carry ``{marker}`` placeholders filled by plain string
replacement (never ``str.format``, so braces inside paper text stay inert).
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

GENERATION_TEMPLATE = "generation_v1.txt"
EXTRACTION_TEMPLATE = "extraction_v1.txt"
REGENERATION_TEMPLATE = "regeneration_v1.txt"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("editloop.prompts").joinpath("templates").joinpath(name).read_text()


def fill(template: str, values: dict[str, str]) -> str:
    """Replace each {marker} with its value, longest markers first."""
    out = template
    for marker in sorted(values, key=len, reverse=True):
        out = out.replace("{" + marker + "}", values[marker])
    return out
