"""Translation-strategy prompt templates.

Template bodies live in ``templates/*.txt`` and are registered through
``manifest.json`` (id -> file, theory tag, placeholder list).  Placeholders
use ``{name}`` syntax; a literal brace is written doubled (``{{`` / ``}}``).

The strategy templates ask for an analysis of the source sentence; the
``analysis_based_translation`` template then consumes that analysis.  Chaining
the two calls is left to the caller.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Mapping

from ..errors import InvalidConfig, MissingPlaceholder, UnknownTemplate


class Theory(str, Enum):
    SKOPOS = "skopos"
    FUNCTIONAL_EQUIVALENCE = "functional_equivalence"
    TEXT_TYPOLOGY = "text_typology"
    NONE = "none"


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    theory: Theory
    body: str
    required_placeholders: frozenset

    def __post_init__(self):
        found = placeholders(self.body)
        if found != set(self.required_placeholders):
            raise InvalidConfig(
                f"template {self.template_id!r}: manifest lists placeholders "
                f"{sorted(self.required_placeholders)} but body uses {sorted(found)}"
            )

    def render(self, vars: Mapping) -> str:
        for name in _ordered_placeholders(self.body):
            if name not in vars:
                raise MissingPlaceholder(name)
        return self.body.format_map({k: str(v) for k, v in vars.items()})


_FORMATTER = string.Formatter()


def _ordered_placeholders(body: str) -> list:
    out = []
    for _, name, spec, conv in _FORMATTER.parse(body):
        if name is None:
            continue
        if not name.isidentifier() or spec or conv:
            raise InvalidConfig(f"unsupported placeholder syntax {{{name}}}")
        if name not in out:
            out.append(name)
    return out


def placeholders(body: str) -> set:
    """Names of the ``{name}`` placeholders in ``body`` (doubled braces excluded)."""
    return set(_ordered_placeholders(body))


class PromptLibrary:
    def __init__(self, templates: Mapping, strategies):
        self._templates = dict(templates)
        self._strategies = tuple(strategies)
        unknown = [s for s in self._strategies if s not in self._templates]
        if unknown:
            raise InvalidConfig(f"strategy ids without a template: {unknown}")

    @classmethod
    def from_manifest(cls, manifest: Mapping, read_text) -> "PromptLibrary":
        """Build from a parsed manifest; ``read_text(relpath)`` returns file contents."""
        templates = {}
        for tid, entry in manifest["templates"].items():
            body = read_text(entry["file"]).rstrip("\n")
            templates[tid] = PromptTemplate(
                tid, Theory(entry["theory"]), body, frozenset(entry["placeholders"])
            )
        return cls(templates, manifest["strategies"])

    @property
    def template_ids(self) -> list:
        return list(self._templates)

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise UnknownTemplate(template_id, self._templates) from None

    def render(self, template_id: str, vars: Mapping) -> str:
        return self.get(template_id).render(vars)

    def list_strategies(self) -> list:
        return list(self._strategies)


@lru_cache(maxsize=1)
def default_library() -> PromptLibrary:
    root = resources.files(__name__)
    manifest = json.loads(root.joinpath("manifest.json").read_text(encoding="utf-8"))
    return PromptLibrary.from_manifest(
        manifest, lambda rel: root.joinpath(rel).read_text(encoding="utf-8")
    )


def render(template_id: str, vars: Mapping) -> str:
    return default_library().render(template_id, vars)


def list_strategies() -> list:
    return default_library().list_strategies()


def get_template(template_id: str) -> PromptTemplate:
    return default_library().get(template_id)
