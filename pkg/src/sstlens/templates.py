"""Value-template regex registry: loading, validation, and matching.

Templates are named regex patterns over artifact values in three modalities:
query parameter values (23 in the bundled registry), cookie values (5), and
serialized window variables (10). Anchored templates must match the whole
value; unanchored ones are substring-searched (all bundled window templates
are fragments over stringified objects). Feature index i always refers to
template i in registry order, so the ordering is part of the contract.

Registry files are JSON:

    {"version": ..., "environment_profile": {...},
     "templates": [{"id", "modality", "pattern", "anchored",
                    "environment_sensitive"}, ...]}

The environment profile maps template ids to replacement pattern strings and
may only override templates marked environment_sensitive (their bundled
patterns pin browser-build specifics observed at crawl time).
"""

import json
import re
from dataclasses import dataclass
from importlib import resources

from .errors import ConfigError

BUILTIN = "builtin"
REGISTRY_RESOURCE = "value_templates.json"

MODALITIES = ("query_param", "cookie", "window_var")
BUILTIN_COUNTS = {"query_param": 23, "cookie": 5, "window_var": 10}


@dataclass(frozen=True)
class ValueTemplate:
    id: str
    modality: str
    pattern: str
    anchored: bool
    environment_sensitive: bool


class TemplateRegistry:
    """Immutable after load; matching is pure and thread-safe."""

    def __init__(self, version, environment_profile, templates):
        self.version = version
        self.environment_profile = dict(environment_profile)
        self.templates = tuple(templates)
        self.by_modality = {m: tuple(t for t in self.templates if t.modality == m)
                            for m in MODALITIES}
        self._compiled = {}
        for template in self.templates:
            try:
                compiled = re.compile(template.pattern)
            except re.error as err:
                raise ConfigError(
                    f"template {template.id!r} ({template.modality}) does not compile: {err}"
                ) from None
            self._compiled[(template.modality, template.id)] = compiled

    def modality_ids(self, modality) -> tuple:
        return tuple(t.id for t in self.by_modality[modality])

    def find(self, template_id):
        hits = [t for t in self.templates if t.id == template_id]
        if not hits:
            raise ConfigError(f"unknown template id {template_id!r}")
        if len(hits) > 1:
            raise ConfigError(f"template id {template_id!r} is ambiguous across modalities")
        return hits[0]


def load_registry(path=BUILTIN) -> TemplateRegistry:
    """Load a registry file, or the bundled registry for the BUILTIN marker."""
    builtin = path == BUILTIN
    if builtin:
        text = resources.files("sstlens.data").joinpath(REGISTRY_RESOURCE).read_text("utf-8")
    else:
        try:
            with open(path, encoding="utf-8") as f:
                text = f.read()
        except FileNotFoundError:
            raise ConfigError(f"registry file not found: {path}") from None
    try:
        doc = json.loads(text)
    except ValueError as err:
        raise ConfigError(f"registry is not valid JSON: {err}") from None
    for field in ("version", "environment_profile", "templates"):
        if field not in doc:
            raise ConfigError(f"registry missing required field {field!r}")

    profile = doc["environment_profile"]
    if not isinstance(profile, dict):
        raise ConfigError("environment_profile must be an object")

    templates = []
    seen = set()
    for position, entry in enumerate(doc["templates"]):
        for field in ("id", "modality", "pattern", "anchored", "environment_sensitive"):
            if field not in entry:
                raise ConfigError(f"template at position {position} missing field {field!r}")
        if entry["modality"] not in MODALITIES:
            raise ConfigError(
                f"template {entry['id']!r} has unknown modality {entry['modality']!r}"
            )
        key = (entry["modality"], entry["id"])
        if key in seen:
            raise ConfigError(f"duplicate template id {entry['id']!r} in {entry['modality']}")
        seen.add(key)
        pattern = entry["pattern"]
        if entry["id"] in profile:
            if not entry["environment_sensitive"]:
                raise ConfigError(
                    f"environment_profile overrides {entry['id']!r}, "
                    "which is not environment_sensitive"
                )
            pattern = profile[entry["id"]]
        try:
            re.compile(pattern)
        except re.error as err:
            raise ConfigError(
                f"template {entry['id']!r} at position {position} does not compile: {err}"
            ) from None
        templates.append(ValueTemplate(
            id=entry["id"],
            modality=entry["modality"],
            pattern=pattern,
            anchored=bool(entry["anchored"]),
            environment_sensitive=bool(entry["environment_sensitive"]),
        ))

    overridden = set(profile) - {t.id for t in templates}
    if overridden:
        raise ConfigError(f"environment_profile names unknown templates: {sorted(overridden)}")

    registry = TemplateRegistry(doc["version"], profile, templates)
    if builtin:
        counts = {m: len(registry.by_modality[m]) for m in MODALITIES}
        if counts != BUILTIN_COUNTS:
            raise ConfigError(f"bundled registry counts corrupted: {counts}")
    return registry


def match_value(registry: TemplateRegistry, template_id: str, value: str) -> bool:
    """Whole-value match for anchored templates, substring search otherwise."""
    template = registry.find(template_id)
    compiled = registry._compiled[(template.modality, template.id)]
    if template.anchored:
        return compiled.fullmatch(value) is not None
    return compiled.search(value) is not None


def match_modality(registry: TemplateRegistry, modality: str, value: str) -> set:
    """Ids of all templates in the modality whose pattern matches value."""
    if modality not in MODALITIES:
        raise ConfigError(f"unknown modality {modality!r}")
    hits = set()
    for template in registry.by_modality[modality]:
        compiled = registry._compiled[(modality, template.id)]
        if template.anchored:
            if compiled.fullmatch(value) is not None:
                hits.add(template.id)
        elif compiled.search(value) is not None:
            hits.add(template.id)
    return hits
