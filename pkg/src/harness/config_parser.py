"""
Run configuration files.

Format: ``[section]`` headers followed by ``key = value`` lines; ``#`` starts a
comment. Values are read as JSON where possible (numbers, lists, booleans,
quoted strings) and as bare strings otherwise. Every section is validated by
a pydantic model that rejects unknown keys; diagnostics carry the line
number of the offending key.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Type, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..control.cost import COST_FAMILIES
from ..control.policy import PolicyFamily
from ..dynamics.model import MODEL_FAMILIES
from ..dynamics.simulator import InteractionMode
from ..metrics.fourier import QuadratureMode
from ..utils.errors import ConfigError
from ..utils.logger import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]


class ConfigEntry(NamedTuple):
    value: Any
    raw: str
    line: int


class ConfigDocument(BaseModel):
    """Raw sections with the line of every key and header."""

    sections: Dict[str, Dict[str, ConfigEntry]] = Field(default_factory=dict)
    headers: Dict[str, int] = Field(default_factory=dict)
    source: str = "<string>"


# ----------------------------------------------------------------------
# Section schemas

class RunSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    t0: float = Field(default=0.0, ge=0)
    T: float = Field(default=1.0, gt=0)
    dt: float = Field(default=1e-3, gt=0)
    replicas: int = Field(default=1000, ge=1)
    record_stride: int = Field(default=1, ge=1)
    interaction: InteractionMode = InteractionMode.MEAN_FIELD
    frozen_measure: Optional[str] = Field(default=None, description="Measure file seen by the coefficients")


class PolicySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: PolicyFamily = PolicyFamily.CONSTANT
    parameters: Optional[List[float]] = None
    action_low: List[float] = Field(default_factory=lambda: [-1.0])
    action_high: List[float] = Field(default_factory=lambda: [1.0])


class InitialSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    measure: str = Field(..., description="Measure file of nu")
    law: str = Field(default="rounded", pattern="^(rounded|poissonized|dirac)$")


class MetricSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    first: str = Field(..., description="Measure file of m1")
    second: str = Field(..., description="Measure file of m2")
    metric: str = Field(default="all", pattern="^(rhoF|sobolev|w1|dual|domination|all)$")
    lam: Optional[int] = Field(default=None, ge=1)
    mode: Optional[QuadratureMode] = None
    radius: Optional[float] = Field(default=None, gt=0)
    nodes: Optional[int] = Field(default=None, ge=3)
    base_point: Optional[List[float]] = None


class SearchSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: PolicyFamily = PolicyFamily.CONSTANT
    t: float = Field(default=0.0, ge=0)
    s: Optional[float] = Field(default=None, ge=0, description="Split time of the DPP check")
    restarts: int = Field(default=3, ge=1)
    iterations: int = Field(default=200, ge=1)
    replicas: int = Field(default=1000, ge=1)
    xatol: float = Field(default=1e-6, gt=0)
    fatol: float = Field(default=1e-9, gt=0)
    initial_step: float = Field(default=0.25, gt=0)
    tolerance: float = Field(default=1e-6, ge=0)


class FamilySection(BaseModel):
    """A registry family plus its validated parameters (defaults materialized)."""

    family: str
    params: Dict[str, Any] = Field(default_factory=dict)


SECTION_SCHEMAS: Dict[str, Type[BaseModel]] = {
    "run": RunSection,
    "policy": PolicySection,
    "initial": InitialSection,
    "metric": MetricSection,
    "search": SearchSection,
}
FAMILY_SECTIONS = {"model": MODEL_FAMILIES, "cost": COST_FAMILIES}

# Sections each subcommand needs; a missing one is reported with its required keys.
REQUIRED_SECTIONS: Dict[str, Tuple[str, ...]] = {
    "metric": ("metric",),
    "simulate": ("model", "initial"),
    "value": ("model", "cost", "initial"),
    "dpp": ("model", "cost", "initial"),
}
OPTIONAL_SECTIONS: Dict[str, Tuple[str, ...]] = {
    "metric": (),
    "simulate": ("run", "policy"),
    "value": ("run", "policy", "search"),
    "dpp": ("run", "policy", "search"),
}


class ResolvedConfig(BaseModel):
    """Validated configuration of one subcommand with every default filled in."""

    command: str
    source: str
    base_dir: str = "."
    run: RunSection = Field(default_factory=RunSection)
    policy: PolicySection = Field(default_factory=PolicySection)
    search: SearchSection = Field(default_factory=SearchSection)
    initial: Optional[InitialSection] = None
    metric: Optional[MetricSection] = None
    model: Optional[FamilySection] = None
    cost: Optional[FamilySection] = None

    def resolve_path(self, name: str) -> Path:
        path = Path(name)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def input_files(self) -> List[Path]:
        names = []
        if self.metric is not None:
            names += [self.metric.first, self.metric.second]
        if self.initial is not None:
            names.append(self.initial.measure)
        if self.run.frozen_measure:
            names.append(self.run.frozen_measure)
        return [self.resolve_path(n) for n in names]

    def materialized(self) -> Dict[str, Any]:
        """Every section in use, defaults included (the manifest's config block)."""
        used = REQUIRED_SECTIONS[self.command] + OPTIONAL_SECTIONS[self.command]
        out: Dict[str, Any] = {}
        for name in sorted(used):
            section = getattr(self, name)
            if section is not None:
                out[name] = section.model_dump(mode="json")
        return out


# ----------------------------------------------------------------------
# Parsing

def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_text(text: str, source: str = "<string>") -> ConfigDocument:
    """Split text into sections; syntax errors and duplicate keys carry line numbers."""
    sections: Dict[str, Dict[str, ConfigEntry]] = {}
    headers: Dict[str, int] = {}
    current: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header '{line}'", lineno)
            current = line[1:-1].strip()
            if current not in SECTION_SCHEMAS and current not in FAMILY_SECTIONS:
                known = sorted(list(SECTION_SCHEMAS) + list(FAMILY_SECTIONS))
                raise ConfigError(f"unknown section [{current}] (known: {', '.join(known)})", lineno)
            headers.setdefault(current, lineno)
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{line}'", lineno)
        if current is None:
            raise ConfigError("key outside of any [section]", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if key in sections[current]:
            first = sections[current][key].line
            raise ConfigError(f"duplicate key '{key}' in [{current}] on lines {first} and {lineno}", lineno)
        sections[current][key] = ConfigEntry(_parse_value(value), value, lineno)
    return ConfigDocument(sections=sections, headers=headers, source=source)


def _raise_validation(exc: ValidationError, section: str, doc: ConfigDocument) -> None:
    entries = doc.sections.get(section, {})
    messages, line = [], None
    for err in exc.errors():
        key = str(err["loc"][0]) if err["loc"] else None
        entry = entries.get(key) if key else None
        where = entry.line if entry else doc.headers.get(section)
        line = line if line is not None else where
        label = f"[{section}] {key}" if key else f"[{section}]"
        if err["type"] == "missing":
            messages.append(f"{label}: required key missing")
        elif err["type"] == "extra_forbidden":
            messages.append(f"{label}: unknown key")
        else:
            messages.append(f"{label}: {err['msg']}")
    raise ConfigError("; ".join(messages), line)


def _validate(schema: Type[BaseModel], section: str, doc: ConfigDocument) -> BaseModel:
    values = {k: e.value for k, e in doc.sections.get(section, {}).items()}
    try:
        return schema(**values)
    except ValidationError as exc:
        _raise_validation(exc, section, doc)


def _validate_family(section: str, doc: ConfigDocument) -> FamilySection:
    entries = dict(doc.sections.get(section, {}))
    registry = FAMILY_SECTIONS[section]
    family = entries.pop("family", None)
    if family is None:
        raise ConfigError(f"[{section}] family: required key missing", doc.headers.get(section))
    if not isinstance(family.value, str) or family.value not in registry:
        raise ConfigError(
            f"[{section}] family: unknown family {family.raw!r} (known: {', '.join(sorted(registry))})",
            family.line,
        )
    schema = registry[family.value][0]
    try:
        params = schema(**{k: e.value for k, e in entries.items()})
    except ValidationError as exc:
        _raise_validation(exc, section, doc)
    return FamilySection(family=family.value, params=params.model_dump(mode="json"))


def _required_keys(section: str) -> List[str]:
    if section in FAMILY_SECTIONS:
        return ["family"]
    schema = SECTION_SCHEMAS[section]
    return [name for name, field in schema.model_fields.items() if field.is_required()]


def resolve(doc: ConfigDocument, command: str, base_dir: PathLike = ".") -> ResolvedConfig:
    """
    Validate a parsed document for ``command``.

    Raises:
        ConfigError: missing sections or keys, unknown keys, type mismatches
    """
    if command not in REQUIRED_SECTIONS:
        raise ConfigError(f"no configuration schema for subcommand '{command}'")
    allowed = set(REQUIRED_SECTIONS[command] + OPTIONAL_SECTIONS[command])
    for name, line in sorted(doc.headers.items(), key=lambda item: item[1]):
        if name not in allowed:
            raise ConfigError(f"section [{name}] is not used by '{command}'", line)
    missing = [
        f"[{name}] {key}"
        for name in REQUIRED_SECTIONS[command]
        if name not in doc.sections
        for key in _required_keys(name)
    ]
    if missing:
        raise ConfigError(f"'{command}' requires: {', '.join(missing)}")

    resolved: Dict[str, Any] = {"command": command, "source": doc.source, "base_dir": str(base_dir)}
    for name in sorted(allowed):
        if name not in doc.sections:
            continue
        if name in FAMILY_SECTIONS:
            resolved[name] = _validate_family(name, doc)
        else:
            resolved[name] = _validate(SECTION_SCHEMAS[name], name, doc)
    config = ResolvedConfig(**resolved)
    logger.debug(f"Resolved '{command}' configuration from {doc.source}")
    return config


def parse_config(path: PathLike, command: str) -> ResolvedConfig:
    """Read, parse and validate a configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file '{path}' does not exist")
    doc = parse_text(path.read_text(encoding="utf-8"), source=str(path))
    return resolve(doc, command, base_dir=path.parent)


# File-valued keys, anchored to the directory of the file that sets them
PATH_KEYS: Dict[str, Tuple[str, ...]] = {
    "initial": ("measure",),
    "run": ("frozen_measure",),
    "metric": ("first", "second"),
}


def _read_document(path: Path) -> ConfigDocument:
    if not path.is_file():
        raise ConfigError(f"configuration file '{path}' does not exist")
    doc = parse_text(path.read_text(encoding="utf-8"), source=str(path))
    sections = {}
    for name, entries in doc.sections.items():
        entries = dict(entries)
        for key in PATH_KEYS.get(name, ()):
            entry = entries.get(key)
            if entry is not None and isinstance(entry.value, str) and not Path(entry.value).is_absolute():
                entries[key] = entry._replace(value=str(path.parent / entry.value))
        sections[name] = entries
    return doc.model_copy(update={"sections": sections})


def parse_layered(
    path: Optional[PathLike],
    command: str,
    overlays: Sequence[Tuple[PathLike, str]] = (),
) -> ResolvedConfig:
    """
    Validate a configuration assembled from several files.

    Each overlay is ``(file, section)``: the file must define ``section``, and
    every section it defines replaces the one from ``path`` as a whole.
    File-valued keys stay relative to the file that sets them.

    Raises:
        ConfigError: no file at all, an overlay without its section, or any
            error ``resolve`` reports
    """
    layers: List[Tuple[Path, Optional[str]]] = [(Path(p), s) for p, s in overlays]
    if path is not None:
        layers.insert(0, (Path(path), None))
    if not layers:
        raise ConfigError(f"'{command}' needs a configuration file")

    sections: Dict[str, Dict[str, ConfigEntry]] = {}
    headers: Dict[str, int] = {}
    sources = []
    for layer, required in layers:
        doc = _read_document(layer)
        if required is not None and required not in doc.sections:
            raise ConfigError(f"'{layer}' has no [{required}] section")
        sections.update(doc.sections)
        headers.update(doc.headers)
        sources.append(doc.source)
    merged = ConfigDocument(sections=sections, headers=headers, source=" + ".join(sources))
    return resolve(merged, command)
