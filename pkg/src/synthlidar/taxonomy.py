"""Semantic classes and the remap from raw simulator labels to validation classes."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

# column order of the 19-class SemanticKITTI validation set
VALIDATION_CLASSES: tuple[str, ...] = (
    "car", "bicycle", "motorcycle", "truck", "other-vehicle", "person",
    "bicyclist", "motorcyclist", "road", "parking", "sidewalk", "other-ground",
    "building", "fence", "vegetation", "trunk", "terrain", "pole", "traffic-sign",
)
IGNORE = 0
STATIC = "static-world"
ACTOR = "dynamic-actor"
_KINDS = (STATIC, ACTOR)
_BOOL = {"yes": True, "true": True, "1": True, "no": False, "false": False, "0": False}


class TaxonomyError(ValueError):
    pass


def validation_id(name: str) -> int:
    """1-based validation id; 0 is the IGNORE slot."""
    return VALIDATION_CLASSES.index(name) + 1


@dataclass(frozen=True)
class ClassDef:
    raw_id: int
    name: str
    kind: str
    remap_target: int
    adjustable: bool

    @property
    def is_actor(self) -> bool:
        return self.kind == ACTOR


@dataclass(frozen=True)
class Taxonomy:
    classes: tuple[ClassDef, ...]
    validation_classes: tuple[str, ...] = VALIDATION_CLASSES
    ignore_id: int = IGNORE
    _lut: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lut = np.zeros(1 << 16, dtype=np.int64)
        for c in self.classes:
            lut[c.raw_id] = c.remap_target
        object.__setattr__(self, "_lut", lut)

    @property
    def n_validation(self) -> int:
        return len(self.validation_classes)

    def by_name(self, name: str) -> ClassDef:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)

    def by_id(self, raw_id: int) -> ClassDef:
        for c in self.classes:
            if c.raw_id == raw_id:
                return c
        raise KeyError(raw_id)

    def raw_id(self, name: str) -> int:
        return self.by_name(name).raw_id

    def __contains__(self, raw_id: int) -> bool:
        return any(c.raw_id == raw_id for c in self.classes)

    @property
    def adjustable(self) -> tuple[ClassDef, ...]:
        return tuple(c for c in self.classes if c.adjustable)

    def reachable(self) -> list[int]:
        """Sorted validation ids hit by at least one raw class."""
        return sorted({c.remap_target for c in self.classes} - {self.ignore_id})

    def covered_mask(self) -> np.ndarray:
        """Boolean mask over validation slots 1..K of reachable classes."""
        mask = np.zeros(self.n_validation, dtype=bool)
        mask[np.asarray(self.reachable(), dtype=int) - 1] = True
        return mask

    def remap_array(self, labels) -> np.ndarray:
        """Vectorised remap; accepts raw ids or full 32-bit label words."""
        sem = np.asarray(labels).astype(np.int64) & 0xFFFF
        return self._lut[sem]


def remap(taxonomy: Taxonomy, raw_id: int) -> int:
    """Validation id for a raw class; unknown ids map to IGNORE."""
    if not 0 <= raw_id < (1 << 16):
        return taxonomy.ignore_id
    return int(taxonomy._lut[raw_id])


def embed(taxonomy: Taxonomy, validation: int) -> int | None:
    """Canonical raw id for a validation class, so that ``remap(embed(v)) == v``.

    Prefers the raw class carrying the validation class's own name, else the
    lowest raw id remapping onto it. Unreachable classes give ``None``.
    """
    name = taxonomy.validation_classes[validation - 1]
    hits = [c for c in taxonomy.classes if c.remap_target == validation]
    if not hits:
        return None
    for c in hits:
        if c.name == name:
            return c.raw_id
    return min(c.raw_id for c in hits)


def _parse_target(tok: str, name: str, lineno: int) -> int:
    if tok.upper() == "IGNORE":
        return IGNORE
    if tok not in VALIDATION_CLASSES:
        raise TaxonomyError(
            f"line {lineno}: class {name!r} remaps to {tok!r}, which is not a validation class")
    return validation_id(tok)


def parse_taxonomy(lines: Iterable[str]) -> Taxonomy:
    classes: list[ClassDef] = []
    seen: dict[int, int] = {}
    names: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise TaxonomyError(f"line {lineno}: expected 5 columns, got {len(parts)}")
        sid, name, kind, target, adj = parts
        try:
            raw_id = int(sid)
        except ValueError:
            raise TaxonomyError(f"line {lineno}: raw id {sid!r} is not an integer") from None
        if not 0 <= raw_id < (1 << 16):
            raise TaxonomyError(f"line {lineno}: raw id {raw_id} does not fit in 16 bits")
        if raw_id in seen:
            raise TaxonomyError(
                f"line {lineno}: duplicate raw id {raw_id} (first on line {seen[raw_id]})")
        if name in names:
            raise TaxonomyError(f"line {lineno}: duplicate class name {name!r}")
        if kind not in _KINDS:
            raise TaxonomyError(f"line {lineno}: unknown kind {kind!r}")
        if adj.lower() not in _BOOL:
            raise TaxonomyError(f"line {lineno}: adjustable must be yes/no, got {adj!r}")
        adjustable = _BOOL[adj.lower()]
        if kind == ACTOR and not adjustable:
            raise TaxonomyError(f"line {lineno}: dynamic actor {name!r} must be adjustable")
        seen[raw_id] = lineno
        names.add(name)
        classes.append(ClassDef(raw_id, name, kind, _parse_target(target, name, lineno), adjustable))
    return Taxonomy(tuple(classes))


def load_taxonomy(config_text: str) -> Taxonomy:
    return parse_taxonomy(config_text.splitlines())


def read_taxonomy(path: str | Path | None = None) -> Taxonomy:
    if path is None:
        return default_taxonomy()
    return load_taxonomy(Path(path).read_text(encoding="utf-8"))


def default_taxonomy_text() -> str:
    return resources.files("synthlidar").joinpath("data/taxonomy.default.cfg").read_text(encoding="utf-8")


def default_taxonomy() -> Taxonomy:
    return load_taxonomy(default_taxonomy_text())
