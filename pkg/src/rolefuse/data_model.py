"""Canonical dataset representation and ingestion.

A dataset is a JSONL file, one meme per line:

    {"id": "m1", "image": "covid/m1.png", "text": "...",
     "hero": ["..."], "villain": ["..."], "victim": ["..."], "other": ["..."]}

The four role keys hold entity-name arrays. Unknown keys are ignored with a
warning. ``flatten_to_instances`` reorganizes memes into one example per
(meme, entity) pair, which is the unit of the classification formulation.
"""

from __future__ import annotations

import enum
import json
import logging
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Raised for malformed dataset files or inconsistent annotations."""


class Role(enum.Enum):
    """The four entity roles, in their fixed reporting order."""

    HERO = "hero"
    VILLAIN = "villain"
    VICTIM = "victim"
    OTHER = "other"

    @property
    def index(self) -> int:
        return _ROLE_ORDER[self]

    def __lt__(self, other: "Role") -> bool:
        if not isinstance(other, Role):
            return NotImplemented
        return self.index < other.index


_ROLE_ORDER = {Role.HERO: 0, Role.VILLAIN: 1, Role.VICTIM: 2, Role.OTHER: 3}

ROLES: tuple[Role, ...] = (Role.HERO, Role.VILLAIN, Role.VICTIM, Role.OTHER)

_KNOWN_KEYS = {"id", "image", "text", "hero", "villain", "victim", "other"}


@dataclass(frozen=True)
class MemeRecord:
    """One meme: id, image reference, OCR text, and entity annotations.

    ``annotations`` is ordered by role (hero, villain, victim, other) and
    keeps the input order within each role.
    """

    id: str
    image_ref: str
    ocr_text: str
    annotations: tuple[tuple[str, Role], ...]

    def __post_init__(self):
        seen: dict[str, Role] = {}
        for name, role in self.annotations:
            if not name:
                raise DatasetError(f"meme {self.id!r}: empty entity name")
            if name in seen:
                if seen[name] == role:
                    raise DatasetError(
                        f"meme {self.id!r}: entity {name!r} listed twice under "
                        f"role {role.value}"
                    )
                raise DatasetError(
                    f"meme {self.id!r}: entity {name!r} listed under two roles "
                    f"({seen[name].value} and {role.value})"
                )
            seen[name] = role


@dataclass(frozen=True)
class EntityInstance:
    """One (meme, entity, role) classification example.

    Augmented copies produced by :mod:`rolefuse.augment` carry
    ``augmented=True`` and keep the original meme id in ``source_meme_id``
    so image embeddings can still be resolved.
    """

    meme_id: str
    entity_name: str
    ocr_text: str
    image_ref: str
    role: Role
    augmented: bool = False
    source_meme_id: str | None = None

    @property
    def image_key(self) -> str:
        """Id under which this instance's image embedding is stored."""
        return self.source_meme_id if self.source_meme_id else self.meme_id


@dataclass(frozen=True)
class RoleCounts:
    """Per-role instance counts for one split."""

    hero: int = 0
    villain: int = 0
    victim: int = 0
    other: int = 0

    def __post_init__(self):
        for role in ROLES:
            if self[role] < 0:
                raise ValueError(f"negative count for {role.value}")

    def __getitem__(self, role: Role) -> int:
        return getattr(self, role.value)

    @property
    def total(self) -> int:
        return self.hero + self.villain + self.victim + self.other

    def percentages(self) -> dict[Role, int]:
        """Integer percentages, round(100 * count / total); zeros if empty."""
        if self.total == 0:
            return {role: 0 for role in ROLES}
        return {role: round(100 * self[role] / self.total) for role in ROLES}

    def as_dict(self) -> dict[str, int]:
        d = {role.value: self[role] for role in ROLES}
        d["total"] = self.total
        return d


def _parse_record(obj: dict, line_no: int) -> MemeRecord:
    if not isinstance(obj, dict):
        raise DatasetError(f"line {line_no}: expected a JSON object")
    unknown = set(obj) - _KNOWN_KEYS
    if unknown:
        logger.warning("line %d: ignoring unknown keys %s", line_no, sorted(unknown))
    meme_id = obj.get("id")
    if not isinstance(meme_id, str) or not meme_id:
        raise DatasetError(f"line {line_no}: missing or invalid 'id'")
    image_ref = obj.get("image", "")
    ocr_text = unicodedata.normalize("NFC", obj.get("text", "") or "")
    annotations = []
    for role in ROLES:
        names = obj.get(role.value, [])
        if names is None:
            names = []
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise DatasetError(
                f"line {line_no}: key {role.value!r} must be an array of strings"
            )
        for name in names:
            annotations.append((unicodedata.normalize("NFC", name), role))
    try:
        return MemeRecord(
            id=meme_id,
            image_ref=image_ref,
            ocr_text=ocr_text,
            annotations=tuple(annotations),
        )
    except DatasetError as exc:
        raise DatasetError(f"line {line_no}: {exc}") from exc


def load_dataset(path: str | Path) -> list[MemeRecord]:
    """Load a JSONL dataset, validating ids and annotation consistency."""
    path = Path(path)
    records: list[MemeRecord] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: invalid JSON: {exc}") from exc
            record = _parse_record(obj, line_no)
            if record.id in seen_ids:
                raise DatasetError(f"line {line_no}: duplicate meme id {record.id!r}")
            seen_ids.add(record.id)
            records.append(record)
    return records


def save_dataset(records: Iterable[MemeRecord], path: str | Path) -> None:
    """Write records as JSONL in the same schema ``load_dataset`` reads."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            obj: dict = {"id": record.id, "image": record.image_ref, "text": record.ocr_text}
            for role in ROLES:
                obj[role.value] = [n for n, r in record.annotations if r == role]
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def flatten_to_instances(records: Iterable[MemeRecord]) -> list[EntityInstance]:
    """One EntityInstance per annotation: record order, then role order."""
    instances: list[EntityInstance] = []
    for record in records:
        for role in ROLES:
            for name, r in record.annotations:
                if r == role:
                    instances.append(
                        EntityInstance(
                            meme_id=record.id,
                            entity_name=name,
                            ocr_text=record.ocr_text,
                            image_ref=record.image_ref,
                            role=role,
                        )
                    )
    return instances


def save_instances(instances: Iterable[EntityInstance], path: str | Path) -> None:
    """Write classification instances as JSONL (one instance per line)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for inst in instances:
            obj = {
                "meme_id": inst.meme_id,
                "entity": inst.entity_name,
                "text": inst.ocr_text,
                "image": inst.image_ref,
                "role": inst.role.value,
            }
            if inst.augmented:
                obj["augmented"] = True
                obj["source_meme_id"] = inst.source_meme_id
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_instances(path: str | Path) -> list[EntityInstance]:
    path = Path(path)
    instances: list[EntityInstance] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: invalid JSON: {exc}") from exc
            try:
                instances.append(
                    EntityInstance(
                        meme_id=obj["meme_id"],
                        entity_name=obj["entity"],
                        ocr_text=obj.get("text", ""),
                        image_ref=obj.get("image", ""),
                        role=Role(obj["role"]),
                        augmented=bool(obj.get("augmented", False)),
                        source_meme_id=obj.get("source_meme_id"),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise DatasetError(f"line {line_no}: invalid instance: {exc}") from exc
    return instances


def class_distribution(instances: Iterable[EntityInstance]) -> RoleCounts:
    counts = {role: 0 for role in ROLES}
    for inst in instances:
        counts[inst.role] += 1
    return RoleCounts(
        hero=counts[Role.HERO],
        villain=counts[Role.VILLAIN],
        victim=counts[Role.VICTIM],
        other=counts[Role.OTHER],
    )
