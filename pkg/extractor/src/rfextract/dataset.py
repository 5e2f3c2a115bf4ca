"""Minimal reader for the meme dataset JSONL.

Each line holds an object with ``id``, ``image``, ``text``, and four
role keys (``hero``/``villain``/``victim``/``other``), each a list of
entity strings. The extractor only needs ids, texts, image references,
and the union of entity strings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from rfextract.config import ExtractorError

ROLE_KEYS = ("hero", "villain", "victim", "other")


@dataclass(frozen=True)
class MemeItem:
    id: str
    image: str
    text: str
    entities: tuple[str, ...]


def load_memes(path: str | Path) -> list[MemeItem]:
    path = Path(path)
    if not path.exists():
        raise ExtractorError(f"dataset file not found: {path}")
    items: list[MemeItem] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExtractorError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            try:
                meme_id = str(obj["id"])
                entities = []
                for key in ROLE_KEYS:
                    for name in obj.get(key, []):
                        entities.append(str(name))
                items.append(
                    MemeItem(
                        id=meme_id,
                        image=str(obj.get("image", "")),
                        text=str(obj.get("text", "")),
                        entities=tuple(entities),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise ExtractorError(f"{path}:{line_no}: bad record: {exc}") from exc
            if meme_id in seen:
                raise ExtractorError(f"{path}:{line_no}: duplicate meme id {meme_id!r}")
            seen.add(meme_id)
    return items


def unique_entities(items: list[MemeItem]) -> list[str]:
    """Entity strings deduplicated across the dataset, first-seen order."""
    seen: set[str] = set()
    out: list[str] = []
    for item in items:
        for name in item.entities:
            if name not in seen:
                seen.add(name)
                out.append(name)
    return out
