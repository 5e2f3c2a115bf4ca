"""The three extraction operations: meme texts, entity strings, images.

Each writes one EMB1 file plus a ``<output>.manifest.json`` sidecar with
the encoder id, dimension, pooling/preprocessing notes, row count, and
any skipped items. Row count plus skip count always equals the number of
dataset items.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from rfextract.config import ExtractorConfig, ExtractorError
from rfextract.dataset import load_memes, unique_entities
from rfextract.emb1 import write_emb1
from rfextract.encoders import (
    load_image_encoder,
    load_text_encoder,
    preprocess_image,
)


def _write_manifest(config: ExtractorConfig, kind: str, encoder: str, dim: int,
                    count: int, skipped: list[dict], notes: dict) -> None:
    manifest = {
        "kind": kind,
        "encoder": encoder,
        "dim": dim,
        "rows": count,
        "skipped": skipped,
        "dataset": str(config.dataset),
        "seed": config.seed,
        **notes,
    }
    path = Path(str(config.output) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")


def _pool(hidden: torch.Tensor, mask: torch.Tensor, pooling: str) -> torch.Tensor:
    if pooling == "first":
        return hidden[:, 0]
    weights = mask.unsqueeze(-1).to(hidden.dtype)
    return (hidden * weights).sum(1) / weights.sum(1).clamp(min=1.0)


def _encode_texts(texts: list[str], config: ExtractorConfig) -> tuple[np.ndarray, int]:
    tokenizer, model = load_text_encoder(config.text_encoder, config.device, config.seed)
    dim = model.config.hidden_size
    rows = []
    with torch.no_grad():
        for start in range(0, len(texts), config.batch_size):
            batch = texts[start : start + config.batch_size]
            enc = tokenizer(
                batch,
                padding=True,
                truncation=True,
                max_length=config.max_length,
                return_tensors="pt",
            ).to(config.device)
            out = model(**enc)
            pooled = _pool(out.last_hidden_state, enc["attention_mask"], config.pooling)
            rows.append(pooled.cpu().double().numpy())
    stacked = np.concatenate(rows, axis=0) if rows else np.zeros((0, dim))
    return stacked, dim


def extract_text(config: ExtractorConfig) -> int:
    """One row per meme id, pooled text embedding. Returns the row count."""
    items = load_memes(config.dataset)
    vectors, dim = _encode_texts([it.text for it in items], config)
    entries = {it.id: vectors[i] for i, it in enumerate(items)}
    write_emb1(dim, entries, config.output)
    _write_manifest(config, "text", config.text_encoder, dim, len(entries), [],
                    {"pooling": config.pooling, "max_length": config.max_length})
    return len(entries)


def extract_entities(config: ExtractorConfig) -> int:
    """One row per distinct entity string across the dataset."""
    items = load_memes(config.dataset)
    names = unique_entities(items)
    vectors, dim = _encode_texts(names, config)
    entries = {name: vectors[i] for i, name in enumerate(names)}
    write_emb1(dim, entries, config.output)
    _write_manifest(config, "entities", config.text_encoder, dim, len(entries), [],
                    {"pooling": config.pooling, "max_length": config.max_length})
    return len(entries)


def extract_images(config: ExtractorConfig) -> int:
    """One row per meme id; unreadable images are skipped and listed."""
    items = load_memes(config.dataset)
    root = Path(config.image_root) if config.image_root else config.dataset.parent
    model, size, dim = load_image_encoder(
        config.image_encoder, config.image_kind, config.device, config.seed
    )
    loaded: list[tuple[str, torch.Tensor]] = []
    skipped: list[dict] = []
    for item in items:
        try:
            loaded.append((item.id, preprocess_image(root / item.image, size)))
        except (OSError, ValueError) as exc:
            skipped.append({"id": item.id, "image": item.image, "reason": str(exc)})
    entries: dict[str, np.ndarray] = {}
    with torch.no_grad():
        for start in range(0, len(loaded), config.batch_size):
            batch = loaded[start : start + config.batch_size]
            pixels = torch.stack([t for _, t in batch]).to(config.device)
            if config.image_kind == "vit":
                out = model(pixel_values=pixels)
                pooled = (
                    out.pooler_output
                    if getattr(out, "pooler_output", None) is not None
                    else out.last_hidden_state[:, 0]
                )
            else:
                pooled = model(pixels)
            for (meme_id, _), vec in zip(batch, pooled.cpu().double().numpy()):
                entries[meme_id] = vec
    write_emb1(dim, entries, config.output)
    _write_manifest(
        config, "images", config.image_encoder, dim, len(entries), skipped,
        {
            "image_kind": config.image_kind,
            "preprocessing": f"shorter-side resize + center crop to {size}, [-1, 1]",
        },
    )
    if len(entries) + len(skipped) != len(items):
        raise ExtractorError("row count plus skip count does not match dataset size")
    return len(entries)
