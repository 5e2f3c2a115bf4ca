"""Synthetic data generators used by the test and acceptance suites.

Committed in-repo so the training sanity checks (cluster separability,
determinism) run without any external corpus or pretrained encoders.
"""

from __future__ import annotations

import numpy as np

from rolefuse.data_model import ROLES, EntityInstance, MemeRecord, Role
from rolefuse.embeddings import EmbeddingTable
from rolefuse.fusion import EmbeddingSources


def make_cluster_data(
    n_instances: int = 400,
    dim: int = 16,
    seed: int = 7,
    spread: float = 0.2,
) -> tuple[list[EntityInstance], EmbeddingSources]:
    """Linearly separable 4-Gaussian-cluster embeddings, one per role.

    Entity vectors carry the class signal (cluster center + noise); text
    vectors are uninformative noise. Suitable for the entity+text setting.
    """
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(dim, 4)))
    centers = 3.0 * basis.T  # (4, dim), orthonormal directions scaled apart
    instances: list[EntityInstance] = []
    entity_entries: dict[str, np.ndarray] = {}
    text_entries: dict[str, np.ndarray] = {}
    for i in range(n_instances):
        role = ROLES[i % 4]
        meme_id = f"syn{i}"
        entity = f"entity{i}"
        entity_entries[entity] = centers[role.index] + spread * rng.normal(size=dim)
        text_entries[meme_id] = 0.1 * rng.normal(size=dim)
        instances.append(
            EntityInstance(
                meme_id=meme_id,
                entity_name=entity,
                ocr_text=f"synthetic text {i}",
                image_ref=f"{meme_id}.png",
                role=role,
            )
        )
    tables = EmbeddingSources(
        entity=EmbeddingTable(dim, entity_entries, name="entity"),
        text=EmbeddingTable(dim, text_entries, name="text"),
    )
    return instances, tables


_WORDS = (
    "the quick brown fox jumps over lazy dog while nobody watches and "
    "everyone keeps talking about old news from distant lands"
).split()

_NAMES = (
    "alice bob carol dave erin frank grace heidi ivan judy mallory niaj "
    "olivia peggy rupert sybil trent victor walter wendy"
).split()


def make_synthetic_corpus(
    n_memes: int = 500, seed: int = 11
) -> list[MemeRecord]:
    """Random memes with explicit, implicit, and duplicated entity mentions.

    Exercises the BIO round trip: entities of 1-2 tokens, some absent from
    the text (implicit), some mentioned more than once.
    """
    rng = np.random.default_rng(seed)
    records: list[MemeRecord] = []
    for i in range(n_memes):
        n_entities = int(rng.integers(1, 5))
        entities: list[tuple[str, Role]] = []
        used: set[str] = set()
        for _ in range(n_entities):
            n_tok = int(rng.integers(1, 3))
            name = " ".join(
                _NAMES[int(rng.integers(len(_NAMES)))].capitalize()
                for _ in range(n_tok)
            )
            if name.lower() in used:
                continue
            used.add(name.lower())
            entities.append((name, ROLES[int(rng.integers(4))]))
        words = [_WORDS[int(rng.integers(len(_WORDS)))] for _ in range(int(rng.integers(5, 20)))]
        # Embed a random subset of entities into the text; duplicate some
        # mentions; the rest stay implicit.
        for name, _ in entities:
            if rng.random() < 0.7:
                mentions = 1 + int(rng.random() < 0.3)
                for _ in range(mentions):
                    pos = int(rng.integers(len(words) + 1))
                    words[pos:pos] = name.split()
        records.append(
            MemeRecord(
                id=f"meme{i}",
                image_ref=f"img/meme{i}.png",
                ocr_text=" ".join(words),
                annotations=tuple(entities),
            )
        )
    return records
