"""Class-balanced text augmentation for classification instances.

Two substitution backends: a synonym lexicon (TSV file, bundled default)
and an external contextual provider process speaking line-delimited JSON
over stdin/stdout (request ``{"text", "protected_span", "p", "seed"}``,
response ``{"text"}``). ``balance`` adds per-role copy counts of augmented
instances on top of the originals; tokens belonging to the target entity
are never replaced.
"""

from __future__ import annotations

import hashlib
import json
import re
import subprocess
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from rolefuse.data_model import ROLES, EntityInstance, Role

_WORD_RE = re.compile(r"\S+")
_EDGE_PUNCT = "!\"#$%&'()*+,./:;<=>?@[\\]^_`{|}~-"

MODES = ("lexicon", "contextual", "mix")


class AugmentError(ValueError):
    """Raised for bad lexicons or policies."""


class ProviderError(RuntimeError):
    """Raised when the external substitution provider fails or misbehaves."""


@dataclass(frozen=True)
class AugmentPolicy:
    """Per-role additional-copy counts plus the substitution fraction.

    The defaults mirror the class-balancing scheme: 6 extra copies per
    hero instance, 2 per villain, 3 per victim, none for other. Counts are
    additional copies, so a multiplier of 6 yields 7x that role in total.
    """

    copies: dict[Role, int] = field(
        default_factory=lambda: {Role.HERO: 6, Role.VILLAIN: 2, Role.VICTIM: 3, Role.OTHER: 0}
    )
    p: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for role in ROLES:
            if self.copies.get(role, 0) < 0:
                raise AugmentError(f"negative copy count for {role.value}")
        if not 0 < self.p <= 1:
            raise AugmentError(f"substitution fraction must be in (0, 1], got {self.p}")


def load_lexicon(path: str | Path) -> dict[str, list[str]]:
    """TSV lexicon: token TAB synonym[,synonym...], one entry per line."""
    lexicon: dict[str, list[str]] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise AugmentError(f"{path}:{line_no}: expected token<TAB>synonyms")
        token = parts[0].strip().lower()
        synonyms = [s.strip() for s in parts[1].split(",") if s.strip()]
        synonyms = [s for s in synonyms if s.lower() != token]
        if not token or not synonyms:
            raise AugmentError(f"{path}:{line_no}: empty token or synonym list")
        lexicon[token] = synonyms
    return lexicon


def default_lexicon() -> dict[str, list[str]]:
    with resources.as_file(
        resources.files("rolefuse").joinpath("data/synonyms.tsv")
    ) as p:
        return load_lexicon(p)


def default_stopwords() -> frozenset[str]:
    text = (
        resources.files("rolefuse").joinpath("data/stopwords.txt").read_text("utf-8")
    )
    return frozenset(w.strip().lower() for w in text.split() if w.strip())


def _core(chunk: str) -> str:
    return chunk.strip(_EDGE_PUNCT)


def _protected_positions(chunks: list[str], entity_name: str) -> set[int]:
    """Indices of every contiguous occurrence of the entity's words."""
    entity_words = [_core(w).lower() for w in entity_name.split() if _core(w)]
    if not entity_words:
        return set()
    cores = [_core(c).lower() for c in chunks]
    protected: set[int] = set()
    n = len(entity_words)
    for start in range(len(cores) - n + 1):
        if cores[start : start + n] == entity_words:
            protected.update(range(start, start + n))
    return protected


def substitute(
    text: str,
    entity_name: str,
    lexicon: dict[str, list[str]],
    p: float,
    rng: np.random.Generator,
    stopwords: frozenset[str] | None = None,
) -> str:
    """Replace eligible words with a uniformly chosen synonym, prob. ``p``.

    A word is eligible when its lowercased core (edge punctuation
    stripped) is in the lexicon, not a stopword, and not part of an
    occurrence of ``entity_name``. Whitespace and punctuation around
    untouched words are preserved exactly.
    """
    stopwords = default_stopwords() if stopwords is None else stopwords
    matches = list(_WORD_RE.finditer(text))
    chunks = [m.group(0) for m in matches]
    protected = _protected_positions(chunks, entity_name)
    replacements: dict[int, str] = {}
    for i, chunk in enumerate(chunks):
        core = _core(chunk)
        key = core.lower()
        if i in protected or not core or key in stopwords or key not in lexicon:
            continue
        if rng.random() < p:
            synonym = lexicon[key][rng.integers(len(lexicon[key]))]
            start = chunk.index(core)
            replacements[i] = chunk[:start] + synonym + chunk[start + len(core):]
    if not replacements:
        return text
    out = []
    last = 0
    for i, m in enumerate(matches):
        out.append(text[last : m.start()])
        out.append(replacements.get(i, m.group(0)))
        last = m.end()
    out.append(text[last:])
    return "".join(out)


class SubstitutionProvider:
    """Client for a spawned line-JSON substitution provider process."""

    def __init__(self, argv: Sequence[str]):
        try:
            self._proc = subprocess.Popen(
                list(argv),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProviderError(f"cannot start provider {argv!r}: {exc}") from exc

    def request(self, text: str, protected_span: str, p: float, seed: int) -> str:
        payload = json.dumps(
            {"text": text, "protected_span": protected_span, "p": p, "seed": seed}
        )
        try:
            self._proc.stdin.write(payload + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ProviderError(f"provider pipe failed: {exc}") from exc
        if not line:
            raise ProviderError("provider closed its output stream")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProviderError(f"malformed provider response: {line!r}") from exc
        if "error" in response:
            raise ProviderError(f"provider error: {response['error']}")
        if not isinstance(response.get("text"), str):
            raise ProviderError(f"provider response missing 'text': {line!r}")
        return response["text"]

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *_exc):
        self.close()


def contextual_substitute(
    text: str,
    entity_name: str,
    provider: SubstitutionProvider,
    p: float,
    seed: int,
) -> str:
    """Delegate substitution to the provider, then re-protect the entity.

    If the provider returns the same number of words, any word at a
    protected position is restored from the input. A response that drops
    the entity entirely is rejected.
    """
    result = provider.request(text, entity_name, p, seed)
    in_chunks = [m.group(0) for m in _WORD_RE.finditer(text)]
    protected = _protected_positions(in_chunks, entity_name)
    if not protected:
        return result
    out_matches = list(_WORD_RE.finditer(result))
    if len(out_matches) == len(in_chunks):
        pieces = []
        last = 0
        for i, m in enumerate(out_matches):
            pieces.append(result[last : m.start()])
            pieces.append(in_chunks[i] if i in protected else m.group(0))
            last = m.end()
        pieces.append(result[last:])
        return "".join(pieces)
    out_chunks = [m.group(0) for m in out_matches]
    if not _protected_positions(out_chunks, entity_name):
        raise ProviderError("provider removed the protected entity span")
    return result


def _copy_rng_seed(base_seed: int, meme_id: str, entity: str, copy_idx: int) -> int:
    digest = hashlib.sha256(
        f"{base_seed}|{meme_id}|{entity}|{copy_idx}".encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "little")


def balance(
    instances: Sequence[EntityInstance],
    lexicon: dict[str, list[str]],
    policy: AugmentPolicy,
    mode: str = "lexicon",
    provider: SubstitutionProvider | None = None,
    stopwords: frozenset[str] | None = None,
) -> list[EntityInstance]:
    """Originals plus per-role augmented copies, each from its own rng stream.

    ``mode`` is "lexicon", "contextual", or "mix" (alternates lexicon and
    contextual per copy index). Copies keep the source role, carry
    ``augmented=True``, a derived meme id, and the source meme id so image
    embeddings still resolve.
    """
    if mode not in MODES:
        raise AugmentError(f"unknown augmentation mode {mode!r}")
    if mode in ("contextual", "mix") and provider is None:
        raise AugmentError(f"mode {mode!r} requires a substitution provider")
    out: list[EntityInstance] = []
    for inst in instances:
        out.append(inst)
        for k in range(policy.copies.get(inst.role, 0)):
            seed = _copy_rng_seed(policy.seed, inst.meme_id, inst.entity_name, k)
            use_contextual = mode == "contextual" or (mode == "mix" and k % 2 == 1)
            if use_contextual:
                new_text = contextual_substitute(
                    inst.ocr_text, inst.entity_name, provider, policy.p, seed
                )
            else:
                rng = np.random.default_rng(seed)
                new_text = substitute(
                    inst.ocr_text, inst.entity_name, lexicon, policy.p, rng, stopwords
                )
            out.append(
                EntityInstance(
                    meme_id=f"{inst.meme_id}~aug{k}",
                    entity_name=inst.entity_name,
                    ocr_text=new_text,
                    image_ref=inst.image_ref,
                    role=inst.role,
                    augmented=True,
                    source_meme_id=inst.image_key,
                )
            )
    return out
