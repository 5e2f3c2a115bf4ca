"""Meme <-> BIO-tagged token sequences.

The sequence-labeling formulation views a meme's OCR text as one token
stream. Tokens covered by an annotated entity get B-ROLE / I-ROLE tags;
everything else is O. Entities absent from the text (implicit entities)
are appended after the final text token with their role tags. The
"entities only" variant keeps just the concatenated entity spans.

Note that OTHER is a real BIO class here (B-OTHER/I-OTHER): "other" is an
annotated role, distinct from non-entity O tokens.

CoNLL file format: one ``token<TAB>tag`` line per token (optionally with
extra annotation columns between token and tag), blank line between
sequences, and an optional ``# id: <meme id>`` comment before a sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from rolefuse.data_model import MemeRecord, Role

# Characters detached from word edges during tokenization. Hyphens and
# apostrophes are edge-only: "COVID-19" and "don't" stay single tokens.
EDGE_PUNCTUATION = set("!\"#$%&'()*+,./:;<=>?@[\\]^_`{|}~-–—‘’“”")

O_TAG = "O"

ALL_TAGS = tuple(
    [O_TAG] + [f"{p}-{role.name}" for role in Role for p in ("B", "I")]
)


class BioFormatError(ValueError):
    """Raised for malformed BIO tag sequences or CoNLL files."""


def tokenize(text: str) -> list[str]:
    """Whitespace split, then peel punctuation off token edges."""
    tokens: list[str] = []
    for chunk in text.split():
        leading: list[str] = []
        trailing: list[str] = []
        while chunk and chunk[0] in EDGE_PUNCTUATION:
            leading.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in EDGE_PUNCTUATION:
            trailing.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(leading)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trailing))
    return tokens


def _validate_bio(tags: Iterable[str]) -> None:
    prev = O_TAG
    for pos, tag in enumerate(tags):
        if tag not in ALL_TAGS:
            raise BioFormatError(f"position {pos}: unknown tag {tag!r}")
        if tag.startswith("I-"):
            label = tag[2:]
            if prev == O_TAG or prev[2:] != label:
                raise BioFormatError(
                    f"position {pos}: {tag} cannot follow {prev}"
                )
        prev = tag


@dataclass(frozen=True)
class TaggedSequence:
    """A token stream with aligned BIO tags.

    ``columns`` holds optional pre-annotated per-token columns (e.g.
    part-of-speech) read from extra CoNLL fields; it is never computed here.
    """

    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    meme_id: str = ""
    columns: tuple[tuple[str, ...], ...] = field(default=())

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise BioFormatError(
                f"sequence {self.meme_id!r}: {len(self.tokens)} tokens vs "
                f"{len(self.tags)} tags"
            )
        _validate_bio(self.tags)
        if self.columns and len(self.columns) != len(self.tokens):
            raise BioFormatError(
                f"sequence {self.meme_id!r}: annotation columns misaligned"
            )


def _find_span(
    haystack_lower: list[str], needle_lower: list[str], taken: list[bool]
) -> int | None:
    """First start index of an untagged occurrence of needle, else None."""
    n = len(needle_lower)
    if n == 0:
        return None
    for start in range(len(haystack_lower) - n + 1):
        if any(taken[start : start + n]):
            continue
        if haystack_lower[start : start + n] == needle_lower:
            return start
    return None


def to_bio(record: MemeRecord, mode: str = "all_tokens") -> TaggedSequence:
    """Convert one meme to a tagged sequence.

    ``all_tokens``: the full OCR token stream; entity spans are matched
    longest-first, left-to-right, case-insensitively, and never overwrite an
    already-tagged token. Entities with no taggable occurrence are appended
    at the end with their role tags.

    ``entities_only``: just the concatenated entity token spans.
    """
    if mode not in ("all_tokens", "entities_only"):
        raise ValueError(f"unknown mode {mode!r}")

    entity_tokens = {
        name: tokenize(name) for name, _ in record.annotations
    }

    if mode == "entities_only":
        tokens: list[str] = []
        tags: list[str] = []
        for name, role in record.annotations:
            span = entity_tokens[name]
            if not span:
                continue
            tokens.extend(span)
            tags.extend([f"B-{role.name}"] + [f"I-{role.name}"] * (len(span) - 1))
        return TaggedSequence(tuple(tokens), tuple(tags), meme_id=record.id)

    tokens = tokenize(record.ocr_text)
    lower = [t.lower() for t in tokens]
    tags = [O_TAG] * len(tokens)
    taken = [False] * len(tokens)

    # Longest entity first so that e.g. "Vladimir Putin" beats "Putin";
    # equal lengths fall back to annotation order.
    order = sorted(
        range(len(record.annotations)),
        key=lambda i: (-len(entity_tokens[record.annotations[i][0]]), i),
    )
    appended: list[int] = []
    for i in order:
        name, role = record.annotations[i]
        span = [t.lower() for t in entity_tokens[name]]
        start = _find_span(lower, span, taken)
        if start is None:
            appended.append(i)
            continue
        tags[start] = f"B-{role.name}"
        for k in range(start + 1, start + len(span)):
            tags[k] = f"I-{role.name}"
        for k in range(start, start + len(span)):
            taken[k] = True

    for i in sorted(appended):
        name, role = record.annotations[i]
        span = entity_tokens[name]
        if not span:
            continue
        tokens = tokens + span
        tags = tags + [f"B-{role.name}"] + [f"I-{role.name}"] * (len(span) - 1)

    return TaggedSequence(tuple(tokens), tuple(tags), meme_id=record.id)


def from_bio(seq: TaggedSequence) -> list[tuple[tuple[str, ...], Role]]:
    """Extract maximal B/I spans in order, as (tokens, role) pairs."""
    spans: list[tuple[tuple[str, ...], Role]] = []
    current: list[str] = []
    current_role: Role | None = None
    for pos, (token, tag) in enumerate(zip(seq.tokens, seq.tags)):
        if tag == O_TAG:
            if current_role is not None:
                spans.append((tuple(current), current_role))
                current, current_role = [], None
        elif tag.startswith("B-"):
            if current_role is not None:
                spans.append((tuple(current), current_role))
            current_role = Role[tag[2:]]
            current = [token]
        elif tag.startswith("I-"):
            if current_role is None or current_role.name != tag[2:]:
                raise BioFormatError(f"position {pos}: dangling {tag}")
            current.append(token)
        else:
            raise BioFormatError(f"position {pos}: unknown tag {tag!r}")
    if current_role is not None:
        spans.append((tuple(current), current_role))
    return spans


def write_conll(sequences: Iterable[TaggedSequence], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        first = True
        for seq in sequences:
            if not first:
                fh.write("\n")
            first = False
            if seq.meme_id:
                fh.write(f"# id: {seq.meme_id}\n")
            for i, (token, tag) in enumerate(zip(seq.tokens, seq.tags)):
                cols = seq.columns[i] if seq.columns else ()
                fh.write("\t".join([token, *cols, tag]) + "\n")


def read_conll(path: str | Path) -> list[TaggedSequence]:
    path = Path(path)
    sequences: list[TaggedSequence] = []
    tokens: list[str] = []
    tags: list[str] = []
    columns: list[tuple[str, ...]] = []
    meme_id = ""

    def flush():
        nonlocal tokens, tags, columns, meme_id
        if tokens:
            cols = tuple(columns) if any(columns) else ()
            sequences.append(TaggedSequence(tuple(tokens), tuple(tags), meme_id, cols))
        tokens, tags, columns, meme_id = [], [], [], ""

    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("# id:"):
                meme_id = line[len("# id:") :].strip()
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise BioFormatError(
                    f"{path}:{line_no}: expected token<TAB>tag, got {line!r}"
                )
            tokens.append(parts[0])
            tags.append(parts[-1])
            columns.append(tuple(parts[1:-1]))
    flush()
    return sequences
