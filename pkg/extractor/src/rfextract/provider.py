"""Masked-language-model word substitution over line-delimited JSON.

Requests arrive one JSON object per stdin line with ``text``,
``protected_span``, ``p``, and ``seed``; the reply is ``{"text": ...}``.
Each eligible word is masked with probability ``p`` and replaced by the
top in-context prediction that differs from it. Words belonging to an
occurrence of the protected span are never touched. A malformed line
produces ``{"error": ...}`` and the loop continues.
"""

from __future__ import annotations

import json
import re
import sys

import numpy as np
import torch

from rfextract.encoders import load_masked_lm

_WORD_RE = re.compile(r"\S+")
_EDGE_PUNCT = "!\"#$%&'()*+,./:;<=>?@[\\]^_`{|}~-"


def _core(chunk: str) -> str:
    return chunk.strip(_EDGE_PUNCT)


def _protected_positions(chunks: list[str], span: str) -> set[int]:
    span_words = [_core(w).lower() for w in span.split() if _core(w)]
    if not span_words:
        return set()
    cores = [_core(c).lower() for c in chunks]
    protected: set[int] = set()
    n = len(span_words)
    for start in range(len(cores) - n + 1):
        if cores[start : start + n] == span_words:
            protected.update(range(start, start + n))
    return protected


class Substituter:
    def __init__(self, model_name: str, device: str = "cpu", top_k: int = 20):
        self.tokenizer, self.model = load_masked_lm(model_name, device)
        self.device = device
        self.top_k = top_k

    def _predict_word(self, words: list[str], position: int) -> str | None:
        masked = list(words)
        masked[position] = self.tokenizer.mask_token
        enc = self.tokenizer(
            " ".join(masked), return_tensors="pt", truncation=True, max_length=512
        ).to(self.device)
        mask_positions = (
            enc["input_ids"][0] == self.tokenizer.mask_token_id
        ).nonzero(as_tuple=True)[0]
        if len(mask_positions) == 0:
            return None
        with torch.no_grad():
            logits = self.model(**enc).logits[0, mask_positions[0]]
        original = words[position].lower()
        for token_id in torch.argsort(logits, descending=True)[: self.top_k].tolist():
            candidate = self.tokenizer.convert_ids_to_tokens(token_id)
            if candidate in self.tokenizer.all_special_tokens:
                continue
            if candidate.startswith("##") or not candidate.isalpha():
                continue
            if candidate.lower() != original:
                return candidate
        return None

    def substitute(self, text: str, protected_span: str, p: float, seed: int) -> str:
        if p <= 0:
            return text
        matches = list(_WORD_RE.finditer(text))
        chunks = [m.group(0) for m in matches]
        protected = _protected_positions(chunks, protected_span)
        cores = [_core(c) for c in chunks]
        rng = np.random.default_rng(seed)
        replacements: dict[int, str] = {}
        for i, chunk in enumerate(chunks):
            if i in protected or not cores[i]:
                continue
            if rng.random() >= p:
                continue
            replacement = self._predict_word(cores, i)
            if replacement is None:
                continue
            start = chunk.index(cores[i])
            replacements[i] = chunk[:start] + replacement + chunk[start + len(cores[i]):]
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


def handle_line(line: str, substituter: Substituter) -> dict:
    try:
        request = json.loads(line)
        text = request["text"]
        protected = request.get("protected_span", "")
        p = float(request.get("p", 0.0))
        seed = int(request.get("seed", 0))
        if not isinstance(text, str):
            raise TypeError("'text' must be a string")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        return {"error": f"bad request: {exc}"}
    try:
        return {"text": substituter.substitute(text, protected, p, seed)}
    except Exception as exc:  # noqa: BLE001 - the loop must survive any request
        return {"error": f"substitution failed: {exc}"}


def run_provider(model_name: str, device: str = "cpu",
                 stdin=None, stdout=None) -> None:
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    substituter = Substituter(model_name, device)
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(json.dumps(handle_line(line, substituter)) + "\n")
        stdout.flush()
