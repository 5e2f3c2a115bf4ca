"""Linear-chain CRF trainer and tagger over BIO sequences.

Scores decompose into per-position emission features and adjacent-label
transitions. The raw-score recursions (:func:`log_partition_scores`,
:func:`viterbi_scores`, :func:`forward_backward`) take plain emission/
transition matrices so they can be checked against exhaustive enumeration
independently of the feature machinery.

Training maximizes the L2-regularized conditional log-likelihood by
full-batch gradient ascent with a backtracking line search; the analytic
gradient is empirical feature counts minus expected counts from
forward-backward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from rolefuse.conll import TaggedSequence

MODEL_FORMAT_VERSION = 1

DEFAULT_TEMPLATES = (
    "bias",
    "token",
    "lower",
    "length_bucket",
    "trigrams",
    "digit",
    "special",
    "shape",
    "in_vocab",
    "in_names",
    "prev_token",
    "next_token",
    "columns",
)

# Token-length buckets used by the length_bucket template.
LENGTH_BUCKETS = ((1, "1"), (2, "2"), (3, "3"), (6, "4-6"))


class CrfError(ValueError):
    """Raised for invalid CRF inputs."""


class CrfNumericError(CrfError):
    """Raised when training hits a non-finite objective."""


def _length_bucket(n: int) -> str:
    for upper, name in LENGTH_BUCKETS:
        if n <= upper:
            return name
    return "7+"


def _shape(token: str) -> str:
    out = []
    for ch in token:
        if ch.isupper():
            out.append("X")
        elif ch.islower():
            out.append("x")
        elif ch.isdigit():
            out.append("d")
        else:
            out.append("p")
    return "".join(out)


@dataclass(frozen=True)
class FeatureSet:
    """Which feature templates are active, plus their lookup resources.

    ``vocabulary`` is filled from the training tokens by :func:`train_crf`
    when empty; ``name_list`` is user-supplied. ``annotation_columns`` names
    the optional extra CoNLL columns (e.g. part-of-speech) consumed as-is;
    such annotations are never computed here.
    """

    templates: tuple[str, ...] = DEFAULT_TEMPLATES
    vocabulary: frozenset[str] = frozenset()
    name_list: frozenset[str] = frozenset()
    annotation_columns: tuple[str, ...] = ()

    def __post_init__(self):
        unknown = set(self.templates) - set(DEFAULT_TEMPLATES)
        if unknown:
            raise CrfError(f"unknown feature templates: {sorted(unknown)}")


def extract_features(
    feature_set: FeatureSet,
    tokens: Sequence[str],
    position: int,
    columns: Sequence[Sequence[str]] | None = None,
) -> set[str]:
    """Feature strings active at one position; deterministic."""
    if not 0 <= position < len(tokens):
        raise CrfError(f"position {position} out of range for {len(tokens)} tokens")
    token = tokens[position]
    lower = token.lower()
    active = set(feature_set.templates)
    feats: set[str] = set()
    if "bias" in active:
        feats.add("bias")
    if "token" in active:
        feats.add(f"w={token}")
    if "lower" in active:
        feats.add(f"wl={lower}")
    if "length_bucket" in active:
        feats.add(f"len={_length_bucket(len(token))}")
    if "trigrams" in active:
        for i in range(len(lower) - 2):
            feats.add(f"tri={lower[i:i + 3]}")
    if "digit" in active and any(ch.isdigit() for ch in token):
        feats.add("has_digit")
    if "special" in active and any(not ch.isalnum() for ch in token):
        feats.add("has_special")
    if "shape" in active:
        feats.add(f"shape={_shape(token)}")
    if "in_vocab" in active and lower in feature_set.vocabulary:
        feats.add("in_vocab")
    if "in_names" in active and lower in feature_set.name_list:
        feats.add("in_names")
    if "prev_token" in active:
        feats.add(f"w[-1]={tokens[position - 1]}" if position > 0 else "w[-1]=<BOS>")
    if "next_token" in active:
        feats.add(
            f"w[+1]={tokens[position + 1]}"
            if position + 1 < len(tokens)
            else "w[+1]=<EOS>"
        )
    if "columns" in active and columns is not None and position < len(columns):
        names = feature_set.annotation_columns
        for i, value in enumerate(columns[position]):
            col_name = names[i] if i < len(names) else f"col{i}"
            feats.add(f"{col_name}={value}")
    return feats


# ---------------------------------------------------------------------------
# Raw-score recursions (oracle-checkable, feature-free)
# ---------------------------------------------------------------------------


def _logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis) if axis is not None else out.item()


def log_partition_scores(emissions: np.ndarray, transitions: np.ndarray) -> float:
    """log Z via the forward recursion in log-space.

    ``emissions`` is (n, L); ``transitions`` is (L, L) with [prev, next].
    """
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[0] == 0:
        raise CrfError("log_partition needs a nonempty (n, L) emission matrix")
    alpha = emissions[0].copy()
    for t in range(1, emissions.shape[0]):
        alpha = emissions[t] + _logsumexp(alpha[:, None] + transitions, axis=0)
    return float(_logsumexp(alpha))


def log_partition_backward_scores(
    emissions: np.ndarray, transitions: np.ndarray
) -> float:
    """log Z via the backward recursion; must equal the forward value."""
    emissions = np.asarray(emissions, dtype=np.float64)
    n, L = emissions.shape
    beta = np.zeros(L)
    for t in range(n - 2, -1, -1):
        beta = _logsumexp(transitions + (emissions[t + 1] + beta)[None, :], axis=1)
    return float(_logsumexp(emissions[0] + beta))


def forward_backward(
    emissions: np.ndarray, transitions: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """All forward/backward messages and log Z for one sequence."""
    emissions = np.asarray(emissions, dtype=np.float64)
    n, L = emissions.shape
    alpha = np.empty((n, L))
    alpha[0] = emissions[0]
    for t in range(1, n):
        alpha[t] = emissions[t] + _logsumexp(alpha[t - 1][:, None] + transitions, axis=0)
    beta = np.empty((n, L))
    beta[n - 1] = 0.0
    for t in range(n - 2, -1, -1):
        beta[t] = _logsumexp(transitions + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return alpha, beta, float(_logsumexp(alpha[n - 1]))


def posterior_marginals(
    emissions: np.ndarray, transitions: np.ndarray
) -> np.ndarray:
    """(n, L) per-position label posteriors; each row sums to 1."""
    alpha, beta, log_z = forward_backward(emissions, transitions)
    return np.exp(alpha + beta - log_z)


def viterbi_scores(
    emissions: np.ndarray, transitions: np.ndarray
) -> tuple[list[int], float]:
    """Best label index sequence and its score.

    Ties at each backpointer break toward the smallest label index
    (np.argmax returns the first maximum).
    """
    emissions = np.asarray(emissions, dtype=np.float64)
    n, L = emissions.shape
    if n == 0:
        raise CrfError("viterbi needs a nonempty sequence")
    delta = emissions[0].copy()
    back = np.empty((n, L), dtype=np.int64)
    for t in range(1, n):
        scores = delta[:, None] + transitions
        back[t] = np.argmax(scores, axis=0)
        delta = emissions[t] + np.max(scores, axis=0)
    best_last = int(np.argmax(delta))
    best_score = float(delta[best_last])
    path = [best_last]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path, best_score


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass
class CrfModel:
    """Emission weights (feature, label), transition weights (label, label)."""

    labels: tuple[str, ...]
    feature_set: FeatureSet
    feature_index: dict[str, int]
    emission_weights: np.ndarray  # (F, L)
    transition_weights: np.ndarray  # (L, L)
    l2: float = 1.0

    def __post_init__(self):
        F, L = len(self.feature_index), len(self.labels)
        if self.emission_weights.shape != (F, L):
            raise CrfError(
                f"emission weights shape {self.emission_weights.shape} != ({F}, {L})"
            )
        if self.transition_weights.shape != (L, L):
            raise CrfError(
                f"transition weights shape {self.transition_weights.shape} != ({L}, {L})"
            )
        if not (
            np.all(np.isfinite(self.emission_weights))
            and np.all(np.isfinite(self.transition_weights))
        ):
            raise CrfError("non-finite model weights")

    def position_features(
        self, tokens: Sequence[str], columns=None
    ) -> list[list[int]]:
        """Known-feature index lists, one per position."""
        out = []
        for pos in range(len(tokens)):
            feats = extract_features(self.feature_set, tokens, pos, columns)
            out.append(sorted(self.feature_index[f] for f in feats if f in self.feature_index))
        return out

    def emission_matrix(self, tokens: Sequence[str], columns=None) -> np.ndarray:
        feats = self.position_features(tokens, columns)
        E = np.zeros((len(tokens), len(self.labels)))
        for t, idxs in enumerate(feats):
            if idxs:
                E[t] = self.emission_weights[idxs].sum(axis=0)
        return E

    def save(self, path: str | Path) -> None:
        features = [None] * len(self.feature_index)
        for feat, idx in self.feature_index.items():
            features[idx] = feat
        payload = {
            "format": "rolefuse-crf",
            "version": MODEL_FORMAT_VERSION,
            "labels": list(self.labels),
            "l2": self.l2,
            "feature_set": {
                "templates": list(self.feature_set.templates),
                "vocabulary": sorted(self.feature_set.vocabulary),
                "name_list": sorted(self.feature_set.name_list),
                "annotation_columns": list(self.feature_set.annotation_columns),
            },
            "features": features,
            "emission_weights": self.emission_weights.tolist(),
            "transition_weights": self.transition_weights.tolist(),
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CrfModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != "rolefuse-crf":
            raise CrfError(f"{path}: not a CRF model file")
        if payload.get("version") != MODEL_FORMAT_VERSION:
            raise CrfError(f"{path}: unsupported model version {payload.get('version')}")
        fs = payload["feature_set"]
        feature_set = FeatureSet(
            templates=tuple(fs["templates"]),
            vocabulary=frozenset(fs["vocabulary"]),
            name_list=frozenset(fs["name_list"]),
            annotation_columns=tuple(fs["annotation_columns"]),
        )
        return cls(
            labels=tuple(payload["labels"]),
            feature_set=feature_set,
            feature_index={f: i for i, f in enumerate(payload["features"])},
            emission_weights=np.asarray(payload["emission_weights"], dtype=np.float64),
            transition_weights=np.asarray(payload["transition_weights"], dtype=np.float64),
            l2=float(payload["l2"]),
        )


def log_partition(model: CrfModel, tokens: Sequence[str], columns=None) -> float:
    if len(tokens) == 0:
        raise CrfError("log_partition of an empty sequence")
    return log_partition_scores(
        model.emission_matrix(tokens, columns), model.transition_weights
    )


def viterbi(model: CrfModel, tokens: Sequence[str], columns=None) -> list[str]:
    if len(tokens) == 0:
        raise CrfError("viterbi on an empty sequence")
    path, _ = viterbi_scores(
        model.emission_matrix(tokens, columns), model.transition_weights
    )
    return [model.labels[i] for i in path]


def tag_sequence(model: CrfModel, seq: TaggedSequence) -> TaggedSequence:
    """Re-tag one sequence with Viterbi, keeping tokens and columns."""
    tags = viterbi(model, seq.tokens, seq.columns or None)
    return TaggedSequence(seq.tokens, tuple(tags), seq.meme_id, seq.columns)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class _Prepared:
    feats: list[list[int]]  # feature indices per position
    gold: np.ndarray  # label indices, (n,)


def _prepare(
    data: Sequence[TaggedSequence],
    feature_set: FeatureSet,
    labels: tuple[str, ...],
    feature_index: dict[str, int],
) -> list[_Prepared]:
    label_to_idx = {lab: i for i, lab in enumerate(labels)}
    prepared = []
    for seq in data:
        feats = []
        for pos in range(len(seq.tokens)):
            fs = extract_features(feature_set, seq.tokens, pos, seq.columns or None)
            feats.append(sorted(feature_index[f] for f in fs if f in feature_index))
        gold = np.array([label_to_idx[t] for t in seq.tags], dtype=np.int64)
        prepared.append(_Prepared(feats, gold))
    return prepared


def _objective_and_gradient(
    prepared: list[_Prepared],
    emission_w: np.ndarray,
    transition_w: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """L2-regularized conditional log-likelihood and its gradient."""
    F, L = emission_w.shape
    grad_e = np.zeros((F, L))
    grad_t = np.zeros((L, L))
    ll = 0.0
    for item in prepared:
        n = len(item.feats)
        E = np.zeros((n, L))
        for t, idxs in enumerate(item.feats):
            if idxs:
                E[t] = emission_w[idxs].sum(axis=0)
        alpha, beta, log_z = forward_backward(E, transition_w)
        gold = item.gold
        # Gold-path score.
        ll += float(E[np.arange(n), gold].sum())
        ll += float(transition_w[gold[:-1], gold[1:]].sum()) if n > 1 else 0.0
        ll -= log_z
        # Emission gradient: empirical minus expected counts.
        marg = np.exp(alpha + beta - log_z)
        delta = -marg
        delta[np.arange(n), gold] += 1.0
        for t, idxs in enumerate(item.feats):
            if idxs:
                grad_e[idxs] += delta[t]
        # Transition gradient via pairwise marginals.
        for t in range(1, n):
            pair = np.exp(
                alpha[t - 1][:, None] + transition_w + (E[t] + beta[t])[None, :] - log_z
            )
            grad_t -= pair
            grad_t[gold[t - 1], gold[t]] += 1.0
    ll -= 0.5 * l2 * (float(np.sum(emission_w**2)) + float(np.sum(transition_w**2)))
    grad_e -= l2 * emission_w
    grad_t -= l2 * transition_w
    return ll, grad_e, grad_t


def crf_objective(model: CrfModel, data: Sequence[TaggedSequence]) -> float:
    """Regularized conditional log-likelihood of ``data`` under ``model``."""
    prepared = _prepare(data, model.feature_set, model.labels, model.feature_index)
    ll, _, _ = _objective_and_gradient(
        prepared, model.emission_weights, model.transition_weights, model.l2
    )
    return ll


def train_crf(
    data: Sequence[TaggedSequence],
    feature_set: FeatureSet | None = None,
    l2: float = 1.0,
    max_iterations: int = 100,
    seed: int = 0,
    tol: float = 1e-6,
) -> tuple[CrfModel, list[float]]:
    """Train by full-batch gradient ascent with backtracking line search.

    Returns the model and the objective trace (one value per accepted
    step); the trace is non-decreasing by construction. ``seed`` is kept
    for interface stability; initialization is deterministic zeros.
    """
    del seed
    if not data:
        raise CrfError("training data is empty")
    feature_set = feature_set or FeatureSet()
    if "in_vocab" in feature_set.templates and not feature_set.vocabulary:
        vocab = frozenset(
            tok.lower() for seq in data for tok in seq.tokens
        )
        feature_set = FeatureSet(
            feature_set.templates, vocab, feature_set.name_list,
            feature_set.annotation_columns,
        )

    labels = tuple(sorted({tag for seq in data for tag in seq.tags}))
    all_features: set[str] = set()
    for seq in data:
        for pos in range(len(seq.tokens)):
            all_features |= extract_features(
                feature_set, seq.tokens, pos, seq.columns or None
            )
    feature_index = {f: i for i, f in enumerate(sorted(all_features))}
    prepared = _prepare(data, feature_set, labels, feature_index)

    F, L = len(feature_index), len(labels)
    w_e = np.zeros((F, L))
    w_t = np.zeros((L, L))
    trace: list[float] = []
    step = 1.0
    obj, g_e, g_t = _objective_and_gradient(prepared, w_e, w_t, l2)
    if not np.isfinite(obj):
        raise CrfNumericError(f"non-finite initial objective: {obj}")
    trace.append(obj)
    for _ in range(max_iterations):
        grad_sq = float(np.sum(g_e**2) + np.sum(g_t**2))
        if grad_sq < tol**2:
            break
        # Armijo backtracking on the ascent direction.
        accepted = False
        while step > 1e-12:
            cand_e = w_e + step * g_e
            cand_t = w_t + step * g_t
            cand_obj, cand_ge, cand_gt = _objective_and_gradient(
                prepared, cand_e, cand_t, l2
            )
            if not np.isfinite(cand_obj):
                raise CrfNumericError(
                    f"non-finite objective during line search (step={step:g})"
                )
            if cand_obj >= obj + 1e-4 * step * grad_sq:
                w_e, w_t = cand_e, cand_t
                obj, g_e, g_t = cand_obj, cand_ge, cand_gt
                trace.append(obj)
                accepted = True
                step *= 2.0
                break
            step *= 0.5
        if not accepted:
            break

    model = CrfModel(
        labels=labels,
        feature_set=feature_set,
        feature_index=feature_index,
        emission_weights=w_e,
        transition_weights=w_t,
        l2=l2,
    )
    return model, trace
