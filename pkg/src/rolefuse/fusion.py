"""Block-term bilinear fusion classifier over frozen embeddings.

The interaction between an entity vector x1 and a context vector x2 is a
bilinear form y_k = sum_ij T[i,j,k] x1_i x2_j whose tensor T is constrained
to a block-superdiagonal decomposition: both inputs are linearly projected,
split into B chunks, each chunk pair is contracted through a small core
tensor of ranks (r1, r2, r3), and the B outputs are concatenated and
projected to the fusion dimension. ``assemble_full_tensor`` materializes T
for small models so the decomposed forward pass can be checked against the
plain bilinear contraction.

The full classifier runs entity and context through 512-unit linear
layers, the fusion network, dropout, and a linear head with softmax over
the four roles. Optionally the context is first summarized by scaled
dot-product attention with an entity-derived query. Training is mini-batch
SGD on categorical cross-entropy with hand-derived gradients (checked
against finite differences in the test suite).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from rolefuse.data_model import ROLES, EntityInstance, Role
from rolefuse.embeddings import EmbeddingTable, concat

CHECKPOINT_MAGIC = b"BFM1"
CHECKPOINT_VERSION = 1

SETTINGS = ("entity+text", "entity+image", "entity+text_image")


class FusionError(ValueError):
    """Raised for shape mismatches and invalid configurations."""


class DivergenceError(FusionError):
    """Raised when training or a forward pass goes non-finite."""


@dataclass
class TrainConfig:
    """Training and model-shape hyper-parameters.

    The defaults follow the reference setup: learning rate 1e-6, batch
    size 8, maximum text length 512, a 512-unit pre-fusion hidden layer,
    and 8 fusion blocks of ranks (64, 64, 32) into a 256-dim fused space.
    Tests use much smaller shapes.
    """

    learning_rate: float = 1e-6
    batch_size: int = 8
    max_text_length: int = 512
    epochs: int = 10
    seed: int = 0
    setting: str = "entity+text"
    attention: bool = False
    hidden_dim: int = 512
    blocks: int = 8
    rank1: int = 64
    rank2: int = 64
    rank3: int = 32
    fusion_dim: int = 256
    dropout: float = 0.1
    attention_slots: int = 8
    attention_dim: int = 64
    normalize_blocks: bool = False

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise FusionError(f"unknown setting {self.setting!r}")
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs < 0:
            raise FusionError("learning rate, batch size and epochs must be positive")
        if not 0 <= self.dropout < 1:
            raise FusionError(f"dropout must be in [0, 1), got {self.dropout}")
        if min(self.blocks, self.rank1, self.rank2, self.rank3) < 1:
            raise FusionError("blocks and ranks must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class AttentionParams:
    """Scaled dot-product attention over context slots.

    The context vector is reshaped into ``slots`` equal chunks; the query
    comes from the entity vector, keys/values from the chunks.
    """

    wq: np.ndarray  # (entity_dim, d_a)
    wk: np.ndarray  # (slot_dim, d_a)
    wv: np.ndarray  # (slot_dim, d_a)
    slots: int

    @property
    def d_a(self) -> int:
        return self.wq.shape[1]


def attend(
    params: AttentionParams, entity_vec: np.ndarray, context_vec: np.ndarray
) -> np.ndarray:
    out, _ = _attend_cached(params, entity_vec, context_vec)
    return out


def attention_weights(
    params: AttentionParams, entity_vec: np.ndarray, context_vec: np.ndarray
) -> np.ndarray:
    _, cache = _attend_cached(params, entity_vec, context_vec)
    return cache["w"]


def _attend_cached(params, entity_vec, context_vec):
    context_vec = np.asarray(context_vec, dtype=np.float64)
    entity_vec = np.asarray(entity_vec, dtype=np.float64)
    m = params.slots
    if context_vec.shape[0] % m != 0:
        raise FusionError(
            f"context dim {context_vec.shape[0]} not divisible by {m} slots"
        )
    S = context_vec.reshape(m, -1)
    q = entity_vec @ params.wq
    keys = S @ params.wk
    vals = S @ params.wv
    scores = keys @ q / np.sqrt(params.d_a)
    scores = scores - scores.max()
    w = np.exp(scores)
    w /= w.sum()
    out = w @ vals
    cache = {"S": S, "q": q, "keys": keys, "vals": vals, "w": w, "e": entity_vec}
    return out, cache


def _attend_backward(params, cache, d_out, grads):
    w, vals, keys, q, S, e = (
        cache["w"], cache["vals"], cache["keys"], cache["q"], cache["S"], cache["e"],
    )
    scale = 1.0 / np.sqrt(params.d_a)
    d_vals = w[:, None] * d_out[None, :]
    d_w = vals @ d_out
    d_scores = w * (d_w - float(w @ d_w))
    d_q = (keys.T @ d_scores) * scale
    d_keys = d_scores[:, None] * q[None, :] * scale
    grads["att_wq"] += np.outer(e, d_q)
    grads["att_wk"] += S.T @ d_keys
    grads["att_wv"] += S.T @ d_vals


# ---------------------------------------------------------------------------
# Bilinear reference operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BilinearTensor:
    """A dense I x J x K interaction tensor."""

    T: np.ndarray

    def __post_init__(self):
        if self.T.ndim != 3:
            raise FusionError(f"expected a 3-way tensor, got ndim={self.T.ndim}")
        if not np.all(np.isfinite(self.T)):
            raise FusionError("non-finite tensor entries")


def bilinear_contract(
    tensor: BilinearTensor, x1: np.ndarray, x2: np.ndarray
) -> np.ndarray:
    """y_k = sum_ij T[i,j,k] x1_i x2_j."""
    T = tensor.T
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != (T.shape[0],) or x2.shape != (T.shape[1],):
        raise FusionError(
            f"shape mismatch: tensor {T.shape}, x1 {x1.shape}, x2 {x2.shape}"
        )
    return np.einsum("ijk,i,j->k", T, x1, x2)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


class BlockFusionModel:
    """All trainable parameters of the fusion classifier.

    Weight matrices are stored (in_dim, out_dim); vectors multiply from the
    left (``x @ W + b``). ``cores`` is (B, r1, r2, r3).
    """

    def __init__(
        self,
        config: TrainConfig,
        entity_dim: int,
        context_dim: int,
        rng: np.random.Generator | None = None,
    ):
        cfg = config
        self.config = cfg
        self.entity_dim = entity_dim
        self.context_dim = context_dim
        rng = rng or np.random.default_rng(cfg.seed)
        h, B = cfg.hidden_dim, cfg.blocks
        r1, r2, r3, K = cfg.rank1, cfg.rank2, cfg.rank3, cfg.fusion_dim

        fused_ctx_dim = context_dim
        if cfg.attention:
            if context_dim % cfg.attention_slots != 0:
                raise FusionError(
                    f"context dim {context_dim} not divisible by "
                    f"{cfg.attention_slots} attention slots"
                )
            slot_dim = context_dim // cfg.attention_slots
            self.attention = AttentionParams(
                wq=_init(rng, entity_dim, cfg.attention_dim),
                wk=_init(rng, slot_dim, cfg.attention_dim),
                wv=_init(rng, slot_dim, cfg.attention_dim),
                slots=cfg.attention_slots,
            )
            fused_ctx_dim = cfg.attention_dim
        else:
            self.attention = None

        self.params: dict[str, np.ndarray] = {
            "ent_w": _init(rng, entity_dim, h),
            "ent_b": np.zeros(h),
            "ctx_w": _init(rng, fused_ctx_dim, h),
            "ctx_b": np.zeros(h),
            "proj1": _init(rng, h, B * r1),
            "proj2": _init(rng, h, B * r2),
            "cores": rng.normal(0.0, 1.0 / np.sqrt(r1 * r2), size=(B, r1, r2, r3)),
            "out_proj": _init(rng, B * r3, K),
            # Zero head => uniform class probabilities at initialization.
            "head_w": np.zeros((K, 4)),
            "head_b": np.zeros(4),
        }
        if self.attention is not None:
            self.params["att_wq"] = self.attention.wq
            self.params["att_wk"] = self.attention.wk
            self.params["att_wv"] = self.attention.wv

    def parameter_names(self) -> list[str]:
        return sorted(self.params)

    def zero_like_params(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def check_finite(self) -> None:
        for name, arr in self.params.items():
            if not np.all(np.isfinite(arr)):
                raise DivergenceError(f"non-finite values in parameter {name!r}")


def _init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))


def assemble_full_tensor(model: BlockFusionModel) -> BilinearTensor:
    """Materialize the decomposed interaction tensor (small models only)."""
    cfg = model.config
    p1, p2 = model.params["proj1"], model.params["proj2"]
    cores, out = model.params["cores"], model.params["out_proj"]
    B, r1, r2, r3 = cfg.blocks, cfg.rank1, cfg.rank2, cfg.rank3
    I, J, K = p1.shape[0], p2.shape[0], out.shape[1]
    T = np.zeros((I, J, K))
    for b in range(B):
        p1_b = p1[:, b * r1 : (b + 1) * r1]
        p2_b = p2[:, b * r2 : (b + 1) * r2]
        out_b = out[b * r3 : (b + 1) * r3, :]
        T += np.einsum("ia,jc,ace,ek->ijk", p1_b, p2_b, cores[b], out_b)
    return BilinearTensor(T)


def fusion_subnetwork(
    model: BlockFusionModel, x1: np.ndarray, x2: np.ndarray
) -> np.ndarray:
    """The projection/block-contraction part only, post-linear inputs."""
    out, _ = _fusion_forward_cached(model, x1, x2)
    return out


def _power_l2(z: np.ndarray) -> tuple[np.ndarray, dict]:
    p = np.sign(z) * np.sqrt(np.abs(z) + 1e-12)
    norm = np.sqrt(float(p @ p) + 1e-12)
    return p / norm, {"z": z, "p": p, "norm": norm}


def _power_l2_backward(cache: dict, d_out: np.ndarray) -> np.ndarray:
    p, norm, z = cache["p"], cache["norm"], cache["z"]
    d_p = d_out / norm - p * float(p @ d_out) / norm**3
    return d_p * 0.5 / np.sqrt(np.abs(z) + 1e-12)


def _fusion_forward_cached(model, x1, x2):
    cfg = model.config
    B, r1, r2, r3 = cfg.blocks, cfg.rank1, cfg.rank2, cfg.rank3
    p1, p2 = model.params["proj1"], model.params["proj2"]
    cores, out_proj = model.params["cores"], model.params["out_proj"]
    if x1.shape != (p1.shape[0],) or x2.shape != (p2.shape[0],):
        raise FusionError(
            f"fusion input shapes {x1.shape}/{x2.shape} do not match "
            f"projections {p1.shape[0]}/{p2.shape[0]}"
        )
    x1p = x1 @ p1
    x2p = x2 @ p2
    u = x1p.reshape(B, r1)
    v = x2p.reshape(B, r2)
    z = np.einsum("ba,bc,bace->be", u, v, cores)
    norm_caches = None
    if cfg.normalize_blocks:
        norm_caches = []
        zn = np.empty_like(z)
        for b in range(B):
            zn[b], c = _power_l2(z[b])
            norm_caches.append(c)
        z_out = zn
    else:
        z_out = z
    y = z_out.reshape(-1) @ out_proj
    cache = {"x1": x1, "x2": x2, "u": u, "v": v, "z": z, "z_out": z_out,
             "norm_caches": norm_caches}
    return y, cache


def _fusion_backward(model, cache, d_y, grads):
    cfg = model.config
    B, r1, r2, r3 = cfg.blocks, cfg.rank1, cfg.rank2, cfg.rank3
    out_proj = model.params["out_proj"]
    cores = model.params["cores"]
    z_out, u, v = cache["z_out"], cache["u"], cache["v"]
    grads["out_proj"] += np.outer(z_out.reshape(-1), d_y)
    d_zout = (out_proj @ d_y).reshape(B, r3)
    if cfg.normalize_blocks:
        d_z = np.empty_like(d_zout)
        for b in range(B):
            d_z[b] = _power_l2_backward(cache["norm_caches"][b], d_zout[b])
    else:
        d_z = d_zout
    grads["cores"] += np.einsum("ba,bc,be->bace", u, v, d_z)
    d_u = np.einsum("bace,bc,be->ba", cores, v, d_z)
    d_v = np.einsum("bace,ba,be->bc", cores, u, d_z)
    d_x1p = d_u.reshape(-1)
    d_x2p = d_v.reshape(-1)
    grads["proj1"] += np.outer(cache["x1"], d_x1p)
    grads["proj2"] += np.outer(cache["x2"], d_x2p)
    d_x1 = model.params["proj1"] @ d_x1p
    d_x2 = model.params["proj2"] @ d_x2p
    return d_x1, d_x2


def _forward_single(model, e, c, dropout_mask=None):
    """Logits for one (entity, context) pair, with a backward cache."""
    cache: dict = {}
    if model.attention is not None:
        c_in, att_cache = _attend_cached(model.attention, e, c)
        cache["att"] = att_cache
    else:
        c_in = c
    x1 = e @ model.params["ent_w"] + model.params["ent_b"]
    x2 = c_in @ model.params["ctx_w"] + model.params["ctx_b"]
    y, fus_cache = _fusion_forward_cached(model, x1, x2)
    if dropout_mask is not None:
        y_drop = y * dropout_mask
    else:
        y_drop = y
    logits = y_drop @ model.params["head_w"] + model.params["head_b"]
    cache.update(
        e=e, c_in=c_in, x1=x1, x2=x2, fus=fus_cache, y=y, y_drop=y_drop,
        dropout_mask=dropout_mask,
    )
    return logits, cache


def _backward_single(model, cache, d_logits, grads):
    grads["head_w"] += np.outer(cache["y_drop"], d_logits)
    grads["head_b"] += d_logits
    d_ydrop = model.params["head_w"] @ d_logits
    mask = cache["dropout_mask"]
    d_y = d_ydrop * mask if mask is not None else d_ydrop
    d_x1, d_x2 = _fusion_backward(model, cache["fus"], d_y, grads)
    grads["ent_w"] += np.outer(cache["e"], d_x1)
    grads["ent_b"] += d_x1
    grads["ctx_w"] += np.outer(cache["c_in"], d_x2)
    grads["ctx_b"] += d_x2
    if model.attention is not None:
        d_cin = model.params["ctx_w"] @ d_x2
        _attend_backward(model.attention, cache["att"], d_cin, grads)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    p = np.exp(z)
    return p / p.sum()


def block_fusion_forward(
    model: BlockFusionModel, x_entity: np.ndarray, x_context: np.ndarray
) -> np.ndarray:
    """Class probabilities over the four roles (inference: no dropout)."""
    x_entity = np.asarray(x_entity, dtype=np.float64)
    x_context = np.asarray(x_context, dtype=np.float64)
    if x_entity.shape != (model.entity_dim,):
        raise FusionError(
            f"entity vector has shape {x_entity.shape}, expected ({model.entity_dim},)"
        )
    if x_context.shape != (model.context_dim,):
        raise FusionError(
            f"context vector has shape {x_context.shape}, expected ({model.context_dim},)"
        )
    logits, _ = _forward_single(model, x_entity, x_context)
    if not np.all(np.isfinite(logits)):
        raise DivergenceError("non-finite activation in forward pass")
    return _softmax(logits)


# ---------------------------------------------------------------------------
# Resolving instances against embedding tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingSources:
    """The entity/text/image tables a setting draws from."""

    entity: EmbeddingTable
    text: EmbeddingTable | None = None
    image: EmbeddingTable | None = None


def resolve_vectors(
    instance: EntityInstance, tables: EmbeddingSources, setting: str
) -> tuple[np.ndarray, np.ndarray]:
    """(entity vector, context vector) for one instance under a setting."""
    e = tables.entity.lookup(instance.entity_name)
    if setting == "entity+text":
        c = tables.text.lookup(instance.meme_id)
    elif setting == "entity+image":
        c = tables.image.lookup(instance.image_key)
    elif setting == "entity+text_image":
        c = concat(
            tables.text.lookup(instance.meme_id),
            tables.image.lookup(instance.image_key),
        )
    else:
        raise FusionError(f"unknown setting {setting!r}")
    return e, c


def context_dim(tables: EmbeddingSources, setting: str) -> int:
    if setting == "entity+text":
        return tables.text.dim
    if setting == "entity+image":
        return tables.image.dim
    if setting == "entity+text_image":
        return tables.text.dim + tables.image.dim
    raise FusionError(f"unknown setting {setting!r}")


# ---------------------------------------------------------------------------
# Loss / gradients / training
# ---------------------------------------------------------------------------


def batch_loss_and_gradients(
    model: BlockFusionModel,
    batch: Sequence[tuple[np.ndarray, np.ndarray, int]],
    dropout_masks: Sequence[np.ndarray | None] | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over (entity, context, gold index) triples.

    ``dropout_masks`` (one per item, or None) lets training reuse the exact
    masks; inference and gradient checks pass None for identity dropout.
    """
    grads = model.zero_like_params()
    total = 0.0
    n = len(batch)
    for i, (e, c, gold) in enumerate(batch):
        mask = dropout_masks[i] if dropout_masks is not None else None
        logits, cache = _forward_single(model, e, c, mask)
        probs = _softmax(logits)
        total += -np.log(max(probs[gold], 1e-300))
        d_logits = probs.copy()
        d_logits[gold] -= 1.0
        _backward_single(model, cache, d_logits / n, grads)
    return total / n, grads


def batch_loss(model, batch, dropout_masks=None) -> float:
    total = 0.0
    for i, (e, c, gold) in enumerate(batch):
        mask = dropout_masks[i] if dropout_masks is not None else None
        logits, _ = _forward_single(model, e, c, mask)
        probs = _softmax(logits)
        total += -np.log(max(probs[gold], 1e-300))
    return total / len(batch)


def train_fusion(
    cfg: TrainConfig,
    instances: Sequence[EntityInstance],
    tables: EmbeddingSources,
) -> tuple[BlockFusionModel, list[float]]:
    """Mini-batch SGD on categorical cross-entropy; deterministic per seed.

    The returned trace has the pre-training mean loss first, then one mean
    loss per epoch.
    """
    if not instances:
        raise FusionError("no training instances")
    data = [
        resolve_vectors(inst, tables, cfg.setting) + (inst.role.index,)
        for inst in instances
    ]
    rng = np.random.default_rng(cfg.seed)
    model = BlockFusionModel(
        cfg, entity_dim=tables.entity.dim,
        context_dim=context_dim(tables, cfg.setting), rng=rng,
    )
    n = len(data)
    trace = [batch_loss(model, data)]
    keep = 1.0 - cfg.dropout
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = [data[i] for i in idx]
            if cfg.dropout > 0:
                masks = [
                    (rng.random(cfg.fusion_dim) < keep) / keep for _ in idx
                ]
            else:
                masks = None
            loss, grads = batch_loss_and_gradients(model, batch, masks)
            if not np.isfinite(loss):
                raise DivergenceError(f"training diverged: loss={loss}")
            epoch_loss += loss * len(idx)
            for name, g in grads.items():
                model.params[name] -= cfg.learning_rate * g
        model.check_finite()
        trace.append(epoch_loss / n)
    return model, trace


def predict(
    model: BlockFusionModel,
    instance: EntityInstance,
    tables: EmbeddingSources,
    cfg: TrainConfig | None = None,
) -> Role:
    """Argmax role; exact ties break toward the role order."""
    cfg = cfg or model.config
    e, c = resolve_vectors(instance, tables, cfg.setting)
    probs = block_fusion_forward(model, e, c)
    return ROLES[int(np.argmax(probs))]


def predict_all(model, instances, tables, cfg=None) -> list[Role]:
    return [predict(model, inst, tables, cfg) for inst in instances]


# ---------------------------------------------------------------------------
# One-vs-rest hinge-loss baseline (image-features classifier)
# ---------------------------------------------------------------------------


@dataclass
class LinearSvmModel:
    """One-vs-rest linear max-margin classifier."""

    weights: np.ndarray  # (dim, n_classes)
    bias: np.ndarray  # (n_classes,)

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> list[Role]:
        return [ROLES[i] for i in np.argmax(self.decision(X), axis=1)]


def svm_objective(W: np.ndarray, b: np.ndarray, X, Y_signs, C: float) -> float:
    margins = 1.0 - Y_signs * (X @ W + b)
    return 0.5 * float(np.sum(W**2)) + C * float(np.sum(np.maximum(margins, 0.0)))


def train_linear_svm(
    features: np.ndarray,
    labels: Sequence[Role],
    C: float = 1.0,
    epochs: int = 500,
    seed: int = 0,
) -> tuple[LinearSvmModel, list[float]]:
    """Full-batch subgradient descent on L2-regularized hinge loss.

    A step is accepted only if it decreases the objective (backtracking
    halves it otherwise), so the returned trace is non-increasing.
    """
    del seed  # deterministic zero init; kept for interface stability
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise FusionError("svm needs a nonempty (n, d) feature matrix")
    y_idx = np.array([r.index for r in labels], dtype=np.int64)
    if len(set(y_idx.tolist())) < 2:
        raise FusionError("svm needs at least two classes present")
    n, d = X.shape
    Y_signs = -np.ones((n, 4))
    Y_signs[np.arange(n), y_idx] = 1.0

    W = np.zeros((d, 4))
    b = np.zeros(4)
    obj = svm_objective(W, b, X, Y_signs, C)
    trace = [obj]
    step = 1.0 / (C * n)
    for _ in range(epochs):
        margins = 1.0 - Y_signs * (X @ W + b)
        active = (margins > 0).astype(np.float64) * Y_signs
        g_W = W - C * (X.T @ active)
        g_b = -C * active.sum(axis=0)
        accepted = False
        while step > 1e-15:
            W_new = W - step * g_W
            b_new = b - step * g_b
            obj_new = svm_objective(W_new, b_new, X, Y_signs, C)
            if obj_new < obj:
                W, b, obj = W_new, b_new, obj_new
                trace.append(obj)
                step *= 1.5
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return LinearSvmModel(W, b), trace


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_model(
    model: BlockFusionModel,
    path: str | Path,
    epoch: int = 0,
    loss_trace: Sequence[float] = (),
) -> None:
    """Versioned little-endian binary + JSON metadata sidecar."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(model.params)))
        for name in model.parameter_names():
            arr = model.params[name]
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())
    meta = {
        "format": "rolefuse-fusion",
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "entity_dim": model.entity_dim,
        "context_dim": model.context_dim,
        "epoch": epoch,
        "loss_trace": list(loss_trace),
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(meta, indent=2), encoding="utf-8"
    )


def load_model(path: str | Path) -> tuple[BlockFusionModel, dict]:
    path = Path(path)
    meta = json.loads(
        path.with_suffix(path.suffix + ".json").read_text(encoding="utf-8")
    )
    if meta.get("format") != "rolefuse-fusion":
        raise FusionError(f"{path}: missing or foreign metadata sidecar")
    cfg = TrainConfig.from_dict(meta["config"])
    model = BlockFusionModel(
        cfg, entity_dim=meta["entity_dim"], context_dim=meta["context_dim"]
    )
    data = path.read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FusionError(f"{path}: bad checkpoint magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FusionError(f"{path}: unsupported checkpoint version {version}")
    (count,) = struct.unpack_from("<I", data, 8)
    offset = 12
    loaded: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, offset)
        offset += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=offset).reshape(shape)
        offset += 8 * size
        loaded[name] = arr.astype(np.float64)
    if offset != len(data):
        raise FusionError(f"{path}: {len(data) - offset} trailing bytes")
    if set(loaded) != set(model.params):
        raise FusionError(f"{path}: parameter set mismatch")
    for name, arr in loaded.items():
        if arr.shape != model.params[name].shape:
            raise FusionError(
                f"{path}: parameter {name!r} shape {arr.shape} != "
                f"{model.params[name].shape}"
            )
        model.params[name] = arr
    if model.attention is not None:
        model.attention.wq = model.params["att_wq"]
        model.attention.wk = model.params["att_wk"]
        model.attention.wv = model.params["att_wv"]
    return model, meta
