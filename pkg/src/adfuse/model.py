"""The multimodal CTR regression network.

Three branches (visual frames, metadata, text) each produce a
``modal_dim`` feature; the branch outputs are L2-normalized, combined by a
softmax attention over modalities, and fed to a small regression head that
predicts the log-scale CTR. Any subset of branches can be disabled, the
metadata branch can run separated (qualitative and quantitative encoded by
their own layers) or joint, and the added regularization layers (all batch
norms plus the head dropout) can be stripped for baseline-style variants.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict, field, fields as dc_fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError, ShapeError
from .numerics import (
    INFER,
    TRAIN,
    AttentionScorer,
    BatchNorm,
    Dense,
    attention_pool_batch,
    attention_pool_backward,
    dropout_backward,
    dropout_forward,
    l2_normalize_rows,
    l2_normalize_rows_backward,
)

PARAMS_MAGIC = b"AFPM"
PARAMS_VERSION = 1

MODALITIES = ("visual", "meta", "text")


@dataclass
class ModelConfig:
    qual_onehot_dim: int
    quant_dim: int = 4
    n_frames: int = 15
    frame_embed_dim: int = 2048
    text_embed_dim: int = 300
    qual_feat_dim: int = 16
    quant_feat_dim: int = 240
    modal_dim: int = 256
    head_hidden_dim: int = 256
    dropout_p: float = 0.5
    use_visual: bool = True
    use_meta: bool = True
    use_text: bool = True
    separate_meta: bool = True
    extra_regularization: bool = True
    prenormalize_quant: bool = False

    def validate(self) -> None:
        dims = (self.qual_onehot_dim, self.quant_dim, self.n_frames,
                self.frame_embed_dim, self.text_embed_dim, self.qual_feat_dim,
                self.quant_feat_dim, self.modal_dim, self.head_hidden_dim)
        if any(d < 1 for d in dims):
            raise ConfigError(f"all dimensions must be positive: {self}")
        if self.separate_meta and \
                self.qual_feat_dim + self.quant_feat_dim != self.modal_dim:
            raise ConfigError(
                f"qual_feat_dim + quant_feat_dim must equal modal_dim "
                f"({self.qual_feat_dim}+{self.quant_feat_dim} != {self.modal_dim})")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if not self.active_modalities:
            raise ConfigError("at least one modality must be active")

    @property
    def active_modalities(self) -> tuple[str, ...]:
        return tuple(m for m, use in zip(
            MODALITIES, (self.use_visual, self.use_meta, self.use_text)) if use)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        names = {f.name for f in dc_fields(cls)}
        unknown = set(payload) - names
        if unknown:
            raise DataFormatError(f"unknown model config fields: {sorted(unknown)}")
        cfg = cls(**payload)
        cfg.validate()
        return cfg


@dataclass
class ModelParams:
    """All layer state. Branch parameters exist regardless of which
    modalities are active, so toggling the modality mask never changes the
    parameter file layout; the metadata layout and the presence of batch
    norms do follow the config."""

    visual_dense: Dense
    visual_bn: BatchNorm | None
    frame_scorer: AttentionScorer
    meta_qual_dense: Dense | None
    meta_qual_bn: BatchNorm | None
    meta_quant_dense: Dense | None
    meta_quant_bn: BatchNorm | None
    meta_combine_dense: Dense | None
    meta_combine_bn: BatchNorm | None
    meta_joint_dense: Dense | None
    meta_joint_bn: BatchNorm | None
    text_dense: Dense
    text_bn: BatchNorm | None
    modality_scorer: AttentionScorer
    head_hidden: Dense
    head_bn: BatchNorm | None
    head_out: Dense

    _LAYER_NAMES = (
        ("visual.dense", "visual_dense"),
        ("visual.bn", "visual_bn"),
        ("visual.scorer", "frame_scorer"),
        ("meta.qual_dense", "meta_qual_dense"),
        ("meta.qual_bn", "meta_qual_bn"),
        ("meta.quant_dense", "meta_quant_dense"),
        ("meta.quant_bn", "meta_quant_bn"),
        ("meta.combine_dense", "meta_combine_dense"),
        ("meta.combine_bn", "meta_combine_bn"),
        ("meta.joint_dense", "meta_joint_dense"),
        ("meta.joint_bn", "meta_joint_bn"),
        ("text.dense", "text_dense"),
        ("text.bn", "text_bn"),
        ("fusion.scorer", "modality_scorer"),
        ("head.hidden", "head_hidden"),
        ("head.bn", "head_bn"),
        ("head.out", "head_out"),
    )

    def _tensor_slots(self) -> list[tuple[str, object, str, bool]]:
        """(tensor_name, layer, attr, learnable) for every tensor."""
        slots = []
        for prefix, attr in self._LAYER_NAMES:
            layer = getattr(self, attr)
            if layer is None:
                continue
            if isinstance(layer, Dense):
                slots.append((f"{prefix}.weight", layer, "weight", True))
                slots.append((f"{prefix}.bias", layer, "bias", True))
            elif isinstance(layer, BatchNorm):
                slots.append((f"{prefix}.gamma", layer, "gamma", True))
                slots.append((f"{prefix}.beta", layer, "beta", True))
                slots.append((f"{prefix}.running_mean", layer, "running_mean", False))
                slots.append((f"{prefix}.running_var", layer, "running_var", False))
            elif isinstance(layer, AttentionScorer):
                slots.append((f"{prefix}.weight", layer, "weight", True))
                slots.append((f"{prefix}.bias", layer, "bias", True))
        return slots

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(layer, attr)
                for name, layer, attr, _ in self._tensor_slots()}

    def learnable(self) -> dict[str, np.ndarray]:
        return {name: getattr(layer, attr)
                for name, layer, attr, learn in self._tensor_slots() if learn}

    def clone(self) -> "ModelParams":
        import copy
        return copy.deepcopy(self)


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform dense weights, zero biases, unit BN scale, and
    zero-initialized attention scorers (attention starts uniform). The final
    output layer also starts at zero: with BN'd glorot activations feeding
    it, a glorot output layer makes the initial predictions several times
    the target scale, and the resulting early momentum steps destabilize
    training; starting at zero makes the first predictions the bias (0)."""
    config.validate()
    reg = config.extra_regularization
    bn = BatchNorm.initialize

    def dense(i, o):
        return Dense.initialize(i, o, rng)

    if config.separate_meta:
        meta = dict(
            meta_qual_dense=dense(config.qual_onehot_dim, config.qual_feat_dim),
            meta_qual_bn=bn(config.qual_feat_dim) if reg else None,
            meta_quant_dense=dense(config.quant_dim, config.quant_feat_dim),
            meta_quant_bn=bn(config.quant_feat_dim) if reg else None,
            meta_combine_dense=dense(config.qual_feat_dim + config.quant_feat_dim,
                                     config.modal_dim),
            meta_combine_bn=bn(config.modal_dim) if reg else None,
            meta_joint_dense=None, meta_joint_bn=None)
    else:
        meta = dict(
            meta_qual_dense=None, meta_qual_bn=None,
            meta_quant_dense=None, meta_quant_bn=None,
            meta_combine_dense=None, meta_combine_bn=None,
            meta_joint_dense=dense(config.qual_onehot_dim + config.quant_dim,
                                   config.modal_dim),
            meta_joint_bn=bn(config.modal_dim) if reg else None)

    return ModelParams(
        visual_dense=dense(config.frame_embed_dim, config.modal_dim),
        visual_bn=bn(config.modal_dim) if reg else None,
        frame_scorer=AttentionScorer.initialize(config.modal_dim),
        **meta,
        text_dense=dense(config.text_embed_dim, config.modal_dim),
        text_bn=bn(config.modal_dim) if reg else None,
        modality_scorer=AttentionScorer.initialize(config.modal_dim),
        head_hidden=Dense.initialize(config.modal_dim, config.head_hidden_dim, rng),
        head_bn=bn(config.head_hidden_dim) if reg else None,
        head_out=Dense(weight=np.zeros((config.head_hidden_dim, 1)),
                       bias=np.zeros(1)),
    )


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


@dataclass
class BatchInputs:
    frames: np.ndarray | None = None     # (B, n_frames, frame_dim)
    qual: np.ndarray | None = None       # (B, qual_onehot_dim)
    quant: np.ndarray | None = None      # (B, quant_dim)
    text_sum: np.ndarray | None = None   # (B, text_embed_dim)

    def size(self) -> int:
        for a in (self.frames, self.qual, self.quant, self.text_sum):
            if a is not None:
                return a.shape[0]
        raise ShapeError("empty batch")


def batch_from_dataset(ds, idx=None) -> BatchInputs:
    """Slice an EncodedDataset into float64 batch arrays."""
    def take(a):
        if a is None:
            return None
        sel = a if idx is None else a[idx]
        return np.asarray(sel, dtype=np.float64)
    return BatchInputs(frames=take(ds.frames), qual=take(ds.qual),
                       quant=take(ds.quant), text_sum=take(ds.text_sum))


@dataclass
class ForwardTrace:
    predictions: np.ndarray                 # (B,)
    modalities: tuple[str, ...]
    modality_weights: np.ndarray            # (B, n_active)
    frame_weights: np.ndarray | None        # (B, n_frames) when visual active
    fused: np.ndarray | None = None         # (B, modal_dim) post-fusion feature
    cache: dict = field(repr=False, default_factory=dict)

    def modality_weight(self, name: str) -> np.ndarray:
        return self.modality_weights[:, self.modalities.index(name)]


def forward_batch(params: ModelParams, config: ModelConfig, batch: BatchInputs,
                  mode: str, rng: np.random.Generator | None = None,
                  branch_scales: dict[str, float] | None = None) -> ForwardTrace:
    """Run the full network on a batch. ``branch_scales`` multiplies a
    branch output before fusion (scale-invariance probe; fusion normalizes
    each branch, so any positive scale must be absorbed)."""
    mods = config.active_modalities
    cache: dict = {"mode": mode}
    branch_out: dict[str, np.ndarray] = {}
    frame_weights = None

    if config.use_visual:
        x = batch.frames
        if x is None or x.ndim != 3 or x.shape[1:] != (config.n_frames,
                                                       config.frame_embed_dim):
            got = None if x is None else x.shape
            raise ShapeError(
                f"visual branch expects (B, {config.n_frames}, "
                f"{config.frame_embed_dim}) frames, got {got}")
        b, n, _ = x.shape
        flat = x.reshape(b * n, config.frame_embed_dim)
        h, d_cache = params.visual_dense.forward(flat)
        bn_cache = None
        if params.visual_bn is not None:
            h, bn_cache = params.visual_bn.forward(h, mode)
        items = h.reshape(b, n, config.modal_dim)
        pooled, frame_weights, p_cache = attention_pool_batch(
            params.frame_scorer, items)
        branch_out["visual"] = pooled
        cache["visual"] = (flat, d_cache, bn_cache, p_cache, b, n)

    if config.use_meta:
        if batch.qual is None or batch.quant is None:
            raise ShapeError("metadata branch needs qual and quant inputs")
        if config.separate_meta:
            hq, qd = params.meta_qual_dense.forward(batch.qual)
            qbn = None
            if params.meta_qual_bn is not None:
                hq, qbn = params.meta_qual_bn.forward(hq, mode)
            hz, zd = params.meta_quant_dense.forward(batch.quant)
            zbn = None
            if params.meta_quant_bn is not None:
                hz, zbn = params.meta_quant_bn.forward(hz, mode)
            cat = np.concatenate([hq, hz], axis=1)
            hm, cd = params.meta_combine_dense.forward(cat)
            cbn = None
            if params.meta_combine_bn is not None:
                hm, cbn = params.meta_combine_bn.forward(hm, mode)
            cache["meta"] = ("separated", qd, qbn, zd, zbn, cd, cbn)
        else:
            cat = np.concatenate([batch.qual, batch.quant], axis=1)
            hm, jd = params.meta_joint_dense.forward(cat)
            jbn = None
            if params.meta_joint_bn is not None:
                hm, jbn = params.meta_joint_bn.forward(hm, mode)
            cache["meta"] = ("joint", jd, jbn)
        branch_out["meta"] = hm

    if config.use_text:
        if batch.text_sum is None:
            raise ShapeError("text branch needs the summed text embedding")
        ht, td = params.text_dense.forward(batch.text_sum)
        tbn = None
        if params.text_bn is not None:
            ht, tbn = params.text_bn.forward(ht, mode)
        branch_out["text"] = ht
        cache["text"] = (td, tbn)

    if branch_scales:
        for mod, scale in branch_scales.items():
            if mod in branch_out:
                branch_out[mod] = branch_out[mod] * scale
        cache["branch_scales"] = dict(branch_scales)

    # Fusion: normalize each branch, score the normalized vectors, softmax
    # over active modalities, weighted sum.
    normed = {}
    norm_caches = {}
    for mod in mods:
        normed[mod], norm_caches[mod] = l2_normalize_rows(branch_out[mod])
    stack = np.stack([normed[m] for m in mods], axis=1)
    fused, beta, f_cache = attention_pool_batch(params.modality_scorer, stack)
    cache["fusion"] = (norm_caches, f_cache)

    h1, h1c = params.head_hidden.forward(fused)
    hbn = None
    if params.head_bn is not None:
        h1, hbn = params.head_bn.forward(h1, mode)
    drop_p = config.dropout_p if config.extra_regularization else 0.0
    h1, mask = dropout_forward(drop_p, h1, mode, rng)
    out, h2c = params.head_out.forward(h1)
    cache["head"] = (h1c, hbn, mask, h2c)

    return ForwardTrace(predictions=out[:, 0], modalities=mods,
                        modality_weights=beta, frame_weights=frame_weights,
                        fused=fused, cache=cache)


def backward_batch(params: ModelParams, config: ModelConfig,
                   trace: ForwardTrace, grad_predictions: np.ndarray
                   ) -> dict[str, np.ndarray]:
    """Exact gradients of every learnable tensor. Branches outside the
    active modality set get zero gradients."""
    if trace.cache.get("mode") != TRAIN:
        raise ShapeError("backward needs a trace from a train-mode forward")
    grads = {name: np.zeros_like(t) for name, t in params.learnable().items()}
    mods = trace.modalities

    h1c, hbn, mask, h2c = trace.cache["head"]
    g = grad_predictions[:, None]
    g, gw, gb = params.head_out.backward(h2c, g)
    grads["head.out.weight"] += gw
    grads["head.out.bias"] += gb
    drop_p = config.dropout_p if config.extra_regularization else 0.0
    g = dropout_backward(drop_p, mask, g)
    if params.head_bn is not None:
        g, gg, gbta = params.head_bn.backward(hbn, g)
        grads["head.bn.gamma"] += gg
        grads["head.bn.beta"] += gbta
    g, gw, gb = params.head_hidden.backward(h1c, g)
    grads["head.hidden.weight"] += gw
    grads["head.hidden.bias"] += gb

    norm_caches, f_cache = trace.cache["fusion"]
    g_stack, gw, gb = attention_pool_backward(params.modality_scorer, f_cache, g)
    grads["fusion.scorer.weight"] += gw
    grads["fusion.scorer.bias"] += gb

    scales = trace.cache.get("branch_scales", {})
    for i, mod in enumerate(mods):
        g_branch = l2_normalize_rows_backward(norm_caches[mod], g_stack[:, i, :])
        if mod in scales:
            g_branch = g_branch * scales[mod]
        if mod == "visual":
            _backward_visual(params, trace.cache["visual"], g_branch, grads)
        elif mod == "meta":
            _backward_meta(params, trace.cache["meta"], g_branch, grads)
        else:
            _backward_text(params, trace.cache["text"], g_branch, grads)
    return grads


def _backward_visual(params, cache, g_pooled, grads):
    flat, d_cache, bn_cache, p_cache, b, n = cache
    g_items, gw, gb = attention_pool_backward(params.frame_scorer, p_cache, g_pooled)
    grads["visual.scorer.weight"] += gw
    grads["visual.scorer.bias"] += gb
    g = g_items.reshape(b * n, -1)
    if params.visual_bn is not None:
        g, gg, gbta = params.visual_bn.backward(bn_cache, g)
        grads["visual.bn.gamma"] += gg
        grads["visual.bn.beta"] += gbta
    _, gw, gb = params.visual_dense.backward(d_cache, g)
    grads["visual.dense.weight"] += gw
    grads["visual.dense.bias"] += gb


def _backward_meta(params, cache, g, grads):
    if cache[0] == "separated":
        _, qd, qbn, zd, zbn, cd, cbn = cache
        if params.meta_combine_bn is not None:
            g, gg, gb = params.meta_combine_bn.backward(cbn, g)
            grads["meta.combine_bn.gamma"] += gg
            grads["meta.combine_bn.beta"] += gb
        g, gw, gb = params.meta_combine_dense.backward(cd, g)
        grads["meta.combine_dense.weight"] += gw
        grads["meta.combine_dense.bias"] += gb
        k = params.meta_qual_dense.out_dim
        gq, gz = g[:, :k], g[:, k:]
        if params.meta_qual_bn is not None:
            gq, gg, gb = params.meta_qual_bn.backward(qbn, gq)
            grads["meta.qual_bn.gamma"] += gg
            grads["meta.qual_bn.beta"] += gb
        _, gw, gb = params.meta_qual_dense.backward(qd, gq)
        grads["meta.qual_dense.weight"] += gw
        grads["meta.qual_dense.bias"] += gb
        if params.meta_quant_bn is not None:
            gz, gg, gb = params.meta_quant_bn.backward(zbn, gz)
            grads["meta.quant_bn.gamma"] += gg
            grads["meta.quant_bn.beta"] += gb
        _, gw, gb = params.meta_quant_dense.backward(zd, gz)
        grads["meta.quant_dense.weight"] += gw
        grads["meta.quant_dense.bias"] += gb
    else:
        _, jd, jbn = cache
        if params.meta_joint_bn is not None:
            g, gg, gb = params.meta_joint_bn.backward(jbn, g)
            grads["meta.joint_bn.gamma"] += gg
            grads["meta.joint_bn.beta"] += gb
        _, gw, gb = params.meta_joint_dense.backward(jd, g)
        grads["meta.joint_dense.weight"] += gw
        grads["meta.joint_dense.bias"] += gb


def _backward_text(params, cache, g, grads):
    td, tbn = cache
    if params.text_bn is not None:
        g, gg, gb = params.text_bn.backward(tbn, g)
        grads["text.bn.gamma"] += gg
        grads["text.bn.beta"] += gb
    _, gw, gb = params.text_dense.backward(td, g)
    grads["text.dense.weight"] += gw
    grads["text.dense.bias"] += gb


# ---------------------------------------------------------------------------
# Single-ad branch API (analysis and tests; train-mode BN needs batches)
# ---------------------------------------------------------------------------


def visual_branch(params: ModelParams, config: ModelConfig, frames: np.ndarray,
                  mode: str = INFER) -> tuple[np.ndarray, np.ndarray]:
    """One ad's frames (n, frame_dim) -> (pooled feature, frame weights).
    In train mode the n frame rows form the BN batch."""
    if frames.ndim != 2 or frames.shape != (config.n_frames, config.frame_embed_dim):
        raise ShapeError(
            f"expected ({config.n_frames}, {config.frame_embed_dim}) frames, "
            f"got {frames.shape}")
    h, _ = params.visual_dense.forward(frames)
    if params.visual_bn is not None:
        h, _ = params.visual_bn.forward(h, mode)
    pooled, weights, _ = attention_pool_batch(params.frame_scorer, h[None])
    return pooled[0], weights[0]


def metadata_branch(params: ModelParams, config: ModelConfig,
                    qual: np.ndarray, quant: np.ndarray,
                    mode: str = INFER) -> np.ndarray:
    batch = BatchInputs(qual=np.atleast_2d(qual), quant=np.atleast_2d(quant))
    return _branch_output_only(params, config, batch, mode, "meta")


def text_branch(params: ModelParams, config: ModelConfig,
                text_embeds: np.ndarray, mode: str = INFER) -> np.ndarray:
    """Sum of the per-field embedding rows, then dense (+BN). k may be 0."""
    if text_embeds.ndim != 2 or text_embeds.shape[1] != config.text_embed_dim:
        raise ShapeError(
            f"expected (k, {config.text_embed_dim}) text embeddings, "
            f"got {text_embeds.shape}")
    summed = text_embeds.sum(axis=0) if text_embeds.shape[0] else \
        np.zeros(config.text_embed_dim)
    batch = BatchInputs(text_sum=summed[None])
    return _branch_output_only(params, config, batch, mode, "text")


def _branch_output_only(params, config, batch, mode, mod):
    """Run just one branch (no fusion/head) and return its raw feature."""
    if mod == "visual":
        raise ConfigError("use visual_branch for the visual modality")
    if mod == "meta":
        if config.separate_meta:
            hq, _ = params.meta_qual_dense.forward(batch.qual)
            if params.meta_qual_bn is not None:
                hq, _ = params.meta_qual_bn.forward(hq, mode)
            hz, _ = params.meta_quant_dense.forward(batch.quant)
            if params.meta_quant_bn is not None:
                hz, _ = params.meta_quant_bn.forward(hz, mode)
            hm, _ = params.meta_combine_dense.forward(
                np.concatenate([hq, hz], axis=1))
            if params.meta_combine_bn is not None:
                hm, _ = params.meta_combine_bn.forward(hm, mode)
        else:
            hm, _ = params.meta_joint_dense.forward(
                np.concatenate([batch.qual, batch.quant], axis=1))
            if params.meta_joint_bn is not None:
                hm, _ = params.meta_joint_bn.forward(hm, mode)
        return hm[0]
    ht, _ = params.text_dense.forward(batch.text_sum)
    if params.text_bn is not None:
        ht, _ = params.text_bn.forward(ht, mode)
    return ht[0]


def fuse_modalities(params: ModelParams, branch_outputs: dict[str, np.ndarray]
                    ) -> tuple[np.ndarray, dict[str, float]]:
    """Normalize each active branch vector, weight them by the modality
    attention, and return (fused vector, weights by modality)."""
    active = [m for m in MODALITIES if m in branch_outputs]
    if not active:
        raise ShapeError("fuse_modalities needs at least one active modality")
    normed, _ = l2_normalize_rows(np.stack([branch_outputs[m] for m in active]))
    fused, beta, _ = attention_pool_batch(params.modality_scorer, normed[None])
    return fused[0], {m: float(b) for m, b in zip(active, beta[0])}


def head(params: ModelParams, config: ModelConfig, fused: np.ndarray,
         mode: str = INFER, rng: np.random.Generator | None = None) -> np.ndarray:
    """Regression head on one fused vector or a (B, modal_dim) batch.
    Train mode requires a batch (BN statistics need >= 2 rows)."""
    x = np.atleast_2d(fused)
    h1, _ = params.head_hidden.forward(x)
    if params.head_bn is not None:
        h1, _ = params.head_bn.forward(h1, mode)
    drop_p = config.dropout_p if config.extra_regularization else 0.0
    h1, _ = dropout_forward(drop_p, h1, mode, rng)
    out, _ = params.head_out.forward(h1)
    preds = out[:, 0]
    return float(preds[0]) if fused.ndim == 1 else preds


# ---------------------------------------------------------------------------
# Parameter file (magic AFPM)
# ---------------------------------------------------------------------------


def save_params(path: str | Path, config: ModelConfig, params: ModelParams,
                vocab_fingerprint: str | None = None) -> None:
    """Binary, bit-exact parameter file: header JSON (config + vocab
    fingerprint) followed by named float64 tensors."""
    header = json.dumps({"config": config.to_dict(),
                         "vocab_fingerprint": vocab_fingerprint},
                        sort_keys=True, separators=(",", ":")).encode()
    tensors = params.tensors()
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<II", PARAMS_VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(tensors)))
        for name, t in tensors.items():
            data = np.ascontiguousarray(t, dtype="<f8")
            name_b = name.encode()
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_params(path: str | Path
                ) -> tuple[ModelConfig, ModelParams, str | None]:
    """Read a parameter file; validates magic, version, tensor names, and
    shapes against the embedded config."""
    blob = Path(path).read_bytes()
    view = memoryview(blob)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(blob):
            raise DataFormatError(f"{path}: truncated file while reading {what}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != PARAMS_MAGIC:
        raise DataFormatError(f"{path}: bad magic")
    version, header_len = struct.unpack("<II", take(8, "header"))
    if version != PARAMS_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    try:
        header = json.loads(bytes(take(header_len, "config json")).decode())
        config = ModelConfig.from_dict(header["config"])
        fingerprint = header.get("vocab_fingerprint")
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"{path}: malformed header: {exc}") from exc

    (n_tensors,) = struct.unpack("<I", take(4, "tensor count"))
    loaded: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack("<I", take(4, "tensor name length"))
        name = bytes(take(name_len, "tensor name")).decode()
        (ndim,) = struct.unpack("<I", take(4, f"{name} ndim"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"{name} dims"))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(8 * count, f"{name} data"),
                             dtype="<f8").reshape(shape).copy()
        loaded[name] = data
    if pos != len(blob):
        raise DataFormatError(f"{path}: {len(blob) - pos} trailing bytes")

    params = init_params(config, np.random.default_rng(0))
    expected = params._tensor_slots()
    expected_names = {name for name, *_ in expected}
    if set(loaded) != expected_names:
        missing = sorted(expected_names - set(loaded))
        extra = sorted(set(loaded) - expected_names)
        raise DataFormatError(
            f"{path}: tensor set mismatch (missing {missing}, extra {extra})")
    for name, layer, attr, _ in expected:
        current = getattr(layer, attr)
        if loaded[name].shape != current.shape:
            raise ShapeError(
                f"{path}: tensor {name} has shape {loaded[name].shape}, "
                f"config expects {current.shape}")
        setattr(layer, attr, loaded[name])
    return config, params, fingerprint
