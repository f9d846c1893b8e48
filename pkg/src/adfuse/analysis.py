"""Analysis machinery: attention-weight aggregation, metadata/CTR
association statistics, and the ablation campaign driver."""

from __future__ import annotations

import hashlib
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import model as M
from .data import (
    QUALITATIVE_KEYS,
    QUANTITATIVE_KEYS,
    TEXT_KEYS,
    AdRecord,
    DatasetSplit,
    EncodedDataset,
    EncoderVocab,
    compute_ctr,
    encode_records,
    log_transform_ctr,
)
from .errors import ConfigError
from .numerics import INFER
from .stats import correlation_ratio, pearson  # re-exported analysis surface
from .training import EVAL_CHUNK, TrainConfig, evaluate, train

__all__ = [
    "AttentionReport", "collect_attention", "CorrelationRow",
    "correlation_table", "correlation_ratio", "pearson",
    "AblationSpec", "AblationResult", "run_ablation_campaign",
    "META_VARIANTS",
]

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Attention aggregation
# ---------------------------------------------------------------------------


@dataclass
class AttentionReport:
    ad_ids: list[str]
    modalities: tuple[str, ...]
    modality_weights: np.ndarray          # (N, n_active)
    frame_weights: np.ndarray | None      # (N, n_frames) when visual active
    modality_means: np.ndarray            # (n_active,)
    frame_means: np.ndarray | None        # (n_frames,)


def collect_attention(params: M.ModelParams, config: M.ModelConfig,
                      data: EncodedDataset) -> AttentionReport:
    """Inference-mode frame and modality weights for every ad, plus their
    dataset-level means."""
    mods = config.active_modalities
    beta = np.empty((len(data), len(mods)))
    alpha = np.empty((len(data), config.n_frames)) if config.use_visual else None
    for start in range(0, len(data), EVAL_CHUNK):
        sel = np.arange(start, min(start + EVAL_CHUNK, len(data)))
        trace = M.forward_batch(params, config, M.batch_from_dataset(data, sel),
                                INFER)
        beta[sel] = trace.modality_weights
        if alpha is not None:
            alpha[sel] = trace.frame_weights
    return AttentionReport(
        ad_ids=list(data.ad_ids), modalities=mods, modality_weights=beta,
        frame_weights=alpha, modality_means=beta.mean(axis=0),
        frame_means=alpha.mean(axis=0) if alpha is not None else None)


# ---------------------------------------------------------------------------
# Metadata / CTR association
# ---------------------------------------------------------------------------


@dataclass
class CorrelationRow:
    key: str
    kind: str                 # "qualitative" | "quantitative"
    statistic: float | None   # eta or Pearson r; None when undefined
    defined: bool


def correlation_table(records: list[AdRecord],
                      use_raw_ctr: bool = False) -> list[CorrelationRow]:
    """Correlation ratio per qualitative key and Pearson coefficient per
    quantitative key against the CTR target (log scale by default)."""
    if not records:
        raise ConfigError("correlation_table needs at least one record")
    y = np.array([compute_ctr(r.clicks, r.impressions) for r in records])
    if not use_raw_ctr:
        y = np.array([log_transform_ctr(v) for v in y])
    rows = []
    degenerate = bool(np.all(y == y[0]))
    for key in QUALITATIVE_KEYS:
        labels = [r.qualitative[key] for r in records]
        eta = correlation_ratio(y, labels)
        rows.append(CorrelationRow(key=key, kind="qualitative", statistic=eta,
                                   defined=not degenerate))
    for key in QUANTITATIVE_KEYS:
        x = np.array([float(r.quantitative[key]) for r in records])
        r_val = pearson(x, y) if len(records) >= 2 else None
        rows.append(CorrelationRow(key=key, kind="quantitative",
                                   statistic=r_val, defined=r_val is not None))
    return rows


# ---------------------------------------------------------------------------
# Ablation campaign
# ---------------------------------------------------------------------------

META_VARIANTS = {
    "unprocessed": (False, False),                 # (separate_meta, prenormalize)
    "prenormalized": (False, True),
    "separated": (True, False),
    "separated_prenormalized": (True, True),
}


@dataclass
class AblationSpec:
    run_id: str
    use_visual: bool = True
    use_meta: bool = True
    use_text: bool = True
    meta_variant: str = "separated"
    extra_regularization: bool = True
    n_frames: int | None = None               # None: corpus default
    exclude_metadata_key: str | None = None
    exclude_text_key: str | None = None

    def validate(self) -> None:
        if not (self.use_visual or self.use_meta or self.use_text):
            raise ConfigError(f"{self.run_id}: at least one modality required")
        if self.meta_variant not in META_VARIANTS:
            raise ConfigError(
                f"{self.run_id}: unknown meta_variant {self.meta_variant!r} "
                f"(one of {sorted(META_VARIANTS)})")
        if self.exclude_metadata_key is not None and \
                self.exclude_metadata_key not in QUALITATIVE_KEYS + QUANTITATIVE_KEYS:
            raise ConfigError(
                f"{self.run_id}: unknown metadata key {self.exclude_metadata_key!r}")
        if self.exclude_text_key is not None and \
                self.exclude_text_key not in TEXT_KEYS:
            raise ConfigError(
                f"{self.run_id}: unknown text key {self.exclude_text_key!r}")


@dataclass
class AblationResult:
    run_id: str
    spec: dict
    status: str                    # "ok" | "failed"
    rmse: float | None = None
    pearson_r: float | None = None
    r_defined: bool = False
    best_epoch: int | None = None
    best_valid_mse: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _run_seed(base_seed: int, run_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{run_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _run_one(spec: AblationSpec, split: DatasetSplit, base_dir: str,
             train_config: TrainConfig, model_defaults: dict) -> AblationResult:
    try:
        spec.validate()
        separate, prenorm = META_VARIANTS[spec.meta_variant]
        exclude_qual = ()
        exclude_quant = ()
        if spec.exclude_metadata_key in QUALITATIVE_KEYS:
            exclude_qual = (spec.exclude_metadata_key,)
        elif spec.exclude_metadata_key in QUANTITATIVE_KEYS:
            exclude_quant = (spec.exclude_metadata_key,)
        exclude_text = (spec.exclude_text_key,) if spec.exclude_text_key else ()
        vocab = EncoderVocab.build(split.train, exclude_qualitative=exclude_qual,
                                   exclude_quantitative=exclude_quant,
                                   exclude_text=exclude_text)
        overrides = dict(model_defaults)
        if spec.n_frames is not None:
            overrides["n_frames"] = spec.n_frames
        config = M.ModelConfig(
            qual_onehot_dim=vocab.qual_onehot_dim, quant_dim=vocab.quant_dim,
            use_visual=spec.use_visual, use_meta=spec.use_meta,
            use_text=spec.use_text, separate_meta=separate,
            prenormalize_quant=prenorm,
            extra_regularization=spec.extra_regularization, **overrides)
        config.validate()
        run_tc = TrainConfig(epochs=train_config.epochs,
                             learning_rate=train_config.learning_rate,
                             momentum=train_config.momentum,
                             batch_size=train_config.batch_size,
                             seed=_run_seed(train_config.seed, spec.run_id),
                             shuffle=train_config.shuffle)
        train_data = encode_records(split.train, vocab, config, base_dir)
        valid_data = encode_records(split.valid, vocab, config, base_dir)
        params, log = train(config, run_tc, train_data, valid_data)
        test_data = encode_records(split.test, vocab, config, base_dir)
        result = evaluate(params, config, test_data)
        return AblationResult(run_id=spec.run_id, spec=asdict(spec), status="ok",
                              rmse=result.rmse, pearson_r=result.pearson_r,
                              r_defined=result.r_defined,
                              best_epoch=log.best_epoch,
                              best_valid_mse=log.best_valid_mse)
    except Exception as exc:  # a failed run is recorded, campaign continues
        logger.warning("ablation run %s failed: %s", spec.run_id, exc)
        logger.debug("%s", traceback.format_exc())
        return AblationResult(run_id=spec.run_id, spec=asdict(spec),
                              status="failed",
                              error=f"{type(exc).__name__}: {exc}")


def run_ablation_campaign(specs: list[AblationSpec], split: DatasetSplit,
                          base_dir: str | Path, train_config: TrainConfig,
                          model_defaults: dict | None = None,
                          jobs: int = 1) -> list[AblationResult]:
    """Train and evaluate one model per spec on a shared split. Each run
    gets a seed derived from (campaign seed, run id), so results do not
    depend on execution order; with jobs > 1 runs execute in parallel."""
    ids = [s.run_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ConfigError("ablation run ids must be unique")
    model_defaults = dict(model_defaults or {})
    base_dir = str(base_dir)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, s, split, base_dir, train_config,
                                   model_defaults) for s in specs]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(s, split, base_dir, train_config, model_defaults)
                   for s in specs]
    return results
