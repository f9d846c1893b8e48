"""Training protocol: minibatch momentum SGD on the MSE of log-scale CTR,
per-epoch validation, and best-model selection by minimum validation MSE."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from .data import (
    DatasetSplit,
    EncodedDataset,
    EncoderVocab,
    encode_records,
    inverse_transform_ctr,
)
from .errors import ConfigError, TrainingDivergedError
from .numerics import INFER, TRAIN, SgdMomentum, mse_grad, mse_loss
from .stats import pearson

logger = logging.getLogger(__name__)

EVAL_CHUNK = 1024


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 256
    seed: int = 0
    shuffle: bool = True

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (train-mode batch norm)")


@dataclass
class EpochStats:
    epoch: int
    train_mse: float
    valid_mse: float
    wall_time_s: float  # informational; not serialized (runs must be byte-reproducible)


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_valid_mse: float = math.inf
    best_params_ref: str | None = None

    def jsonl_lines(self) -> list[str]:
        return [json.dumps({"epoch": e.epoch, "train_mse": e.train_mse,
                            "valid_mse": e.valid_mse}, sort_keys=True)
                for e in self.epochs]

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.jsonl_lines()) + "\n",
                              encoding="utf-8")

    def summary(self) -> dict:
        return {"epochs": len(self.epochs),
                "best_epoch": self.best_epoch,
                "best_valid_mse": self.best_valid_mse,
                "final_train_mse": self.epochs[-1].train_mse if self.epochs else None,
                "best_params_ref": self.best_params_ref}


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator | None
                   ) -> list[np.ndarray]:
    idx = np.arange(n)
    if rng is not None:
        rng.shuffle(idx)
    batches = [idx[i:i + batch_size] for i in range(0, n, batch_size)]
    # A trailing single record cannot form a BN batch; fold it into the
    # previous batch.
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    if len(batches[0]) < 2:
        raise ConfigError("training needs at least 2 records")
    return batches


def infer_predictions(params: M.ModelParams, config: M.ModelConfig,
                      data: EncodedDataset) -> np.ndarray:
    """Inference-mode predictions for a whole dataset, chunked for memory.
    Pure: no parameter or running-stat mutation."""
    preds = np.empty(len(data))
    for start in range(0, len(data), EVAL_CHUNK):
        sel = np.arange(start, min(start + EVAL_CHUNK, len(data)))
        batch = M.batch_from_dataset(data, sel)
        trace = M.forward_batch(params, config, batch, INFER)
        preds[sel] = trace.predictions
    return preds


def train(model_config: M.ModelConfig, train_config: TrainConfig,
          train_data: EncodedDataset, valid_data: EncodedDataset,
          ) -> tuple[M.ModelParams, TrainLog]:
    """Full protocol: epochs x minibatch momentum-SGD steps, validation MSE
    after every epoch, parameters returned from the epoch with the minimum
    validation MSE (earliest epoch wins ties). Deterministic given the seed."""
    model_config.validate()
    train_config.validate()
    if train_data.targets is None or valid_data.targets is None:
        raise ConfigError("training needs labeled datasets")

    seed = train_config.seed
    params = M.init_params(model_config,
                           np.random.default_rng(np.random.SeedSequence([seed, 0])))
    optimizer = SgdMomentum(learning_rate=train_config.learning_rate,
                            momentum=train_config.momentum)
    log = TrainLog()
    best_params = params.clone()

    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        shuffle_rng = np.random.default_rng(
            np.random.SeedSequence([seed, 1, epoch])) if train_config.shuffle else None
        dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 2, epoch]))
        batches = _epoch_batches(len(train_data), train_config.batch_size,
                                 shuffle_rng)
        sq_err_sum = 0.0
        for step, sel in enumerate(batches):
            batch = M.batch_from_dataset(train_data, sel)
            targets = train_data.targets[sel]
            trace = M.forward_batch(params, model_config, batch, TRAIN,
                                    rng=dropout_rng)
            loss = mse_loss(trace.predictions, targets)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step}")
            grads = M.backward_batch(params, model_config, trace,
                                     mse_grad(trace.predictions, targets))
            optimizer.step(params.learnable(), grads)
            sq_err_sum += loss * len(sel)
        train_mse = sq_err_sum / len(train_data)

        valid_preds = infer_predictions(params, model_config, valid_data)
        valid_mse = mse_loss(valid_preds, valid_data.targets)
        if not math.isfinite(valid_mse):
            raise TrainingDivergedError(
                f"non-finite validation MSE at epoch {epoch}")
        wall = time.perf_counter() - t0
        log.epochs.append(EpochStats(epoch=epoch, train_mse=train_mse,
                                     valid_mse=valid_mse, wall_time_s=wall))
        if valid_mse < log.best_valid_mse:
            log.best_valid_mse = valid_mse
            log.best_epoch = epoch
            best_params = params.clone()
        logger.info("epoch %d train_mse=%.6f valid_mse=%.6f (%.2fs)",
                    epoch, train_mse, valid_mse, wall)
    return best_params, log


def train_on_split(model_config: M.ModelConfig, train_config: TrainConfig,
                   split: DatasetSplit, vocab: EncoderVocab,
                   base_dir: str | Path
                   ) -> tuple[M.ModelParams, TrainLog, EncodedDataset]:
    """Encode the split and train; returns the encoded test set too so
    callers can evaluate without re-reading embeddings."""
    train_data = encode_records(split.train, vocab, model_config, base_dir)
    valid_data = encode_records(split.valid, vocab, model_config, base_dir)
    params, log = train(model_config, train_config, train_data, valid_data)
    test_data = encode_records(split.test, vocab, model_config, base_dir)
    return params, log, test_data


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalResult:
    rmse: float
    pearson_r: float | None
    ad_ids: list[str]
    targets: np.ndarray
    predictions: np.ndarray

    @property
    def r_defined(self) -> bool:
        return self.pearson_r is not None

    def metrics(self) -> dict:
        return {"rmse": self.rmse,
                "pearson_r": self.pearson_r,
                "r_defined": self.r_defined,
                "n_records": len(self.ad_ids)}

    def rows(self) -> list[tuple]:
        """(ad_id, target, prediction, raw_ctr_prediction) per ad."""
        return [(a, float(t), float(p), inverse_transform_ctr(float(p)))
                for a, t, p in zip(self.ad_ids, self.targets, self.predictions)]


def evaluate(params: M.ModelParams, config: M.ModelConfig,
             data: EncodedDataset) -> EvalResult:
    """RMSE and Pearson correlation between inference-mode predictions and
    the log-scale targets. R is flagged undefined when either side is
    constant; RMSE is always valid."""
    if data.targets is None:
        raise ConfigError("evaluate needs a labeled dataset")
    preds = infer_predictions(params, config, data)
    rmse = float(np.sqrt(np.mean((preds - data.targets) ** 2)))
    r = pearson(preds, data.targets) if len(data) >= 2 else None
    return EvalResult(rmse=rmse, pearson_r=r, ad_ids=list(data.ad_ids),
                      targets=data.targets.copy(), predictions=preds)


def predict(params: M.ModelParams, config: M.ModelConfig,
            data: EncodedDataset) -> list[tuple]:
    """(ad_id, prediction, raw_ctr_prediction) rows for unlabeled data."""
    preds = infer_predictions(params, config, data)
    return [(a, float(p), inverse_transform_ctr(float(p)))
            for a, p in zip(data.ad_ids, preds)]
