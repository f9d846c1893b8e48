"""Training protocol and evaluation metrics."""

import hashlib
import math

import numpy as np
import pytest

from adfuse import model as M
from adfuse.data import EncodedDataset
from adfuse.errors import TrainingDivergedError
from adfuse.training import TrainConfig, evaluate, predict, train

from conftest import small_config


def tiny_dataset(n, cfg, rng, target_fn=None, duplicated=False):
    if duplicated:
        frames = np.tile(rng.standard_normal(
            (1, cfg.n_frames, cfg.frame_embed_dim)).astype(np.float32), (n, 1, 1))
        qual = np.tile((rng.random((1, cfg.qual_onehot_dim)) < 0.3).astype(float),
                       (n, 1))
        quant = np.tile(rng.standard_normal((1, cfg.quant_dim)), (n, 1))
        text = np.tile(rng.standard_normal((1, cfg.text_embed_dim)), (n, 1))
        targets = np.full(n, 0.31)
    else:
        frames = rng.standard_normal(
            (n, cfg.n_frames, cfg.frame_embed_dim)).astype(np.float32)
        qual = (rng.random((n, cfg.qual_onehot_dim)) < 0.3).astype(float)
        quant = rng.standard_normal((n, cfg.quant_dim))
        text = rng.standard_normal((n, cfg.text_embed_dim))
        targets = target_fn(quant) if target_fn else rng.random(n)
    return EncodedDataset(ad_ids=[f"ad_{i}" for i in range(n)], frames=frames,
                          qual=qual, quant=quant, text_sum=text, targets=targets)


def params_digest(params):
    h = hashlib.sha256()
    for name, t in sorted(params.tensors().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(t, dtype="<f8").tobytes())
    return h.hexdigest()


class TestTrain:
    def test_memorizes_duplicated_records(self, rng):
        cfg = small_config()
        data = tiny_dataset(4, cfg, rng, duplicated=True)
        tc = TrainConfig(epochs=50, learning_rate=0.01, momentum=0.9,
                         batch_size=4, seed=0)
        _, log = train(cfg, tc, data, data)
        assert min(e.train_mse for e in log.epochs) < 1e-3

    def test_seeded_determinism(self, rng):
        cfg = small_config()
        data = tiny_dataset(12, cfg, rng)
        valid = tiny_dataset(6, cfg, rng)
        tc = TrainConfig(epochs=4, learning_rate=0.02, batch_size=4, seed=7)
        p1, log1 = train(cfg, tc, data, valid)
        p2, log2 = train(cfg, tc, data, valid)
        assert log1.jsonl_lines() == log2.jsonl_lines()
        assert params_digest(p1) == params_digest(p2)

    def test_zero_learning_rate_is_null_update(self, rng):
        cfg = small_config()
        data = tiny_dataset(8, cfg, rng)
        valid = tiny_dataset(4, cfg, rng)
        tc = TrainConfig(epochs=3, learning_rate=0.0, batch_size=4, seed=1)
        params, _ = train(cfg, tc, data, valid)
        fresh = M.init_params(cfg, np.random.default_rng(
            np.random.SeedSequence([1, 0])))
        for name, t in params.learnable().items():
            np.testing.assert_array_equal(t, fresh.learnable()[name], err_msg=name)

    def test_zero_learning_rate_constant_validation(self, rng):
        # BN running stats are forward-pass state, so the fully constant
        # validation curve only holds without the regularization layers.
        cfg = small_config(extra_regularization=False)
        data = tiny_dataset(8, cfg, rng)
        valid = tiny_dataset(4, cfg, rng)
        tc = TrainConfig(epochs=3, learning_rate=0.0, batch_size=4, seed=1)
        _, log = train(cfg, tc, data, valid)
        valid_mses = [e.valid_mse for e in log.epochs]
        assert max(valid_mses) - min(valid_mses) < 1e-12

    def test_best_epoch_minimizes_validation(self, rng):
        cfg = small_config()
        data = tiny_dataset(16, cfg, rng)
        valid = tiny_dataset(8, cfg, rng)
        tc = TrainConfig(epochs=6, learning_rate=0.01, batch_size=4, seed=3)
        _, log = train(cfg, tc, data, valid)
        mses = [e.valid_mse for e in log.epochs]
        assert log.best_epoch == int(np.argmin(mses))
        assert log.best_valid_mse == min(mses)

    def test_divergence_is_reported(self, rng):
        cfg = small_config()
        data = tiny_dataset(8, cfg, rng)
        tc = TrainConfig(epochs=10, learning_rate=1e12, batch_size=4, seed=0)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingDivergedError, match="epoch"):
                train(cfg, tc, data, data)

    def test_loss_nonincreasing_small_lr(self):
        # Smooth configuration (no BN/dropout), tiny lr: the first five
        # epochs must be non-increasing in at least 19 of 20 seeded runs.
        cfg = small_config(extra_regularization=False)
        ok = 0
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            data = tiny_dataset(12, cfg, rng)
            tc = TrainConfig(epochs=5, learning_rate=1e-3, momentum=0.0,
                             batch_size=4, seed=seed)
            _, log = train(cfg, tc, data, data)
            mses = [e.train_mse for e in log.epochs]
            if all(b <= a + 1e-12 for a, b in zip(mses, mses[1:])):
                ok += 1
        assert ok >= 19

    def test_validation_does_not_mutate_params(self, rng):
        cfg = small_config()
        params = M.init_params(cfg, rng)
        data = tiny_dataset(10, cfg, rng)
        before = params_digest(params)
        evaluate(params, cfg, data)
        assert params_digest(params) == before


class TestEvaluate:
    def _result_for(self, preds, targets):
        # run the metric path directly on a fabricated dataset via a stub
        from adfuse.training import EvalResult
        from adfuse.stats import pearson
        rmse = float(np.sqrt(np.mean((np.asarray(preds) - np.asarray(targets)) ** 2)))
        return EvalResult(rmse=rmse, pearson_r=pearson(preds, targets),
                          ad_ids=[str(i) for i in range(len(preds))],
                          targets=np.asarray(targets, dtype=float),
                          predictions=np.asarray(preds, dtype=float))

    def test_perfect_predictions(self):
        r = self._result_for([0.1, 0.5, 0.9], [0.1, 0.5, 0.9])
        assert r.rmse == 0.0
        assert r.pearson_r == pytest.approx(1.0)

    def test_anti_correlation(self):
        r = self._result_for([1.0, 0.0, -1.0], [-1.0, 0.0, 1.0])
        assert r.pearson_r == pytest.approx(-1.0)

    def test_matches_independent_formula(self):
        targets = [0.0, 1.0, 2.0]
        preds = [0.1, 0.9, 2.3]
        r = self._result_for(preds, targets)
        # independent naive evaluation
        n = len(targets)
        rmse = math.sqrt(sum((p - t) ** 2 for p, t in zip(preds, targets)) / n)
        mp = sum(preds) / n
        mt = sum(targets) / n
        cov = sum((p - mp) * (t - mt) for p, t in zip(preds, targets))
        corr = cov / math.sqrt(sum((p - mp) ** 2 for p in preds)
                               * sum((t - mt) ** 2 for t in targets))
        assert r.rmse == pytest.approx(rmse, abs=1e-12)
        assert r.pearson_r == pytest.approx(corr, abs=1e-12)

    def test_constant_vector_flags_undefined(self, rng):
        cfg = small_config()
        params = M.init_params(cfg, rng)
        data = tiny_dataset(6, cfg, rng)
        data.targets = np.full(6, 0.4)  # constant target
        res = evaluate(params, cfg, data)
        assert res.pearson_r is None and not res.r_defined
        assert math.isfinite(res.rmse)

    def test_rows_include_raw_ctr(self, rng):
        cfg = small_config()
        params = M.init_params(cfg, rng)
        data = tiny_dataset(4, cfg, rng)
        rows = evaluate(params, cfg, data).rows()
        assert len(rows) == 4
        for ad_id, target, pred, raw in rows:
            assert raw >= 0.0
            assert raw == pytest.approx(max((10 ** pred - 1) / 100, 0.0))


class TestPredict:
    def test_row_per_record(self, rng):
        cfg = small_config()
        params = M.init_params(cfg, rng)
        data = tiny_dataset(7, cfg, rng)
        data.targets = None
        rows = predict(params, cfg, data)
        assert [r[0] for r in rows] == data.ad_ids
