"""Command-line surface: synth, train, evaluate, predict, ablate, analyze.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Every
command writes the resolved run configuration into its output directory,
and report commands render figures next to their CSV/JSON outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import analysis, plots, training
from . import model as M
from .data import (
    EncoderVocab,
    SyntheticConfig,
    encode_records,
    filter_records,
    generate_synthetic,
    load_manifest,
    split_chronological_grouped,
)
from .errors import AdFuseError, ConfigError, VocabMismatchError

logger = logging.getLogger("adfuse")

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def write_run_config(out_dir: Path, command: str, options: dict) -> None:
    write_json(out_dir / "run_config.json",
               {"schema_version": SCHEMA_VERSION, "command": command,
                "options": options})


def _parse_ratios(raw: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad ratios {raw!r}: {exc}") from exc
    if len(parts) != 3:
        raise ConfigError(f"ratios need exactly 3 values, got {raw!r}")
    return parts


# ---------------------------------------------------------------------------
# Shared data plumbing
# ---------------------------------------------------------------------------


def _load_split(manifest: Path, ratios, split_file: Path | None):
    records = load_manifest(manifest)
    kept, rejected = filter_records(records)
    if rejected:
        logger.info("filtered out %d of %d records", len(rejected), len(records))
    if split_file is not None:
        ids = json.loads(Path(split_file).read_text(encoding="utf-8"))
        by_id = {r.ad_id: r for r in kept}
        def pick(name):
            missing = [i for i in ids[name] if i not in by_id]
            if missing:
                raise ConfigError(
                    f"split file references unknown/filtered ads: {missing[:5]}")
            return [by_id[i] for i in ids[name]]
        from .data import DatasetSplit
        return DatasetSplit(train=pick("train"), valid=pick("valid"),
                            test=pick("test"))
    return split_chronological_grouped(kept, ratios)


def _model_config_from_options(opts: dict, vocab: EncoderVocab) -> M.ModelConfig:
    config = M.ModelConfig(
        qual_onehot_dim=vocab.qual_onehot_dim,
        quant_dim=vocab.quant_dim,
        n_frames=opts["n_frames"],
        frame_embed_dim=opts["frame_dim"],
        text_embed_dim=opts["text_dim"],
        modal_dim=opts["modal_dim"],
        qual_feat_dim=opts["qual_feat_dim"],
        quant_feat_dim=opts["quant_feat_dim"],
        head_hidden_dim=opts["head_hidden_dim"],
        dropout_p=opts["dropout_p"],
        use_visual=not opts["no_visual"],
        use_meta=not opts["no_meta"],
        use_text=not opts["no_text"],
        separate_meta=not opts["joint_meta"],
        extra_regularization=not opts["no_extra_regularization"],
        prenormalize_quant=opts["prenormalize_quant"],
    )
    config.validate()
    return config


def _check_vocab(fingerprint: str | None, vocab: EncoderVocab) -> None:
    if fingerprint is not None and fingerprint != vocab.fingerprint():
        raise VocabMismatchError(
            "encoder vocabulary does not match the one the model was "
            "trained with")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SyntheticConfig(n_frames=args.n_frames, frame_dim=args.frame_dim,
                          text_dim=args.text_dim)
    generate_synthetic(args.seed, args.ads, args.videos, out, cfg)
    write_run_config(out, "synth", {
        "seed": args.seed, "ads": args.ads, "videos": args.videos,
        "n_frames": args.n_frames, "frame_dim": args.frame_dim,
        "text_dim": args.text_dim})
    print(f"wrote synthetic corpus ({args.ads} ads, {args.videos} videos) to {out}")
    return 0


_TRAIN_OPTION_DEFAULTS = {
    "n_frames": 15, "frame_dim": 2048, "text_dim": 300, "modal_dim": 256,
    "qual_feat_dim": 16, "quant_feat_dim": 240, "head_hidden_dim": 256,
    "dropout_p": 0.5, "no_visual": False, "no_meta": False, "no_text": False,
    "joint_meta": False, "no_extra_regularization": False,
    "prenormalize_quant": False, "epochs": 200, "learning_rate": 0.01,
    "momentum": 0.9, "batch_size": 256, "seed": 0, "no_shuffle": False,
    "ratios": "0.82,0.08,0.10",
}


def _resolve_train_options(args) -> dict:
    """Defaults <- config file <- explicit flags."""
    opts = dict(_TRAIN_OPTION_DEFAULTS)
    if args.config:
        payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(payload) - set(opts) - {"schema_version"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        opts.update({k: v for k, v in payload.items() if k != "schema_version"})
    for key in opts:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            opts[key] = val
    return opts


def cmd_train(args) -> int:
    opts = _resolve_train_options(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Path(args.manifest)
    base_dir = Path(args.embeddings) if args.embeddings else manifest.parent
    ratios = _parse_ratios(opts["ratios"])
    split = _load_split(manifest, ratios, None)
    vocab = EncoderVocab.build(split.train)
    config = _model_config_from_options(opts, vocab)
    train_config = training.TrainConfig(
        epochs=opts["epochs"], learning_rate=opts["learning_rate"],
        momentum=opts["momentum"], batch_size=opts["batch_size"],
        seed=opts["seed"], shuffle=not opts["no_shuffle"])

    params, log, test_data = training.train_on_split(
        config, train_config, split, vocab, base_dir)

    M.save_params(out / "model.afpm", config, params,
                  vocab_fingerprint=vocab.fingerprint())
    log.best_params_ref = "model.afpm"
    vocab.save(out / "vocab.json")
    write_json(out / "split.json",
               {name: [r.ad_id for r in getattr(split, name)]
                for name in ("train", "valid", "test")})
    log.write_jsonl(out / "train_log.jsonl")
    test_result = training.evaluate(params, config, test_data)
    write_json(out / "summary.json", {
        "train": log.summary(),
        "test": test_result.metrics(),
        "split_counts": split.counts(),
        "train_config": asdict(train_config),
        "model_config": config.to_dict(),
    })
    write_run_config(out, "train", {**opts, "manifest": str(manifest),
                                    "embeddings": str(base_dir),
                                    "out": str(out)})
    print(f"best epoch {log.best_epoch} valid_mse={log.best_valid_mse!r}; "
          f"test rmse={test_result.rmse!r} r={test_result.pearson_r!r}")
    return 0


def _load_model_and_vocab(args) -> tuple[M.ModelConfig, M.ModelParams, EncoderVocab]:
    config, params, fingerprint = M.load_params(args.params)
    vocab_path = Path(args.vocab) if args.vocab else \
        Path(args.params).parent / "vocab.json"
    vocab = EncoderVocab.load(vocab_path)
    _check_vocab(fingerprint, vocab)
    return config, params, vocab


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config, params, vocab = _load_model_and_vocab(args)
    manifest = Path(args.manifest)
    base_dir = Path(args.embeddings) if args.embeddings else manifest.parent
    split = _load_split(manifest, _parse_ratios(args.ratios),
                        Path(args.split_file) if args.split_file else None)
    if args.subset == "all":
        records = split.train + split.valid + split.test
    else:
        records = getattr(split, args.subset)
    data = encode_records(records, vocab, config, base_dir)
    result = training.evaluate(params, config, data)
    write_json(out / "metrics.json", result.metrics())
    write_csv(out / "predictions.csv",
              ["ad_id", "target", "prediction", "raw_ctr_prediction"],
              result.rows())
    plots.save_prediction_scatter(result.targets, result.predictions,
                                  out / "prediction_scatter.png",
                                  f"predictions vs targets ({args.subset})")
    write_run_config(out, "evaluate", {
        "params": str(args.params), "manifest": str(manifest),
        "subset": args.subset, "ratios": args.ratios,
        "split_file": str(args.split_file) if args.split_file else None})
    print(f"rmse={result.rmse!r} r={result.pearson_r!r} "
          f"({len(records)} records)")
    return 0


def cmd_predict(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config, params, vocab = _load_model_and_vocab(args)
    manifest = Path(args.manifest)
    base_dir = Path(args.embeddings) if args.embeddings else manifest.parent
    records = load_manifest(manifest, require_labels=False)
    data = encode_records(records, vocab, config, base_dir, with_targets=False)
    rows = training.predict(params, config, data)
    write_csv(out / "predictions.csv",
              ["ad_id", "prediction", "raw_ctr_prediction"], rows)
    write_run_config(out, "predict", {
        "params": str(args.params), "manifest": str(manifest)})
    print(f"wrote {len(rows)} predictions to {out / 'predictions.csv'}")
    return 0


def cmd_ablate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = json.loads(Path(args.campaign).read_text(encoding="utf-8"))
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{args.campaign}: unsupported campaign schema")
    model_defaults = dict(payload.get("model", {}))
    train_section = dict(payload.get("train", {}))
    for key in ("epochs", "learning_rate", "momentum", "batch_size", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            train_section[key] = val
    train_config = training.TrainConfig(**train_section)
    train_config.validate()
    specs = [analysis.AblationSpec(**run) for run in payload["runs"]]

    manifest = Path(args.manifest)
    base_dir = Path(args.embeddings) if args.embeddings else manifest.parent
    split = _load_split(manifest, _parse_ratios(args.ratios), None)
    results = analysis.run_ablation_campaign(
        specs, split, base_dir, train_config, model_defaults, jobs=args.jobs)

    header = ["run_id", "status", "use_visual", "use_meta", "use_text",
              "meta_variant", "extra_regularization", "n_frames",
              "exclude_metadata_key", "exclude_text_key", "rmse", "pearson_r",
              "r_defined", "best_epoch", "error"]
    rows = [(r.run_id, r.status, r.spec["use_visual"], r.spec["use_meta"],
             r.spec["use_text"], r.spec["meta_variant"],
             r.spec["extra_regularization"], r.spec["n_frames"],
             r.spec["exclude_metadata_key"], r.spec["exclude_text_key"],
             r.rmse, r.pearson_r, r.r_defined, r.best_epoch, r.error)
            for r in results]
    write_csv(out / "campaign.csv", header, rows)
    write_json(out / "campaign.json", [r.to_dict() for r in results])
    plots.save_campaign_metric([r.run_id for r in results],
                               [r.pearson_r for r in results],
                               out / "campaign_r.png", "pearson_r")
    plots.save_campaign_metric([r.run_id for r in results],
                               [r.rmse for r in results],
                               out / "campaign_rmse.png", "rmse")
    write_run_config(out, "ablate", {
        "campaign": str(args.campaign), "manifest": str(manifest),
        "ratios": args.ratios, "jobs": args.jobs,
        "train": {k: train_section.get(k) for k in sorted(train_section)}})
    failed = [r for r in results if r.status != "ok"]
    print(f"campaign finished: {len(results) - len(failed)} ok, "
          f"{len(failed)} failed -> {out / 'campaign.csv'}")
    return 1 if failed else 0


def cmd_analyze(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Path(args.manifest)
    if args.kind == "correlation":
        records = load_manifest(manifest)
        kept, _ = filter_records(records)
        rows = analysis.correlation_table(kept, use_raw_ctr=args.raw_ctr)
        write_csv(out / "correlation.csv",
                  ["key", "kind", "statistic", "defined"],
                  [(r.key, r.kind, r.statistic, r.defined) for r in rows])
        write_json(out / "correlation.json", [asdict(r) for r in rows])
        plots.save_correlation_bars(
            [r.key for r in rows],
            [r.statistic if r.statistic is not None else 0.0 for r in rows],
            out / "correlation.png", "metadata association with CTR")
        write_run_config(out, "analyze", {
            "kind": "correlation", "manifest": str(manifest),
            "raw_ctr": args.raw_ctr})
        print(f"wrote correlation table for {len(kept)} records to {out}")
        return 0

    config, params, vocab = _load_model_and_vocab(args)
    base_dir = Path(args.embeddings) if args.embeddings else manifest.parent
    split = _load_split(manifest, _parse_ratios(args.ratios),
                        Path(args.split_file) if args.split_file else None)
    if args.subset == "all":
        records = split.train + split.valid + split.test
    else:
        records = getattr(split, args.subset)
    data = encode_records(records, vocab, config, base_dir, with_targets=False)
    report = analysis.collect_attention(params, config, data)

    mods = list(report.modalities)
    write_csv(out / "attention_modalities.csv", ["ad_id", *mods],
              [(a, *[float(w) for w in ws])
               for a, ws in zip(report.ad_ids, report.modality_weights)])
    plots.save_stacked_weights(report.modality_weights, mods,
                               out / "attention_modalities.png",
                               "modality attention weights per ad")
    plots.save_weight_means(report.modality_means, mods,
                            out / "attention_modality_means.png",
                            "mean modality attention")
    summary = {"modalities": mods,
               "modality_means": [float(x) for x in report.modality_means]}
    if report.frame_weights is not None:
        frame_cols = [f"frame_{i + 1:02d}" for i in range(config.n_frames)]
        write_csv(out / "attention_frames.csv", ["ad_id", *frame_cols],
                  [(a, *[float(w) for w in ws])
                   for a, ws in zip(report.ad_ids, report.frame_weights)])
        plots.save_stacked_weights(report.frame_weights, frame_cols,
                                   out / "attention_frames.png",
                                   "frame attention weights per ad")
        plots.save_weight_means(report.frame_means, frame_cols,
                                out / "attention_frame_means.png",
                                "mean frame attention")
        summary["frame_means"] = [float(x) for x in report.frame_means]
    write_json(out / "attention_summary.json", summary)
    write_run_config(out, "analyze", {
        "kind": "attention", "manifest": str(manifest),
        "params": str(args.params), "subset": args.subset,
        "split_file": str(args.split_file) if args.split_file else None})
    print(f"wrote attention report for {len(records)} records to {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adfuse",
        description="Multimodal CTR regression: synthesize data, train, "
                    "evaluate, predict, run ablations, analyze attention.")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress to stderr")
    parser.add_argument("--error-json", metavar="PATH",
                        help="on failure, write {error, message} JSON here")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ads", type=int, default=2000)
    p.add_argument("--videos", type=int, default=600)
    p.add_argument("--n-frames", type=int, default=15, dest="n_frames")
    p.add_argument("--frame-dim", type=int, default=2048, dest="frame_dim")
    p.add_argument("--text-dim", type=int, default=300, dest="text_dim")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", help="embedding base dir (default: manifest dir)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with option values; flags override")
    for key, default in _TRAIN_OPTION_DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            p.add_argument(flag, action="store_true", default=None, dest=key)
        elif isinstance(default, int):
            p.add_argument(flag, type=int, default=None, dest=key)
        elif isinstance(default, float):
            p.add_argument(flag, type=float, default=None, dest=key)
        else:
            p.add_argument(flag, default=None, dest=key)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a trained model")
    p.add_argument("--params", required=True)
    p.add_argument("--vocab", help="vocab path (default: alongside params)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--out", required=True)
    p.add_argument("--split-file", dest="split_file")
    p.add_argument("--subset", choices=["train", "valid", "test", "all"],
                   default="test")
    p.add_argument("--ratios", default="0.82,0.08,0.10")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="predict CTR for a manifest")
    p.add_argument("--params", required=True)
    p.add_argument("--vocab")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="run an ablation campaign")
    p.add_argument("--campaign", required=True, help="campaign JSON spec")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--out", required=True)
    p.add_argument("--ratios", default="0.82,0.08,0.10")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None,
                   dest="learning_rate")
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("analyze", help="attention or correlation analysis")
    p.add_argument("--kind", choices=["attention", "correlation"], required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--out", required=True)
    p.add_argument("--params", help="required for --kind attention")
    p.add_argument("--vocab")
    p.add_argument("--split-file", dest="split_file")
    p.add_argument("--subset", choices=["train", "valid", "test", "all"],
                   default="all")
    p.add_argument("--ratios", default="0.82,0.08,0.10")
    p.add_argument("--raw-ctr", action="store_true", dest="raw_ctr")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "analyze" and args.kind == "attention" and not args.params:
        _fail(args, ConfigError("--kind attention requires --params"))
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        _fail(args, exc)
        return 2
    except AdFuseError as exc:
        _fail(args, exc)
        return 1
    except Exception as exc:  # unexpected: still a runtime failure
        logger.exception("unexpected failure")
        _fail(args, exc)
        return 1


def _fail(args, exc: Exception) -> None:
    print(f"error: {exc}", file=sys.stderr)
    if getattr(args, "error_json", None):
        Path(args.error_json).write_text(
            json.dumps({"error": type(exc).__name__, "message": str(exc)},
                       sort_keys=True) + "\n", encoding="utf-8")


if __name__ == "__main__":
    sys.exit(main())
