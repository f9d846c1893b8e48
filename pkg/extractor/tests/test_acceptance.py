"""Extractor smoke acceptance: end-to-end extraction on a bundled 5 s clip
with sample texts, validated with the consumer package's own loaders."""

import hashlib
import json
from pathlib import Path

import pytest

from adfuse_extractor.cli import main


@pytest.fixture(scope="module")
def job_file(tmp_path_factory, clip_5s):
    path = tmp_path_factory.mktemp("jobs") / "jobs.jsonl"
    job = {
        "ad_id": "smoke_ad",
        "video_id": "smoke_video",
        "created_at": "2021-06-01T12:00:00Z",
        "video_path": str(clip_5s),
        "qualitative": {"promotion_id": "promo_00", "genre": "game"},
        "quantitative": {"target_cost": 500.0},
        "text_fields": {
            "advertiser_name": "swift games",
            "account_name": "prime app",
            "promotion_name": "50 off sale",
            "creative_title": "ゲーム広告",
            "creative_description": "daily fresh game now",
        },
        "impressions": 1200,
        "clicks": 9,
    }
    path.write_text(json.dumps(job) + "\n", encoding="utf-8")
    return path


def _run(out, job_file, backbone_weights, word_vectors):
    rc = main(["--jobs", str(job_file), "--weights", str(backbone_weights),
               "--wordvecs", str(word_vectors), "--out", str(out),
               "--n-frames", "15"])
    assert rc == 0
    return out


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_criterion_extractor_smoke(tmp_path, job_file, backbone_weights,
                                   word_vectors):
    out1 = _run(tmp_path / "run1", job_file, backbone_weights, word_vectors)

    # primary-side validation through the consumer package
    from adfuse.data import load_embedding, load_manifest

    frames = load_embedding(out1 / "embeddings/smoke_ad_frames.afeb",
                            expected_rows=15, expected_cols=2048)
    text = load_embedding(out1 / "embeddings/smoke_ad_text.afeb",
                          expected_rows=5, expected_cols=300)
    assert frames.shape == (15, 2048)
    assert text.shape == (5, 300)

    records = load_manifest(out1 / "manifest.jsonl")
    assert len(records) == 1
    rec = records[0]
    assert rec.ad_id == "smoke_ad"
    assert rec.duration_s == pytest.approx(5.0, abs=0.01)
    assert rec.frame_embed_ref == "embeddings/smoke_ad_frames.afeb"

    lock = json.loads((out1 / "models.lock.json").read_text())
    assert set(lock) == {"frame_model", "word_vectors"}

    # repeated runs are byte-identical
    out2 = _run(tmp_path / "run2", job_file, backbone_weights, word_vectors)
    for rel in ("embeddings/smoke_ad_frames.afeb",
                "embeddings/smoke_ad_text.afeb", "manifest.jsonl",
                "models.lock.json"):
        assert _sha(out1 / rel) == _sha(out2 / rel), rel
    print("\nACCEPTANCE extractor-smoke: PASS")


def test_lockfile_pinning_roundtrip(tmp_path, job_file, backbone_weights,
                                    word_vectors):
    out1 = _run(tmp_path / "first", job_file, backbone_weights, word_vectors)
    # re-extract pinned against the produced lockfile: must succeed
    rc = main(["--jobs", str(job_file), "--weights", str(backbone_weights),
               "--wordvecs", str(word_vectors), "--out", str(tmp_path / "second"),
               "--n-frames", "15", "--lockfile",
               str(out1 / "models.lock.json")])
    assert rc == 0


def test_wrong_pin_fails(tmp_path, job_file, backbone_weights, word_vectors):
    lock = tmp_path / "lock.json"
    lock.write_text(json.dumps({"frame_model": {"sha256": "0" * 64},
                                "word_vectors": {}}), encoding="utf-8")
    rc = main(["--jobs", str(job_file), "--weights", str(backbone_weights),
               "--wordvecs", str(word_vectors), "--out", str(tmp_path / "out"),
               "--lockfile", str(lock)])
    assert rc == 1
