"""Job manifest parsing and the extraction pipeline.

A job line carries the ad's metadata plus the path of its video; the
pipeline decodes frames, runs both feature extractors, writes one AFEB
file per modality, and emits a manifest line in the schema the model's
data loader accepts.
"""

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .afeb import write_embedding
from .errors import JobFormatError
from .features import FrameFeatureExtractor
from .frames import probe_duration, sample_frames
from .textembed import TextEmbedder

logger = logging.getLogger(__name__)

MIN_DURATION_S = 5.0
MAX_DURATION_S = 30.0
DEFAULT_N_FRAMES = 15


@dataclass
class ExtractionJob:
    ad_id: str
    video_id: str
    created_at: str
    video_path: str
    qualitative: dict = field(default_factory=dict)
    quantitative: dict = field(default_factory=dict)
    text_fields: dict = field(default_factory=dict)
    impressions: int = 0
    clicks: int = 0
    n_frames: int = DEFAULT_N_FRAMES


def _normalize_timestamp(raw: str) -> str:
    try:
        dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise JobFormatError(f"bad timestamp {raw!r}: {exc}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def load_jobs(path: str | Path, default_n_frames: int = DEFAULT_N_FRAMES
              ) -> list[ExtractionJob]:
    jobs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
                jobs.append(ExtractionJob(
                    ad_id=str(payload["ad_id"]),
                    video_id=str(payload["video_id"]),
                    created_at=_normalize_timestamp(payload["created_at"]),
                    video_path=str(payload["video_path"]),
                    qualitative=dict(payload.get("qualitative", {})),
                    quantitative=dict(payload.get("quantitative", {})),
                    text_fields=dict(payload.get("text_fields", {})),
                    impressions=int(payload.get("impressions", 0)),
                    clicks=int(payload.get("clicks", 0)),
                    n_frames=int(payload.get("n_frames", default_n_frames)),
                ))
            except JobFormatError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise JobFormatError(f"{path}:{lineno}: {exc}") from exc
    return jobs


def run_job(job: ExtractionJob, frame_extractor: FrameFeatureExtractor,
            text_embedder: TextEmbedder, out_dir: Path) -> dict:
    """Extract one ad; returns its manifest entry."""
    duration = probe_duration(job.video_path)
    if not MIN_DURATION_S <= duration <= MAX_DURATION_S:
        logger.warning("%s: duration %.2fs outside [%.0f, %.0f]s; extracting "
                       "anyway (dataset filter applies downstream)",
                       job.ad_id, duration, MIN_DURATION_S, MAX_DURATION_S)
    frames = sample_frames(job.video_path, job.n_frames)
    features = frame_extractor.extract(frames)
    text_rows = text_embedder.embed_fields(job.text_fields)

    frame_ref = f"embeddings/{job.ad_id}_frames.afeb"
    text_ref = f"embeddings/{job.ad_id}_text.afeb"
    (out_dir / "embeddings").mkdir(parents=True, exist_ok=True)
    write_embedding(out_dir / frame_ref, features)
    write_embedding(out_dir / text_ref, text_rows)

    return {
        "ad_id": job.ad_id,
        "video_id": job.video_id,
        "created_at": job.created_at,
        "qualitative": job.qualitative,
        "quantitative": job.quantitative,
        "text_fields": job.text_fields,
        "impressions": job.impressions,
        "clicks": job.clicks,
        "duration_s": duration,
        "frame_embed_ref": frame_ref,
        "text_embed_ref": text_ref,
    }


def run_jobs(jobs: list[ExtractionJob], frame_extractor: FrameFeatureExtractor,
             text_embedder: TextEmbedder, out_dir: str | Path) -> Path:
    """Run every job and write the augmented manifest plus a lockfile
    recording the model identifiers used."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = [run_job(job, frame_extractor, text_embedder, out_dir)
               for job in jobs]
    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True, separators=(",", ":"))
                     + "\n")
    lock = {
        "frame_model": {"kind": "resnet50-penultimate",
                        "sha256": frame_extractor.weights_sha256},
        "word_vectors": {"dim": text_embedder.dim,
                         "sha256": text_embedder.vectors_sha256},
    }
    (out_dir / "models.lock.json").write_text(
        json.dumps(lock, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return manifest
