"""Dataset schema, ingestion, encoding, splitting, and the synthetic corpus.

Ads arrive as a JSON-lines manifest plus one binary embedding file per ad
per modality (frames and text). All loading is strict: malformed input
raises a typed error, never a crash or silent truncation.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError, NonFiniteError, ShapeError

# Metadata schema: key order is fixed and load-bearing (encoding layout,
# text row order in embedding files).
QUALITATIVE_KEYS = (
    "promotion_id",
    "publisher_platform",
    "platform",
    "genre",
    "sub_genre",
    "web_app",
    "funnel",
    "creative_type",
    "targeting_type",
    "targeting_gender",
    "targeting_os",
    "targeting_device",
)
QUANTITATIVE_KEYS = (
    "targeting_age_min",
    "targeting_age_max",
    "target_cost",
    "target_cpa",
)
TEXT_KEYS = (
    "advertiser_name",
    "account_name",
    "promotion_name",
    "creative_title",
    "creative_description",
)

EMBEDDING_MAGIC = b"AFEB"
EMBEDDING_VERSION = 1

# Record filters: shown more than 500 times, clicked at least once,
# video between 5 and 30 seconds.
MIN_IMPRESSIONS_EXCLUSIVE = 500
MIN_CLICKS = 1
MIN_DURATION_S = 5.0
MAX_DURATION_S = 30.0

DEFAULT_SPLIT_RATIOS = (0.82, 0.08, 0.10)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass
class AdRecord:
    ad_id: str
    video_id: str
    created_at: datetime
    qualitative: dict[str, str]
    quantitative: dict[str, float]
    text_fields: dict[str, str]
    impressions: int
    clicks: int
    duration_s: float
    frame_embed_ref: str
    text_embed_ref: str

    def validate(self) -> None:
        if self.impressions < 0:
            raise DataFormatError(f"{self.ad_id}: negative impressions")
        if self.clicks < 0 or self.clicks > self.impressions:
            raise DataFormatError(
                f"{self.ad_id}: clicks must be in [0, impressions]")
        if not self.duration_s > 0:
            raise DataFormatError(f"{self.ad_id}: duration_s must be positive")


def compute_ctr(clicks: int, impressions: int) -> float:
    """Click-through rate: clicks / impressions."""
    if impressions < 1:
        raise DataFormatError("ctr undefined for zero impressions")
    if clicks < 0 or clicks > impressions:
        raise DataFormatError("clicks must be in [0, impressions]")
    return clicks / impressions


def log_transform_ctr(ctr_raw: float) -> float:
    """Regression target scale: log10(100 * ctr + 1)."""
    if ctr_raw < 0:
        raise DataFormatError("ctr must be non-negative")
    return math.log10(100.0 * ctr_raw + 1.0)


def inverse_transform_ctr(y: float) -> float:
    """Inverse of the target transform, clamped at zero."""
    return max((10.0 ** y - 1.0) / 100.0, 0.0)


def filter_records(records: list[AdRecord]
                   ) -> tuple[list[AdRecord], list[tuple[AdRecord, str]]]:
    """Keep records passing all three dataset rules; each rejection is
    tagged with the first failing rule."""
    kept: list[AdRecord] = []
    rejected: list[tuple[AdRecord, str]] = []
    for r in records:
        if r.impressions <= MIN_IMPRESSIONS_EXCLUSIVE:
            rejected.append((r, "impressions_at_most_500"))
        elif r.clicks < MIN_CLICKS:
            rejected.append((r, "no_clicks"))
        elif not MIN_DURATION_S <= r.duration_s <= MAX_DURATION_S:
            rejected.append((r, "duration_out_of_range"))
        else:
            kept.append(r)
    return kept, rejected


# ---------------------------------------------------------------------------
# Chronological, video-grouped splitting
# ---------------------------------------------------------------------------


@dataclass
class DatasetSplit:
    train: list[AdRecord]
    valid: list[AdRecord]
    test: list[AdRecord]

    def counts(self) -> dict[str, int]:
        return {"train": len(self.train), "valid": len(self.valid),
                "test": len(self.test)}


def split_chronological_grouped(records: list[AdRecord],
                                ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS
                                ) -> DatasetSplit:
    """Assign whole video groups, ordered by their earliest creation time,
    greedily to train, then valid, then test. No video crosses splits and
    later splits contain strictly newer groups."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {sum(ratios)}")
    groups: dict[str, list[AdRecord]] = {}
    for r in records:
        groups.setdefault(r.video_id, []).append(r)
    if len(groups) < 3:
        raise ConfigError(
            f"need at least 3 video groups to split, got {len(groups)}")
    for g in groups.values():
        g.sort(key=lambda r: (r.created_at, r.ad_id))
    ordered = sorted(groups.values(),
                     key=lambda g: (g[0].created_at, g[0].video_id))

    total = len(records)
    thresholds = (ratios[0] * total, (ratios[0] + ratios[1]) * total)
    buckets: list[list[list[AdRecord]]] = [[], [], []]
    cum = 0
    phase = 0
    for g in ordered:
        buckets[phase].append(g)
        cum += len(g)
        while phase < 2 and cum >= thresholds[phase]:
            phase += 1
    # A huge early group can starve the later splits; push trailing groups
    # forward so every split holds at least one whole group.
    if not buckets[2]:
        donor = buckets[1] if buckets[1] else buckets[0]
        buckets[2].append(donor.pop())
    if not buckets[1]:
        buckets[1].append(buckets[0].pop())

    def flatten(bucket):
        return [r for g in bucket for r in g]

    return DatasetSplit(train=flatten(buckets[0]), valid=flatten(buckets[1]),
                        test=flatten(buckets[2]))


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

QUANT_STD_GUARD = 1e-12


@dataclass
class EncoderVocab:
    """Category vocabularies and quantitative stats, built from the training
    split only. Key lists reflect ablation exclusions."""

    qual_keys: list[str]
    categories: dict[str, list[str]]
    quant_keys: list[str]
    quant_stats: dict[str, tuple[float, float]]
    text_keys: list[str]
    _index: dict[str, dict[str, int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {k: {c: i for i, c in enumerate(cats)}
                       for k, cats in self.categories.items()}

    @classmethod
    def build(cls, train_records: list[AdRecord],
              exclude_qualitative: tuple[str, ...] = (),
              exclude_quantitative: tuple[str, ...] = (),
              exclude_text: tuple[str, ...] = ()) -> "EncoderVocab":
        for key in (*exclude_qualitative, *exclude_quantitative, *exclude_text):
            if key not in QUALITATIVE_KEYS + QUANTITATIVE_KEYS + TEXT_KEYS:
                raise ConfigError(f"unknown metadata key to exclude: {key}")
        qual_keys = [k for k in QUALITATIVE_KEYS if k not in exclude_qualitative]
        quant_keys = [k for k in QUANTITATIVE_KEYS if k not in exclude_quantitative]
        text_keys = [k for k in TEXT_KEYS if k not in exclude_text]
        categories = {}
        for key in qual_keys:
            seen = set()
            for r in train_records:
                if key not in r.qualitative:
                    raise DataFormatError(
                        f"{r.ad_id}: missing qualitative key '{key}'")
                seen.add(r.qualitative[key])
            categories[key] = sorted(seen)
        quant_stats = {}
        for key in quant_keys:
            vals = []
            for r in train_records:
                if key not in r.quantitative:
                    raise DataFormatError(
                        f"{r.ad_id}: missing quantitative key '{key}'")
                vals.append(float(r.quantitative[key]))
            arr = np.asarray(vals, dtype=np.float64)
            quant_stats[key] = (float(arr.mean()), float(arr.std()))
        return cls(qual_keys=qual_keys, categories=categories,
                   quant_keys=quant_keys, quant_stats=quant_stats,
                   text_keys=text_keys)

    @property
    def qual_onehot_dim(self) -> int:
        # One reserved UNKNOWN slot per key, placed last.
        return sum(len(self.categories[k]) + 1 for k in self.qual_keys)

    @property
    def quant_dim(self) -> int:
        return len(self.quant_keys)

    def fingerprint(self) -> str:
        return hashlib.sha256(self._canonical_json().encode()).hexdigest()

    def _canonical_json(self) -> str:
        payload = {
            "schema_version": 1,
            "qual_keys": self.qual_keys,
            "categories": self.categories,
            "quant_keys": self.quant_keys,
            "quant_stats": {k: list(v) for k, v in self.quant_stats.items()},
            "text_keys": self.text_keys,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self._canonical_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EncoderVocab":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            if payload.get("schema_version") != 1:
                raise DataFormatError(
                    f"{path}: unsupported vocab schema version")
            return cls(qual_keys=list(payload["qual_keys"]),
                       categories={k: list(v)
                                   for k, v in payload["categories"].items()},
                       quant_keys=list(payload["quant_keys"]),
                       quant_stats={k: (float(v[0]), float(v[1]))
                                    for k, v in payload["quant_stats"].items()},
                       text_keys=list(payload["text_keys"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: malformed vocab file: {exc}") from exc


def encode_qualitative(vocab: EncoderVocab, record: AdRecord) -> np.ndarray:
    """Concatenated one-hot blocks in fixed key order; unseen categories go
    to the reserved UNKNOWN slot at the end of each block."""
    out = np.zeros(vocab.qual_onehot_dim)
    offset = 0
    for key in vocab.qual_keys:
        if key not in record.qualitative:
            raise DataFormatError(f"{record.ad_id}: missing qualitative key '{key}'")
        cats = vocab.categories[key]
        idx = vocab._index[key].get(record.qualitative[key], len(cats))
        out[offset + idx] = 1.0
        offset += len(cats) + 1
    return out


def encode_quantitative(vocab: EncoderVocab, record: AdRecord,
                        prenormalize: bool = False) -> np.ndarray:
    out = np.zeros(vocab.quant_dim)
    for i, key in enumerate(vocab.quant_keys):
        if key not in record.quantitative:
            raise DataFormatError(f"{record.ad_id}: missing quantitative key '{key}'")
        v = float(record.quantitative[key])
        if prenormalize:
            mean, std = vocab.quant_stats[key]
            v = (v - mean) / max(std, QUANT_STD_GUARD)
        out[i] = v
    return out


# ---------------------------------------------------------------------------
# Manifest IO
# ---------------------------------------------------------------------------

_TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def _parse_timestamp(raw: str) -> datetime:
    try:
        dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise DataFormatError(f"bad timestamp {raw!r}: {exc}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime(_TS_FORMAT)


def record_to_json(record: AdRecord) -> str:
    payload = {
        "ad_id": record.ad_id,
        "video_id": record.video_id,
        "created_at": _format_timestamp(record.created_at),
        "qualitative": record.qualitative,
        "quantitative": record.quantitative,
        "text_fields": record.text_fields,
        "impressions": record.impressions,
        "clicks": record.clicks,
        "duration_s": record.duration_s,
        "frame_embed_ref": record.frame_embed_ref,
        "text_embed_ref": record.text_embed_ref,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def record_from_json(line: str, require_labels: bool = True) -> AdRecord:
    try:
        payload = json.loads(line)
        record = AdRecord(
            ad_id=str(payload["ad_id"]),
            video_id=str(payload["video_id"]),
            created_at=_parse_timestamp(payload["created_at"]),
            qualitative={str(k): str(v)
                         for k, v in payload["qualitative"].items()},
            quantitative={str(k): float(v)
                          for k, v in payload["quantitative"].items()},
            text_fields={str(k): str(v)
                         for k, v in payload["text_fields"].items()},
            impressions=int(payload["impressions"]) if require_labels
            else int(payload.get("impressions", 0)),
            clicks=int(payload["clicks"]) if require_labels
            else int(payload.get("clicks", 0)),
            duration_s=float(payload["duration_s"]),
            frame_embed_ref=str(payload["frame_embed_ref"]),
            text_embed_ref=str(payload["text_embed_ref"]),
        )
    except DataFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed manifest record: {exc}") from exc
    record.validate()
    return record


def write_manifest(records: list[AdRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(record_to_json(r) + "\n")


def load_manifest(path: str | Path, require_labels: bool = True) -> list[AdRecord]:
    records = []
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_json(line, require_labels=require_labels))
            except DataFormatError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# Embedding file IO
# ---------------------------------------------------------------------------


def write_embedding(path: str | Path, matrix: np.ndarray) -> None:
    """Write a dense matrix as magic | u32 version | u32 rows | u32 cols |
    row-major float32 little-endian payload."""
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ShapeError(f"embedding must be 2-D, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<III", EMBEDDING_VERSION, m.shape[0], m.shape[1]))
        fh.write(m.tobytes())


def load_embedding(path: str | Path, expected_rows: int | None = None,
                   expected_cols: int | None = None) -> np.ndarray:
    """Read an embedding file back as float64 (all arithmetic runs upcast)."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"embedding file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 16:
        raise DataFormatError(f"{path}: truncated header")
    if blob[:4] != EMBEDDING_MAGIC:
        raise DataFormatError(f"{path}: bad magic {blob[:4]!r}")
    version, rows, cols = struct.unpack("<III", blob[4:16])
    if version != EMBEDDING_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    expected_len = 16 + rows * cols * 4
    if len(blob) != expected_len:
        raise DataFormatError(
            f"{path}: payload length {len(blob) - 16} does not match "
            f"{rows}x{cols} float32 header")
    if expected_rows is not None and rows != expected_rows:
        raise ShapeError(f"{path}: expected {expected_rows} rows, file has {rows}")
    if expected_cols is not None and cols != expected_cols:
        raise ShapeError(f"{path}: expected {expected_cols} cols, file has {cols}")
    data = np.frombuffer(blob, dtype="<f4", offset=16).reshape(rows, cols)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{path}: embedding contains non-finite values")
    return data.astype(np.float64)


# ---------------------------------------------------------------------------
# Encoded dataset assembly
# ---------------------------------------------------------------------------


@dataclass
class EncodedDataset:
    """Model-ready arrays for a list of records. Frames are kept in float32
    (the file precision) and upcast per batch."""

    ad_ids: list[str]
    frames: np.ndarray | None      # (N, n_frames, frame_dim) float32
    qual: np.ndarray | None        # (N, qual_onehot_dim)
    quant: np.ndarray | None       # (N, quant_dim)
    text_sum: np.ndarray | None    # (N, text_embed_dim)
    targets: np.ndarray | None     # (N,) log-scale CTR

    def __len__(self) -> int:
        return len(self.ad_ids)


def encode_records(records: list[AdRecord], vocab: EncoderVocab, config,
                   base_dir: str | Path, with_targets: bool = True) -> EncodedDataset:
    """Load embeddings and encode metadata for every record. ``config`` is a
    ModelConfig; only the modalities it activates are materialized."""
    base = Path(base_dir)
    n = len(records)
    frames = qual = quant = text_sum = None
    if config.use_visual:
        frames = np.empty((n, config.n_frames, config.frame_embed_dim),
                          dtype=np.float32)
    if config.use_meta:
        if vocab.qual_onehot_dim != config.qual_onehot_dim:
            raise ShapeError(
                f"vocab one-hot width {vocab.qual_onehot_dim} does not match "
                f"model config {config.qual_onehot_dim}")
        if vocab.quant_dim != config.quant_dim:
            raise ShapeError(
                f"vocab quantitative width {vocab.quant_dim} does not match "
                f"model config {config.quant_dim}")
        qual = np.empty((n, config.qual_onehot_dim))
        quant = np.empty((n, config.quant_dim))
    if config.use_text:
        text_sum = np.empty((n, config.text_embed_dim))
        text_rows = [TEXT_KEYS.index(k) for k in vocab.text_keys]
    targets = np.empty(n) if with_targets else None

    for i, r in enumerate(records):
        if config.use_visual:
            frames[i] = load_embedding(base / r.frame_embed_ref,
                                       expected_rows=config.n_frames,
                                       expected_cols=config.frame_embed_dim)
        if config.use_meta:
            qual[i] = encode_qualitative(vocab, r)
            quant[i] = encode_quantitative(vocab, r,
                                           prenormalize=config.prenormalize_quant)
        if config.use_text:
            mat = load_embedding(base / r.text_embed_ref,
                                 expected_rows=len(TEXT_KEYS),
                                 expected_cols=config.text_embed_dim)
            text_sum[i] = mat[text_rows].sum(axis=0)
        if with_targets:
            targets[i] = log_transform_ctr(compute_ctr(r.clicks, r.impressions))
    return EncodedDataset(ad_ids=[r.ad_id for r in records], frames=frames,
                          qual=qual, quant=quant, text_sum=text_sum,
                          targets=targets)


# ---------------------------------------------------------------------------
# Synthetic corpus with planted signal
# ---------------------------------------------------------------------------


@dataclass
class SyntheticConfig:
    n_frames: int = 15
    frame_dim: int = 2048
    text_dim: int = 300
    n_promo_categories: int = 12
    base_level: float = 0.30
    promo_shift_sd: float = 0.22
    video_quality_coef: float = 0.15
    quant_coefs: tuple[float, float, float, float] = (0.04, 0.03, -0.03, -0.02)
    text_coef: float = 0.02
    # Every frame carries the quality direction; the first frame carries it
    # strongest (the salient-first-frame structure the analysis recovers).
    frame_signal_strength: float = 3.0
    first_frame_boost: float = 5.0
    start_date: str = "2021-01-04T00:00:00Z"
    span_days: int = 540


_QUAL_CATEGORIES = {
    "publisher_platform": ["feed", "marketplace", "stories"],
    "platform": ["facebook", "instagram"],
    "genre": ["beauty", "ec", "finance", "food", "game", "travel"],
    "sub_genre": [f"sub_{i:02d}" for i in range(8)],
    "web_app": ["app", "web"],
    "funnel": ["awareness", "consideration", "conversion"],
    "creative_type": ["carousel", "single_video", "slideshow"],
    "targeting_type": ["broad", "interest", "lookalike"],
    "targeting_gender": ["all", "female", "male"],
    "targeting_os": ["android", "any", "ios"],
    "targeting_device": ["any", "desktop", "mobile"],
}

_WORDS = ("swift", "bright", "prime", "daily", "smart", "fresh", "rapid",
          "vivid", "lucky", "metro", "nova", "pulse", "zen", "apex", "flux")


def generate_synthetic(seed: int, n_ads: int, n_videos: int,
                       out_dir: str | Path,
                       config: SyntheticConfig | None = None) -> dict:
    """Write a deterministic corpus with planted structure: a latent
    per-video quality carried by the first frame embedding, a qualitative
    key (promotion_id) with category-dependent CTR shifts, weak linear
    quantitative effects, and a weak text effect. Returns a summary dict
    with the planted parameters (also written to ground_truth.json)."""
    if n_videos > n_ads:
        raise ConfigError(f"n_videos ({n_videos}) must be <= n_ads ({n_ads})")
    if n_videos < 3:
        raise ConfigError("need at least 3 videos for a splittable corpus")
    cfg = config or SyntheticConfig()
    out = Path(out_dir)
    (out / "embeddings").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    frame_dir = rng.standard_normal(cfg.frame_dim)
    frame_dir /= np.linalg.norm(frame_dir)
    text_dir = rng.standard_normal(cfg.text_dim)
    text_dir /= np.linalg.norm(text_dir)
    promo_cats = [f"promo_{i:02d}" for i in range(cfg.n_promo_categories)]
    promo_shift = rng.normal(0.0, cfg.promo_shift_sd, size=len(promo_cats))

    start = _parse_timestamp(cfg.start_date)
    video_day = np.sort(rng.integers(0, cfg.span_days, size=n_videos))
    video_quality = rng.standard_normal(n_videos)
    video_frames = []
    for v in range(n_videos):
        content = rng.standard_normal((cfg.n_frames, cfg.frame_dim))
        content += cfg.frame_signal_strength * video_quality[v] * frame_dir
        content[0] += cfg.first_frame_boost * video_quality[v] * frame_dir
        video_frames.append(content.astype(np.float32))

    # Every video gets at least one ad; the rest land on random videos,
    # so some videos carry many near-duplicate ads.
    video_of_ad = np.concatenate(
        [np.arange(n_videos), rng.integers(0, n_videos, size=n_ads - n_videos)])

    records = []
    clean_targets = {}
    for a in range(n_ads):
        v = int(video_of_ad[a])
        ad_id = f"ad_{a:06d}"
        video_id = f"vid_{v:05d}"
        promo_idx = int(rng.integers(0, len(promo_cats)))
        qualitative = {"promotion_id": promo_cats[promo_idx]}
        for key, cats in _QUAL_CATEGORIES.items():
            qualitative[key] = cats[int(rng.integers(0, len(cats)))]

        age_min = float(rng.integers(18, 46))
        age_max = age_min + float(rng.integers(5, 26))
        target_cost = float(np.round(np.exp(rng.normal(6.2, 0.6)), 2))
        target_cpa = float(np.round(np.exp(rng.normal(4.5, 0.5)), 2))
        quantitative = {"targeting_age_min": age_min,
                        "targeting_age_max": age_max,
                        "target_cost": target_cost,
                        "target_cpa": target_cpa}
        # Standardized values under the generating distributions.
        z = np.array([(age_min - 31.5) / 8.08, (age_max - 46.5) / 10.1,
                      (math.log(target_cost) - 6.2) / 0.6,
                      (math.log(target_cpa) - 4.5) / 0.5])

        text_latent = float(rng.standard_normal())
        text_rows = rng.standard_normal((len(TEXT_KEYS), cfg.text_dim))
        text_rows[3] += text_latent * text_dir
        text_fields = {k: " ".join(
            _WORDS[int(w)] for w in rng.integers(0, len(_WORDS), size=3))
            for k in TEXT_KEYS}

        y_clean = (cfg.base_level + promo_shift[promo_idx]
                   + cfg.video_quality_coef * video_quality[v]
                   + float(np.dot(cfg.quant_coefs, z))
                   + cfg.text_coef * text_latent)
        y_clean = min(max(y_clean, 0.02), 0.95)
        raw_ctr = inverse_transform_ctr(y_clean)

        impressions = int(round(math.exp(rng.uniform(math.log(501.0),
                                                     math.log(1e5)))))
        impressions = max(impressions, 501)
        clicks = int(rng.binomial(impressions, raw_ctr))
        clicks = min(max(clicks, 1), impressions)

        created = start + timedelta(days=int(video_day[v]) + int(rng.integers(0, 14)),
                                    seconds=int(rng.integers(0, 86400)))
        frame_ref = f"embeddings/{ad_id}_frames.afeb"
        text_ref = f"embeddings/{ad_id}_text.afeb"
        write_embedding(out / frame_ref, video_frames[v])
        write_embedding(out / text_ref, text_rows.astype(np.float32))

        records.append(AdRecord(
            ad_id=ad_id, video_id=video_id, created_at=created,
            qualitative=qualitative, quantitative=quantitative,
            text_fields=text_fields, impressions=impressions, clicks=clicks,
            duration_s=float(np.round(rng.uniform(5.0, 30.0), 2)),
            frame_embed_ref=frame_ref, text_embed_ref=text_ref))
        clean_targets[ad_id] = y_clean

    write_manifest(records, out / "manifest.jsonl")
    ground_truth = {
        "seed": seed,
        "n_ads": n_ads,
        "n_videos": n_videos,
        "n_frames": cfg.n_frames,
        "frame_dim": cfg.frame_dim,
        "text_dim": cfg.text_dim,
        "base_level": cfg.base_level,
        "planted_qualitative_key": "promotion_id",
        "promo_shifts": {c: float(s) for c, s in zip(promo_cats, promo_shift)},
        "video_quality": {f"vid_{v:05d}": float(q)
                          for v, q in enumerate(video_quality)},
        "video_quality_coef": cfg.video_quality_coef,
        "quant_coefs": {k: c for k, c in zip(QUANTITATIVE_KEYS, cfg.quant_coefs)},
        "text_coef": cfg.text_coef,
        "frame_signal_strength": cfg.frame_signal_strength,
        "first_frame_boost": cfg.first_frame_boost,
        "frame_direction": [float(x) for x in frame_dir],
        "text_direction": [float(x) for x in text_dir],
        "clean_targets": clean_targets,
    }
    (out / "ground_truth.json").write_text(
        json.dumps(ground_truth, sort_keys=True) + "\n", encoding="utf-8")
    return ground_truth
