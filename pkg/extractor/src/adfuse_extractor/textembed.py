"""Text-field embeddings from a pinned word-vector table.

Each of the five ad text fields becomes one 300-d row: the mean of the
vectors of its known tokens (zero row for empty text or no known tokens).
Tokenization lowercases, splits latin/digit words, and breaks CJK runs
into character bigrams so Japanese text without spaces still produces
word-like units.
"""

import logging
import re
from pathlib import Path

import numpy as np

from .errors import ModelLoadError
from .features import file_sha256

logger = logging.getLogger(__name__)

TEXT_KEYS = (
    "advertiser_name",
    "account_name",
    "promotion_name",
    "creative_title",
    "creative_description",
)

_LATIN = re.compile(r"[a-z0-9]+")
_TOKEN_RUNS = re.compile(
    r"[a-z0-9]+|[぀-ヿ㐀-鿿豈-﫿]+")


def tokenize(text: str) -> list[str]:
    text = text.lower()
    tokens = []
    for match in _TOKEN_RUNS.finditer(text):
        run = match.group(0)
        if _LATIN.fullmatch(run):
            tokens.append(run)
        else:
            if len(run) == 1:
                tokens.append(run)
            else:
                tokens.extend(run[i:i + 2] for i in range(len(run) - 1))
    return tokens


class TextEmbedder:
    """Word-vector table in the textual .vec format: a "count dim" header
    line, then one "token v1 ... vdim" line per token."""

    def __init__(self, vectors_path: str | Path,
                 expected_sha256: str | None = None):
        vectors_path = Path(vectors_path)
        if not vectors_path.exists():
            raise ModelLoadError(f"word-vector file not found: {vectors_path}")
        self.vectors_sha256 = file_sha256(vectors_path)
        if expected_sha256 is not None and self.vectors_sha256 != expected_sha256:
            raise ModelLoadError(
                f"{vectors_path}: sha256 {self.vectors_sha256} does not match "
                f"pinned {expected_sha256}")
        self.table: dict[str, np.ndarray] = {}
        with open(vectors_path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ModelLoadError(f"{vectors_path}: bad header line")
            count, dim = int(header[0]), int(header[1])
            for lineno, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    raise ModelLoadError(
                        f"{vectors_path}:{lineno}: expected {dim} values")
                self.table[parts[0]] = np.asarray(parts[1:], dtype=np.float32)
        if len(self.table) != count:
            raise ModelLoadError(
                f"{vectors_path}: header claims {count} tokens, "
                f"found {len(self.table)}")
        self.dim = dim

    def embed_text(self, text: str) -> np.ndarray:
        vecs = [self.table[t] for t in tokenize(text) if t in self.table]
        if not vecs:
            if text.strip():
                logger.warning("no known tokens in %r; using zero vector", text)
            return np.zeros(self.dim, dtype=np.float32)
        return np.mean(vecs, axis=0, dtype=np.float64).astype(np.float32)

    def embed_fields(self, text_fields: dict[str, str]) -> np.ndarray:
        """One row per schema text key, in schema order: (5, dim) float32."""
        return np.stack([self.embed_text(text_fields.get(k, ""))
                         for k in TEXT_KEYS])
