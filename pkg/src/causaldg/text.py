"""Preprocessing, token embeddings, n-grams, and cosine similarity.

The sentence encoder the experiments need is abstracted behind a small
provider contract: anything with a ``dim`` attribute and an
``embed_tokens(tokens) -> np.ndarray`` method works.  Two desk-scale
providers ship here:

* ``HashedBagEmbedder`` — every token hashes to a bucket whose vector is a
  fixed pseudo-random unit vector seeded by the bucket index, so embeddings
  are deterministic across processes with no external data;
* ``FileBackedEmbedder`` — word2vec-text-format vectors from disk, letting
  users plug real multilingual vectors in.

Pooling is the mean of per-token vectors.  Tokens are summed in sorted
order so pooling is exactly permutation-invariant, bit for bit.
"""

from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass

import numpy as np

from .errors import DataError, MalformedLineError

DEFAULT_DIM = 64
DEFAULT_HASH_BUCKETS = 65536


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple[str, ...]
    original_text: str
    token_char_spans: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.tokens)


def normalize_token(s: str) -> str:
    return unicodedata.normalize("NFC", s).lower()


def _is_boundary(ch: str) -> bool:
    # Whitespace and punctuation split tokens; punctuation is dropped.
    # Combining marks (Mn etc.) stay attached to their base character.
    return ch.isspace() or unicodedata.category(ch).startswith("P")


def preprocess(raw: str, stopwords=frozenset()) -> TokenSeq:
    """Tokenize: NFC-normalize + lowercase, split on whitespace/punctuation,
    drop punctuation, remove stopwords.  Spans index into the original text
    so surviving tokens can always be traced back to their source slice.
    """
    stop = {normalize_token(s) for s in stopwords}
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    start = None
    for i, ch in enumerate(raw):
        if _is_boundary(ch):
            if start is not None:
                tok = normalize_token(raw[start:i])
                if tok and tok not in stop:
                    tokens.append(tok)
                    spans.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        tok = normalize_token(raw[start:])
        if tok and tok not in stop:
            tokens.append(tok)
            spans.append((start, len(raw)))
    return TokenSeq(tokens=tuple(tokens), original_text=raw,
                    token_char_spans=tuple(spans))


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str  # hashed_bag | file_backed
    d: int = DEFAULT_DIM
    hash_buckets: int = DEFAULT_HASH_BUCKETS
    vectors_path: str | None = None
    pooling: str = "mean"

    def __post_init__(self):
        if self.kind not in ("hashed_bag", "file_backed"):
            raise DataError(f"unknown embedder kind {self.kind!r}")
        if self.d <= 0:
            raise DataError("embedding dimension must be positive")
        if self.kind == "hashed_bag" and self.hash_buckets & (self.hash_buckets - 1):
            raise DataError("hash_buckets must be a power of two")
        if self.kind == "file_backed" and not self.vectors_path:
            raise DataError("file_backed embedder needs vectors_path")
        if self.pooling != "mean":
            raise DataError(f"unsupported pooling {self.pooling!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d, "hash_buckets": self.hash_buckets,
                "vectors_path": self.vectors_path, "pooling": self.pooling}

    @classmethod
    def from_dict(cls, obj: dict) -> "EmbedderSpec":
        return cls(kind=obj["kind"], d=obj["d"],
                   hash_buckets=obj.get("hash_buckets", DEFAULT_HASH_BUCKETS),
                   vectors_path=obj.get("vectors_path"),
                   pooling=obj.get("pooling", "mean"))


def _pool(rows: list[np.ndarray], d: int) -> np.ndarray:
    if not rows:
        return np.zeros(d)
    return np.add.reduce(rows) / len(rows)


class HashedBagEmbedder:
    def __init__(self, spec: EmbedderSpec):
        assert spec.kind == "hashed_bag"
        self.spec = spec
        self.dim = spec.d
        self._cache: dict[str, np.ndarray] = {}

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.spec.hash_buckets

    def token_vector(self, token: str) -> np.ndarray:
        v = self._cache.get(token)
        if v is None:
            rng = np.random.default_rng(self._bucket(token))
            v = rng.standard_normal(self.dim)
            v /= np.linalg.norm(v)
            v.setflags(write=False)
            self._cache[token] = v
        return v

    def embed_tokens(self, tokens) -> np.ndarray:
        rows = [self.token_vector(t) for t in sorted(tokens)]
        return _pool(rows, self.dim)


class FileBackedEmbedder:
    """word2vec text convention: ``token f1 ... fd`` per line, no header.
    Out-of-vocabulary tokens contribute the zero vector to the mean."""

    def __init__(self, spec: EmbedderSpec):
        assert spec.kind == "file_backed"
        self.spec = spec
        self.vectors: dict[str, np.ndarray] = {}
        try:
            fh = open(spec.vectors_path, encoding="utf-8")
        except OSError as e:
            raise DataError(f"cannot read vectors file: {e}",
                            path=spec.vectors_path) from None
        dim = None
        with fh:
            for lineno, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                parts = raw.split()
                if dim is None:
                    dim = len(parts) - 1
                    if dim < 1:
                        raise MalformedLineError("no vector components",
                                                 path=spec.vectors_path, line=lineno)
                if len(parts) - 1 != dim:
                    raise MalformedLineError(
                        f"expected {dim} components, got {len(parts) - 1}",
                        path=spec.vectors_path, line=lineno)
                try:
                    vec = np.array([float(x) for x in parts[1:]])
                except ValueError:
                    raise MalformedLineError("non-numeric vector component",
                                             path=spec.vectors_path, line=lineno) from None
                vec.setflags(write=False)
                self.vectors[parts[0]] = vec
        if dim is None:
            raise DataError("empty vectors file", path=spec.vectors_path)
        if spec.d != dim:
            raise DataError(f"spec dimension {spec.d} != file dimension {dim}",
                            path=spec.vectors_path)
        self.dim = dim
        self._zero = np.zeros(dim)

    def embed_tokens(self, tokens) -> np.ndarray:
        rows = [self.vectors.get(t, self._zero) for t in sorted(tokens)]
        return _pool(rows, self.dim)


def build_embedder(spec: EmbedderSpec):
    if spec.kind == "hashed_bag":
        return HashedBagEmbedder(spec)
    return FileBackedEmbedder(spec)


def embed(embedder, t: TokenSeq) -> np.ndarray:
    return embedder.embed_tokens(t.tokens)


def ngrams(t: TokenSeq, n_max: int):
    """All contiguous token subsequences of length 1..min(n_max, len),
    each with its merged character span, ordered by start then length."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    out = []
    L = len(t.tokens)
    for i in range(L):
        for n in range(1, min(n_max, L - i) + 1):
            span = (t.token_char_spans[i][0], t.token_char_spans[i + n - 1][1])
            out.append((t.tokens[i:i + n], span))
    return out


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))
