"""Per-token vector providers for the parser and taggers.

Three kinds stand in for the large pretrained encoders: a trainable lookup
table, a character-n-gram hashed fallback (FastText-style) that never fails
on unknown words, and externally computed contextual vectors read
positionally from a sidecar file.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus_io import Token

__all__ = [
    "EmbeddingProvider",
    "LookupProvider",
    "CharNgramProvider",
    "ExternalProvider",
    "ChunkPlan",
    "embed_tokens",
    "plan_chunks",
    "pool_subwords",
    "read_vector_file",
    "write_vector_file",
    "utterance_vectors",
]

DEFAULT_DIM = 64
DEFAULT_BUCKETS = 100_003


def _surface(token) -> str:
    return token.surface if isinstance(token, Token) else token


class EmbeddingProvider:
    """Base class; concrete providers are deterministic and total."""

    kind: str
    dim: int

    def embed(self, tokens: Sequence, recording_id: Optional[str] = None) -> np.ndarray:
        raise NotImplementedError


class LookupProvider(EmbeddingProvider):
    """Finite word-vector table with a shared unknown-word row (row 0).

    When `trainable` is true the parser's training owner updates `table`
    in place; everything else treats the table as read-only.
    """

    kind = "lookup"

    def __init__(self, vocab: dict[str, int], table: np.ndarray, trainable: bool = False):
        if table.ndim != 2 or table.shape[0] != len(vocab) + 1:
            raise ValueError("table must have one row per vocab entry plus the unknown row")
        self.vocab = vocab
        self.table = table
        self.trainable = trainable
        self.dim = table.shape[1]

    @classmethod
    def build(cls, words, dim: int = DEFAULT_DIM, seed: int = 0,
              trainable: bool = False) -> "LookupProvider":
        uniq = sorted(set(words))
        vocab = {w: i + 1 for i, w in enumerate(uniq)}
        rng = np.random.default_rng(seed)
        table = rng.standard_normal((len(uniq) + 1, dim)) / np.sqrt(dim)
        return cls(vocab, table, trainable)

    def row_index(self, surface: str) -> int:
        return self.vocab.get(surface, 0)

    def embed(self, tokens, recording_id=None) -> np.ndarray:
        rows = [self.row_index(_surface(t)) for t in tokens]
        return self.table[rows].copy()


def _fnv1a_64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


class CharNgramProvider(EmbeddingProvider):
    """Hashed character-n-gram vectors with word boundary markers.

    A word's vector is the mean of its n-gram bucket vectors (n in
    [n_min, n_max] over '<word>').  Bucket vectors are drawn lazily from a
    seed-stable generator, so collisions only alias buckets and the provider
    never fails on unseen words.
    """

    kind = "char_ngram"

    def __init__(self, dim: int = DEFAULT_DIM, n_min: int = 3, n_max: int = 6,
                 buckets: int = DEFAULT_BUCKETS, seed: int = 0):
        if n_min < 1 or n_max < n_min:
            raise ValueError(f"bad n-gram range [{n_min}, {n_max}]")
        self.dim = dim
        self.n_min = n_min
        self.n_max = n_max
        self.buckets = buckets
        self.seed = seed
        self._bucket_cache: dict[int, np.ndarray] = {}
        self._word_cache: dict[str, np.ndarray] = {}

    def ngrams(self, surface: str) -> list[str]:
        wrapped = f"<{surface}>"
        grams = [
            wrapped[i:i + n]
            for n in range(self.n_min, self.n_max + 1)
            for i in range(len(wrapped) - n + 1)
        ]
        return grams if grams else [wrapped]

    def _bucket_vector(self, bucket: int) -> np.ndarray:
        vec = self._bucket_cache.get(bucket)
        if vec is None:
            rng = np.random.default_rng([self.seed, bucket])
            vec = rng.standard_normal(self.dim) / np.sqrt(self.dim)
            self._bucket_cache[bucket] = vec
        return vec

    def vector(self, surface: str) -> np.ndarray:
        vec = self._word_cache.get(surface)
        if vec is None:
            grams = self.ngrams(surface)
            acc = np.zeros(self.dim)
            for gram in grams:
                acc += self._bucket_vector(_fnv1a_64(gram.encode("utf-8")) % self.buckets)
            vec = acc / len(grams)
            self._word_cache[surface] = vec
        return vec

    def embed(self, tokens, recording_id=None) -> np.ndarray:
        return np.stack([self.vector(_surface(t)) for t in tokens])


class ExternalProvider(EmbeddingProvider):
    """Contextual vectors computed elsewhere, mapped positionally.

    One vector per corpus token in order; surfaces in the sidecar file must
    match the corpus tokens (or be the wildcard '_').
    """

    kind = "external"

    def __init__(self, surfaces: Sequence[str], matrix: np.ndarray):
        if matrix.ndim != 2 or matrix.shape[0] != len(surfaces):
            raise ValueError("one vector per surface required")
        self.surfaces = list(surfaces)
        self.matrix = matrix
        self.dim = matrix.shape[1]

    @classmethod
    def from_file(cls, path) -> "ExternalProvider":
        surfaces, matrix = read_vector_file(path)
        return cls(surfaces, matrix)

    def embed(self, tokens, recording_id=None) -> np.ndarray:
        rid = recording_id if recording_id is not None else "?"
        if len(tokens) != len(self.surfaces):
            raise ValueError(
                f"recording {rid}: external file carries {len(self.surfaces)} vectors "
                f"for {len(tokens)} tokens"
            )
        for i, tok in enumerate(tokens):
            want = _surface(tok)
            got = self.surfaces[i]
            if got != "_" and got != want:
                raise ValueError(
                    f"recording {rid}: token {i + 1} is {want!r} but vector file says {got!r}"
                )
        return self.matrix.copy()


def embed_tokens(provider: EmbeddingProvider, recording: Sequence,
                 recording_id: Optional[str] = None) -> np.ndarray:
    """One vector of length provider.dim per token of a whole recording."""
    if not len(recording):
        raise ValueError("recording must contain at least one token")
    vectors = provider.embed(recording, recording_id)
    assert vectors.shape == (len(recording), provider.dim)
    return vectors


def utterance_vectors(provider: EmbeddingProvider, utterance) -> np.ndarray:
    """Vectors for the parser: all tokens get embedded (synthetic ones inform
    context for positional providers) but only real-token rows are returned."""
    all_vecs = embed_tokens(provider, utterance.tokens, utterance.recording_id)
    keep = [i for i, t in enumerate(utterance.tokens) if not t.synthetic]
    return all_vecs[keep]


# ---------------------------------------------------------------------------
# Chunking and subword pooling


@dataclass(frozen=True)
class ChunkPlan:
    n_tokens: int
    boundaries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        cursor = 0
        for start, end in self.boundaries:
            if start != cursor or end <= start:
                raise ValueError("chunks must be consecutive, non-empty and non-overlapping")
            cursor = end
        if cursor != self.n_tokens:
            raise ValueError("chunks must cover all tokens")


def plan_chunks(n_tokens: int, chunk_size: int = 512) -> ChunkPlan:
    """Consecutive non-overlapping chunks; all full except possibly the last."""
    if n_tokens < 0:
        raise ValueError("n_tokens must be >= 0")
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    bounds = tuple(
        (start, min(start + chunk_size, n_tokens))
        for start in range(0, n_tokens, chunk_size)
    )
    return ChunkPlan(n_tokens, bounds)


def pool_subwords(unit_vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Componentwise mean over the subword vectors of one word."""
    if not len(unit_vectors):
        raise ValueError("cannot pool an empty unit sequence")
    stacked = np.stack(unit_vectors)
    return stacked.mean(axis=0)


# ---------------------------------------------------------------------------
# External vector file: "<n_tokens> <dim>" header, then "<surface> <v1> ...".


def read_vector_file(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: header must be '<n_tokens> <dim>'")
        n_tokens, dim = int(header[0]), int(header[1])
        surfaces = []
        rows = []
        for lineno, line in enumerate(f, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected surface plus {dim} values")
            surfaces.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(surfaces) != n_tokens:
        raise ValueError(f"{path}: header says {n_tokens} tokens, file has {len(surfaces)}")
    matrix = np.array(rows) if rows else np.zeros((0, dim))
    return surfaces, matrix


def write_vector_file(surfaces: Sequence[str], matrix: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(surfaces)} {matrix.shape[1]}\n")
        for surface, row in zip(surfaces, matrix):
            f.write(surface + " " + " ".join(repr(float(x)) for x in row) + "\n")
