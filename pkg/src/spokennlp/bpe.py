"""Byte-pair-encoding subword tokenizers: training, application, model files
and vocabulary comparison.

Classic character-level BPE with an explicit end-of-word marker fused onto
the last character of each word ("chat" -> c h a t</w>).  Merges are greedy
by pair frequency; ties break on the lexicographically smallest pair so
training is deterministic.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus_io import Utterance

__all__ = [
    "END_MARKER",
    "BpeModel",
    "bpe_train",
    "bpe_encode",
    "bpe_decode",
    "vocab_overlap",
    "overlap_report",
    "save_bpe",
    "load_bpe",
]

END_MARKER = "</w>"


@dataclass
class BpeModel:
    merges: tuple[tuple[str, str], ...]
    vocab: frozenset[str]
    end_marker: str = END_MARKER
    _ranks: dict[tuple[str, str], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("merge list contains duplicates")
        self._ranks = {pair: rank for rank, pair in enumerate(self.merges)}


def _word_symbols(word: str, end_marker: str) -> list[str]:
    return list(word[:-1]) + [word[-1] + end_marker]


def _texts(corpus: Iterable) -> Iterable[str]:
    for item in corpus:
        yield item.text if isinstance(item, Utterance) else item


def bpe_train(corpus: Iterable, target_vocab: int, end_marker: str = END_MARKER) -> BpeModel:
    """Train a BPE model on normalized utterances (or plain text lines).

    Iteratively merges the most frequent adjacent symbol pair over the
    word-frequency table until the vocabulary reaches `target_vocab` or no
    pair occurs at least twice.
    """
    word_freq = Counter()
    for text in _texts(corpus):
        word_freq.update(text.split())
    if not word_freq:
        raise ValueError("cannot train BPE on an empty corpus")

    words = list(word_freq)
    freqs = [word_freq[w] for w in words]
    seqs = [_word_symbols(w, end_marker) for w in words]

    vocab = {sym for seq in seqs for sym in seq}
    if target_vocab < len(vocab):
        raise ValueError(
            f"target_vocab {target_vocab} below the {len(vocab)} distinct base symbols"
        )

    # Incremental pair bookkeeping: counts plus which words contain each pair.
    pair_counts: Counter = Counter()
    pair_words: dict[tuple[str, str], set[int]] = {}
    for wi, seq in enumerate(seqs):
        for pair in zip(seq, seq[1:]):
            pair_counts[pair] += freqs[wi]
            pair_words.setdefault(pair, set()).add(wi)

    merges: list[tuple[str, str]] = []
    while len(vocab) < target_vocab and pair_counts:
        best_count = max(pair_counts.values())
        if best_count < 2:
            break
        best = min(p for p, c in pair_counts.items() if c == best_count)
        merges.append(best)
        new_sym = best[0] + best[1]
        vocab.add(new_sym)

        for wi in sorted(pair_words.get(best, ())):
            seq = seqs[wi]
            freq = freqs[wi]
            for pair in zip(seq, seq[1:]):
                pair_counts[pair] -= freq
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                word_set = pair_words.get(pair)
                if word_set is not None:
                    word_set.discard(wi)
                    if not word_set:
                        del pair_words[pair]
            seqs[wi] = _merge_pair(seq, best, new_sym)
            for pair in zip(seqs[wi], seqs[wi][1:]):
                pair_counts[pair] += freq
                pair_words.setdefault(pair, set()).add(wi)

    return BpeModel(tuple(merges), frozenset(vocab), end_marker)


def _merge_pair(seq: Sequence[str], pair: tuple[str, str], new_sym: str) -> list[str]:
    out = []
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and seq[i] == pair[0] and seq[i + 1] == pair[1]:
            out.append(new_sym)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


def bpe_encode(model: BpeModel, word: str) -> list[str]:
    """Segment one normalized word into subword units.

    Merges apply in training order (lowest rank first), all occurrences
    left to right.  Characters never seen in training pass through as
    singleton units, so encoding is total and decoding always reconstructs
    the word exactly.
    """
    if not word:
        raise ValueError("cannot encode an empty word")
    seq = _word_symbols(word, model.end_marker)
    ranks = model._ranks
    while len(seq) > 1:
        best_rank = None
        for pair in zip(seq, seq[1:]):
            rank = ranks.get(pair)
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank = rank
        if best_rank is None:
            break
        left, right = model.merges[best_rank]
        seq = _merge_pair(seq, (left, right), left + right)
    return seq


def bpe_decode(units: Sequence[str], end_marker: str = END_MARKER) -> str:
    """Concatenate subword units and strip the trailing end-of-word marker."""
    joined = "".join(units)
    if joined.endswith(end_marker):
        joined = joined[: -len(end_marker)]
    return joined


def vocab_overlap(a: BpeModel, b: BpeModel) -> float:
    """Percentage of a's vocabulary also present in b's: 100 * |A∩B| / |A|.

    Asymmetric by definition; symmetric when both vocabularies have the same
    size.  See `overlap_report` for both directions plus the union figure.
    """
    if not a.vocab or not b.vocab:
        raise ValueError("both vocabularies must be non-empty")
    return 100.0 * len(a.vocab & b.vocab) / len(a.vocab)


def overlap_report(a: BpeModel, b: BpeModel) -> dict:
    inter = len(a.vocab & b.vocab)
    return {
        "a_size": len(a.vocab),
        "b_size": len(b.vocab),
        "intersection": inter,
        "overlap_a_pct": 100.0 * inter / len(a.vocab),
        "overlap_b_pct": 100.0 * inter / len(b.vocab),
        "jaccard_pct": 100.0 * inter / len(a.vocab | b.vocab),
    }


# ---------------------------------------------------------------------------
# Model file: header "bpe v1 <n_merges> <end_marker>", one merge per line.


def save_bpe(model: BpeModel, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"bpe v1 {len(model.merges)} {model.end_marker}\n")
        for left, right in model.merges:
            f.write(f"{left} {right}\n")
        f.write("#vocab\n")
        for unit in sorted(model.vocab):
            f.write(unit + "\n")


def load_bpe(path) -> BpeModel:
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split(" ")
        if len(header) != 4 or header[0] != "bpe" or header[1] != "v1":
            raise ValueError(f"{path}: not a bpe v1 model file")
        n_merges = int(header[2])
        end_marker = header[3]
        merges = []
        for _ in range(n_merges):
            left, right = f.readline().rstrip("\n").split(" ")
            merges.append((left, right))
        vocab = set()
        line = f.readline()
        if line.rstrip("\n") == "#vocab":
            for line in f:
                unit = line.rstrip("\n")
                if unit:
                    vocab.add(unit)
    return BpeModel(tuple(merges), frozenset(vocab), end_marker)
