"""Data model and file I/O for transcripts, dependency trees, SLU samples and
labeled documents.

Readers are single-pass and streaming-friendly; every type is immutable after
construction so corpora can be shared freely across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

__all__ = [
    "Token",
    "Utterance",
    "DepTree",
    "SluSample",
    "LabeledDocument",
    "SplitSpec",
    "ParseError",
    "read_conllu",
    "write_conllu",
    "read_slu_tsv",
    "write_slu_tsv",
    "read_documents_jsonl",
    "write_documents_jsonl",
    "read_utterances_jsonl",
    "write_utterances_jsonl",
    "read_tagset",
    "stratified_split",
]


class ParseError(ValueError):
    """Malformed input file; message carries the file path and line number."""


@dataclass(frozen=True)
class Token:
    """One transcript token.

    `index` is the 1-based position within its utterance.  `oov` is only
    meaningful once `metrics.mark_oov` ran against a lexicon.  `synthetic`
    marks tokens injected by repunctuation; they inform embeddings but are
    never passed to the parser.
    """

    surface: str
    index: int
    oov: Optional[bool] = None
    synthetic: bool = False

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")
        if self.index < 1:
            raise ValueError(f"token index must be >= 1, got {self.index}")


@dataclass(frozen=True)
class Utterance:
    """A pseudo-sentence (one diarization turn) with its provenance."""

    tokens: tuple[Token, ...]
    recording_id: str
    speaker_id: Optional[str] = None
    time_span: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("utterance must contain at least one token")
        for pos, tok in enumerate(self.tokens, start=1):
            if tok.index != pos:
                raise ValueError(
                    f"token indices must be contiguous from 1, got {tok.index} at position {pos}"
                )
        if self.time_span is not None and self.time_span[0] > self.time_span[1]:
            raise ValueError(f"time span start > end: {self.time_span}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.words)

    @staticmethod
    def from_words(
        words: Sequence[str],
        recording_id: str = "rec",
        speaker_id: Optional[str] = None,
        time_span: Optional[tuple[float, float]] = None,
    ) -> "Utterance":
        toks = tuple(Token(w, i) for i, w in enumerate(words, start=1))
        return Utterance(toks, recording_id, speaker_id, time_span)


def _check_acyclic(heads: Mapping[int, int]) -> None:
    # Follow head chains; every token must reach the artificial root 0.
    for start in heads:
        seen = set()
        node = start
        while node != 0:
            if node in seen:
                raise ValueError(f"cyclic heads: token {start} never reaches root")
            seen.add(node)
            node = heads[node]


@dataclass(frozen=True)
class DepTree:
    """A dependency tree over one utterance.

    `heads`, `labels` and `pos` are keyed by 1-based token index; head 0 is
    the artificial root.  `extras` keeps the unused CoNLL-U columns
    (LEMMA, XPOS, FEATS, DEPS, MISC) opaquely for round-tripping.
    """

    utterance: Utterance
    heads: Mapping[int, int]
    labels: Mapping[int, str]
    pos: Mapping[int, str]
    extras: Mapping[int, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.utterance)
        indices = set(range(1, n + 1))
        if set(self.heads) != indices:
            raise ValueError("every token must have exactly one head")
        if set(self.labels) != indices or set(self.pos) != indices:
            raise ValueError("labels and pos must cover every token")
        for dep, head in self.heads.items():
            if not 0 <= head <= n:
                raise ValueError(f"head index {head} of token {dep} outside [0, {n}]")
            if head == dep:
                raise ValueError(f"token {dep} is its own head")
        _check_acyclic(self.heads)

    def __len__(self) -> int:
        return len(self.utterance)

    def check_inventories(self, pos_tags: set[str], dep_labels: set[str]) -> None:
        """Reject tags/labels outside a declared annotation inventory."""
        for i in range(1, len(self) + 1):
            if self.pos[i] not in pos_tags:
                raise ValueError(f"POS tag {self.pos[i]!r} of token {i} not in inventory")
            if self.labels[i] not in dep_labels:
                raise ValueError(f"label {self.labels[i]!r} of token {i} not in inventory")


_BIO_OK = ("O",)


def _validate_bio(tags: Sequence[str]) -> None:
    prev = "O"
    for i, tag in enumerate(tags):
        if tag == "O":
            prev = tag
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            raise ValueError(f"malformed BIO tag {tag!r} at position {i}")
        if tag[0] == "I":
            if prev == "O" or prev[2:] != tag[2:]:
                raise ValueError(
                    f"I-{tag[2:]} at position {i} does not continue a {tag[2:]} span"
                )
        prev = tag


@dataclass(frozen=True)
class SluSample:
    """An utterance with gold concept annotation in BIO form."""

    utterance: Utterance
    bio_tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.bio_tags) != len(self.utterance):
            raise ValueError(
                f"{len(self.bio_tags)} BIO tags for {len(self.utterance)} tokens"
            )
        _validate_bio(self.bio_tags)


@dataclass(frozen=True)
class LabeledDocument:
    """A transcript with a closed-set category label (TV-show classification)."""

    text: str
    category: str
    channel: Optional[str] = None
    date: Optional[str] = None
    doc_id: Optional[str] = None

    def __post_init__(self):
        if not self.category:
            raise ValueError("document category must be non-empty")


@dataclass(frozen=True)
class SplitSpec:
    """Train/dev/test membership keyed by item id."""

    assignment: Mapping[str, str]
    seed: int

    PARTS = ("train", "dev", "test")

    def __post_init__(self):
        bad = {p for p in self.assignment.values() if p not in self.PARTS}
        if bad:
            raise ValueError(f"unknown split parts: {sorted(bad)}")

    def part(self, name: str) -> list[str]:
        return [k for k, v in self.assignment.items() if v == name]

    def sizes(self) -> dict[str, int]:
        out = {p: 0 for p in self.PARTS}
        for v in self.assignment.values():
            out[v] += 1
        return out

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"seed": self.seed, "assignment": dict(self.assignment)}, f,
                      indent=2, sort_keys=True)
            f.write("\n")

    @staticmethod
    def from_json(path) -> "SplitSpec":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        return SplitSpec(raw["assignment"], raw["seed"])


# ---------------------------------------------------------------------------
# CoNLL-U

_N_COLS = 10


def _parse_conllu_block(lines, path, utt_counter) -> DepTree:
    forms, upos, heads, deprels, extras = [], {}, {}, {}, {}
    for lineno, line in lines:
        cols = line.split("\t")
        if len(cols) != _N_COLS:
            raise ParseError(
                f"{path}:{lineno}: expected {_N_COLS} tab-separated columns, got {len(cols)}"
            )
        tid, form, lemma, up, xpos, feats, head, deprel, deps, misc = cols
        try:
            idx = int(tid)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer token ID {tid!r}") from None
        if idx != len(forms) + 1:
            raise ParseError(f"{path}:{lineno}: token IDs must be contiguous from 1")
        try:
            head_idx = int(head)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer HEAD {head!r}") from None
        forms.append(form)
        upos[idx] = up
        heads[idx] = head_idx
        deprels[idx] = deprel
        extras[idx] = (lemma, xpos, feats, deps, misc)
    utt = Utterance.from_words(forms, recording_id=f"conllu-{utt_counter:05d}")
    return DepTree(utt, heads, deprels, upos, extras)


def read_conllu(path, inventories: Optional[tuple[set[str], set[str]]] = None) -> list[DepTree]:
    """Read a 10-column CoNLL-U file into one DepTree per sentence block.

    Uses the ID, FORM, UPOS, HEAD and DEPREL columns; the rest are kept
    opaquely so `write_conllu` round-trips.  `inventories` is an optional
    (pos_tags, dep_labels) pair enforced on every tree.
    """
    trees: list[DepTree] = []
    block: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                continue
            if not line.strip():
                if block:
                    trees.append(_parse_conllu_block(block, path, len(trees)))
                    block = []
                continue
            block.append((lineno, line))
    if block:
        trees.append(_parse_conllu_block(block, path, len(trees)))
    if inventories is not None:
        pos_tags, dep_labels = inventories
        for t in trees:
            t.check_inventories(pos_tags, dep_labels)
    return trees


def write_conllu(trees: Iterable[DepTree], path) -> None:
    """Write trees as CoNLL-U; re-readable with equality on FORM/UPOS/HEAD/DEPREL."""
    with open(path, "w", encoding="utf-8") as f:
        for tree in trees:
            for i, tok in enumerate(tree.utterance.tokens, start=1):
                lemma, xpos, feats, deps, misc = tree.extras.get(i, ("_",) * 5)
                cols = (
                    str(i), tok.surface, lemma, tree.pos[i], xpos, feats,
                    str(tree.heads[i]), tree.labels[i], deps, misc,
                )
                f.write("\t".join(cols) + "\n")
            f.write("\n")


def read_tagset(path) -> tuple[set[str], set[str]]:
    """Read a tag-set file: JSON with "pos" and "labels" arrays."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    return set(raw["pos"]), set(raw["labels"])


# ---------------------------------------------------------------------------
# SLU TSV (token TAB bio-tag, blank line between utterances)


def read_slu_tsv(path) -> list[SluSample]:
    samples: list[SluSample] = []
    words: list[str] = []
    tags: list[str] = []

    def flush():
        if words:
            utt = Utterance.from_words(words, recording_id=f"slu-{len(samples):05d}")
            samples.append(SluSample(utt, tuple(tags)))
            words.clear()
            tags.clear()

    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'token<TAB>tag', got {line!r}")
            words.append(cols[0])
            tags.append(cols[1])
    flush()
    return samples


def write_slu_tsv(samples: Iterable[SluSample], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            for tok, tag in zip(sample.utterance.tokens, sample.bio_tags):
                f.write(f"{tok.surface}\t{tag}\n")
            f.write("\n")


# ---------------------------------------------------------------------------
# JSON-lines documents and utterances


def read_documents_jsonl(path, categories: Optional[set[str]] = None) -> list[LabeledDocument]:
    docs: list[LabeledDocument] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({e})") from None
            doc = LabeledDocument(
                text=raw["text"],
                category=raw["category"],
                channel=raw.get("channel"),
                date=raw.get("date"),
                doc_id=raw.get("doc_id", f"doc-{lineno:06d}"),
            )
            if categories is not None and doc.category not in categories:
                raise ParseError(
                    f"{path}:{lineno}: category {doc.category!r} not in declared inventory"
                )
            docs.append(doc)
    return docs


def write_documents_jsonl(docs: Iterable[LabeledDocument], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            rec = {"text": doc.text, "category": doc.category}
            if doc.channel is not None:
                rec["channel"] = doc.channel
            if doc.date is not None:
                rec["date"] = doc.date
            if doc.doc_id is not None:
                rec["doc_id"] = doc.doc_id
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_utterances_jsonl(path) -> list[Utterance]:
    utts: list[Utterance] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({e})") from None
            toks = tuple(
                Token(t["surface"], i, synthetic=t.get("synthetic", False))
                for i, t in enumerate(raw["tokens"], start=1)
            )
            span = tuple(raw["time_span"]) if raw.get("time_span") else None
            utts.append(Utterance(toks, raw["recording_id"], raw.get("speaker_id"), span))
    return utts


def write_utterances_jsonl(utts: Iterable[Utterance], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for utt in utts:
            rec = {
                "recording_id": utt.recording_id,
                "tokens": [
                    {"surface": t.surface, **({"synthetic": True} if t.synthetic else {})}
                    for t in utt.tokens
                ],
            }
            if utt.speaker_id is not None:
                rec["speaker_id"] = utt.speaker_id
            if utt.time_span is not None:
                rec["time_span"] = list(utt.time_span)
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Stratified splitting


def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    ideal = [n * r for r in ratios]
    base = [int(x) for x in ideal]
    leftover = n - sum(base)
    # Ties on the fractional part go to the earlier part (train, dev, test).
    order = sorted(range(len(ratios)), key=lambda i: (-(ideal[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def stratified_split(
    items: Sequence,
    ratios: tuple[float, float, float],
    seed: int,
    stratum_key: Callable = lambda item: "all",
    id_key: Callable = str,
) -> SplitSpec:
    """Split items into train/dev/test, balanced per stratum.

    Within each stratum the three part sizes follow largest-remainder
    allocation of `ratios`, so per-stratum proportions deviate from the
    global ratios by at most one item.  Membership is deterministic given
    `seed`: strata are processed in sorted name order and one seeded shuffle
    assigns items within each stratum.
    """
    import numpy as np

    if not items:
        raise ValueError("cannot split an empty item sequence")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")

    strata: dict[str, list] = {}
    for item in items:
        strata.setdefault(str(stratum_key(item)), []).append(item)

    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    for name in sorted(strata):
        members = strata[name]
        counts = _largest_remainder(len(members), ratios)
        perm = rng.permutation(len(members))
        cursor = 0
        for part, count in zip(SplitSpec.PARTS, counts):
            for j in perm[cursor:cursor + count]:
                item_id = id_key(members[j])
                if item_id in assignment:
                    raise ValueError(f"duplicate item id {item_id!r}")
                assignment[item_id] = part
            cursor += count
    return SplitSpec(assignment, seed)
