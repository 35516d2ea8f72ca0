"""Text conditions of ASR transcripts: lowercasing, punctuation stripping,
pseudo-sentence segmentation from diarization turns, deanonymization and the
repunctuation contrast.
"""

from __future__ import annotations

import hashlib
import json
import logging
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus_io import ParseError, Token, Utterance

__all__ = [
    "DiarizationTurn",
    "NameInventory",
    "normalize_text",
    "segment_turns",
    "deanonymize",
    "repunctuate",
    "strip_synthetic",
    "read_turns_jsonl",
]

log = logging.getLogger(__name__)

# Unicode P* plus a few typographic characters that sometimes land in other
# categories depending on the Unicode version.
_EXTRA_PUNCT = set("«»—…")
_APOSTROPHES = {"'", "’"}


def _is_punct(ch: str) -> bool:
    return ch in _EXTRA_PUNCT or unicodedata.category(ch).startswith("P")


def normalize_text(raw: str) -> str:
    """Lowercase, strip punctuation and collapse whitespace.

    Apostrophes flanked by letters survive because French elision (l', d')
    is part of the ASR output vocabulary; every other punctuation character
    is removed outright.  Idempotent.
    """
    lowered = raw.lower()
    kept = []
    for i, ch in enumerate(lowered):
        if _is_punct(ch):
            if ch in _APOSTROPHES:
                prev_ok = i > 0 and lowered[i - 1].isalpha()
                next_ok = i + 1 < len(lowered) and lowered[i + 1].isalpha()
                if prev_ok and next_ok:
                    kept.append(ch)
            continue
        kept.append(ch)
    return " ".join("".join(kept).split())


@dataclass(frozen=True)
class DiarizationTurn:
    """One speaker turn as produced by diarization + ASR."""

    recording_id: str
    speaker_id: Optional[str]
    start: float
    end: float
    raw_text: str

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"turn start {self.start} > end {self.end}")


def read_turns_jsonl(path) -> list[DiarizationTurn]:
    """Read diarization turns (recording_id, speaker, start, end, text) from JSON lines."""
    turns = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({e})") from None
            turns.append(
                DiarizationTurn(
                    recording_id=raw["recording_id"],
                    speaker_id=raw.get("speaker"),
                    start=float(raw["start"]),
                    end=float(raw["end"]),
                    raw_text=raw["text"],
                )
            )
    return turns


def segment_turns(turns: Sequence[DiarizationTurn]) -> list[Utterance]:
    """Turn diarization turns into pseudo-sentence utterances.

    Each non-empty turn (after normalization) becomes one utterance.
    Duplicate normalized texts are removed corpus-wide, keeping the first
    occurrence, so the output contains unique segments only.
    """
    utts: list[Utterance] = []
    seen: set[str] = set()
    n_empty = 0
    n_dup = 0
    for turn in turns:
        text = normalize_text(turn.raw_text)
        if not text:
            n_empty += 1
            continue
        if text in seen:
            n_dup += 1
            continue
        seen.add(text)
        utts.append(
            Utterance.from_words(
                text.split(),
                recording_id=turn.recording_id,
                speaker_id=turn.speaker_id,
                time_span=(turn.start, turn.end),
            )
        )
    log.info(
        "segment_turns: %d turns -> %d utterances (%d empty, %d duplicates dropped)",
        len(turns), len(utts), n_empty, n_dup,
    )
    return utts


@dataclass(frozen=True)
class NameInventory:
    """Replacement proper names for deanonymization."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("replacement names must be pairwise distinct")
        for name in self.names:
            if normalize_text(name) != name:
                raise ValueError(f"name {name!r} does not survive normalization unchanged")

    def __len__(self) -> int:
        return len(self.names)

    @staticmethod
    def from_file(path) -> "NameInventory":
        with open(path, encoding="utf-8") as f:
            names = tuple(line.strip() for line in f if line.strip())
        return NameInventory(names)


def _recording_rng(seed: int, recording_id: str) -> np.random.Generator:
    digest = hashlib.sha256(recording_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def deanonymize(
    utts: Sequence[Utterance],
    placeholder: str,
    names: NameInventory,
    seed: int,
) -> list[Utterance]:
    """Replace masked proper-name placeholders with concrete names.

    Within one recording the i-th placeholder occurrence always receives the
    same name, names are not reused while unused ones remain, and a different
    recording re-randomizes the seeded choice.
    """
    if not len(names):
        raise ValueError("name inventory is empty")

    slots: dict[str, int] = {}
    for utt in utts:
        count = sum(1 for t in utt.tokens if t.surface == placeholder)
        if count:
            slots[utt.recording_id] = slots.get(utt.recording_id, 0) + count
    overfull = {rid for rid, n in slots.items() if n > len(names)}
    if overfull:
        raise ValueError(
            f"more placeholder slots than inventory names in recording(s): {sorted(overfull)}"
        )

    per_recording: dict[str, list[str]] = {}
    cursor: dict[str, int] = {}
    out: list[Utterance] = []
    for utt in utts:
        rid = utt.recording_id
        if rid not in per_recording:
            rng = _recording_rng(seed, rid)
            per_recording[rid] = [names.names[i] for i in rng.permutation(len(names))]
            cursor[rid] = 0
        new_tokens = []
        changed = False
        for tok in utt.tokens:
            if tok.surface == placeholder:
                name = per_recording[rid][cursor[rid]]
                cursor[rid] += 1
                new_tokens.append(Token(name, tok.index, tok.oov, tok.synthetic))
                changed = True
            else:
                new_tokens.append(tok)
        if changed:
            out.append(Utterance(tuple(new_tokens), rid, utt.speaker_id, utt.time_span))
        else:
            out.append(utt)
    return out


def repunctuate(utts: Sequence[Utterance]) -> list[Utterance]:
    """Append a synthetic final period to each utterance.

    The added token informs context embeddings only; downstream consumers
    filter on `Token.synthetic` so it never reaches the parser.
    """
    out = []
    for utt in utts:
        period = Token(".", len(utt.tokens) + 1, synthetic=True)
        out.append(Utterance(utt.tokens + (period,), utt.recording_id,
                             utt.speaker_id, utt.time_span))
    return out


def strip_synthetic(utts: Iterable[Utterance]) -> list[Utterance]:
    """Drop synthetic tokens; inverse of `repunctuate`."""
    out = []
    for utt in utts:
        real = tuple(t for t in utt.tokens if not t.synthetic)
        if real == utt.tokens:
            out.append(utt)
        else:
            out.append(Utterance(real, utt.recording_id, utt.speaker_id, utt.time_span))
    return out
