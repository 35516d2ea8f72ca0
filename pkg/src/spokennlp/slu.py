"""Concept tagging for spoken language understanding: BIO span codec,
rule-based value normalization, CER/CVER scoring helpers, and a windowed
neural tagger reusing the MLP.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import neural
from .corpus_io import SluSample, Token, Utterance
from .embed import EmbeddingProvider, utterance_vectors
from .metrics import AlignmentCounts, corpus_error_rate
from .neural import MlpParams, MlpSpec, adam_step, backward, forward

__all__ = [
    "ConceptSpan",
    "ValueRules",
    "bio_decode",
    "bio_encode",
    "extract_values",
    "concept_sequence",
    "concept_value_sequence",
    "score_cer",
    "score_cver",
    "SluTagger",
    "train_slu_tagger",
    "decode_slu",
    "save_tagger",
    "load_tagger",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConceptSpan:
    """One semantic unit: concept label over an inclusive token span."""

    concept: str
    start: int  # 1-based, inclusive
    end: int
    surface: str
    value: Optional[str] = None

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"span start {self.start} > end {self.end}")


def bio_decode(tags: Sequence[str], tokens: Sequence[Token]) -> list[ConceptSpan]:
    """Maximal B-x (I-x)* runs become spans; O tokens produce none.

    An I-x without a compatible predecessor is repaired as B-x (the usual
    BIO-2 repair) and logged, so decoding is total on model output.
    """
    if len(tags) != len(tokens):
        raise ValueError(f"{len(tags)} tags for {len(tokens)} tokens")
    spans: list[ConceptSpan] = []
    current: Optional[tuple[str, int, list[str]]] = None
    repairs = 0

    def close():
        nonlocal current
        if current is not None:
            concept, start, words = current
            spans.append(ConceptSpan(concept, start, start + len(words) - 1,
                                     " ".join(words)))
            current = None

    for i, (tag, tok) in enumerate(zip(tags, tokens), start=1):
        if tag == "O":
            close()
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            raise ValueError(f"malformed BIO tag {tag!r} at position {i}")
        marker, concept = tag[0], tag[2:]
        if marker == "I" and current is not None and current[0] == concept:
            current[2].append(tok.surface)
            continue
        if marker == "I":
            repairs += 1
        close()
        current = (concept, i, [tok.surface])
    close()
    if repairs:
        log.info("bio_decode: repaired %d orphan I- tags as B-", repairs)
    return spans


def bio_encode(spans: Sequence[ConceptSpan], n_tokens: int) -> list[str]:
    """Inverse of bio_decode on well-formed spans; overlaps are rejected."""
    tags = ["O"] * n_tokens
    last_end = 0
    for span in sorted(spans, key=lambda s: s.start):
        if span.start <= last_end:
            raise ValueError(f"overlapping spans at token {span.start}")
        if span.end > n_tokens:
            raise ValueError(f"span end {span.end} beyond {n_tokens} tokens")
        tags[span.start - 1] = f"B-{span.concept}"
        for i in range(span.start, span.end):
            tags[i] = f"I-{span.concept}"
        last_end = span.end
    return tags


class ValueRules:
    """Ordered (pattern, replacement) rules per concept; first match wins.

    `replacement` may use backreferences (match.expand semantics).  A span
    whose concept has no matching rule keeps its surface as the value.
    """

    def __init__(self, rules: dict[str, list[tuple[str, str]]]):
        self.rules = {
            concept: [(re.compile(pat), repl) for pat, repl in pairs]
            for concept, pairs in rules.items()
        }

    def value(self, concept: str, surface: str) -> str:
        for pattern, repl in self.rules.get(concept, ()):
            m = pattern.search(surface)
            if m:
                return m.expand(repl)
        return surface

    @staticmethod
    def from_json(path) -> "ValueRules":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        return ValueRules({
            concept: [(r["pattern"], r["value"]) for r in rules]
            for concept, rules in raw.items()
        })

    @staticmethod
    def identity() -> "ValueRules":
        return ValueRules({})


def extract_values(spans: Sequence[ConceptSpan], rules: ValueRules) -> list[ConceptSpan]:
    """Fill each span's normalized value by rule application."""
    return [replace(s, value=rules.value(s.concept, s.surface)) for s in spans]


# ---------------------------------------------------------------------------
# CER / CVER


def concept_sequence(sample: SluSample) -> list[str]:
    return [s.concept for s in bio_decode(sample.bio_tags, sample.utterance.tokens)]


def concept_value_sequence(sample: SluSample, rules: ValueRules) -> list[tuple[str, str]]:
    spans = extract_values(bio_decode(sample.bio_tags, sample.utterance.tokens), rules)
    return [(s.concept, s.value) for s in spans]


def score_cer(refs: Sequence[SluSample], hyps: Sequence[SluSample]) -> tuple[float, AlignmentCounts]:
    """Concept error rate between force-aligned reference and hypothesis concepts."""
    pairs = [(concept_sequence(r), concept_sequence(h)) for r, h in zip(refs, hyps)]
    return corpus_error_rate(pairs)


def score_cver(refs: Sequence[SluSample], hyps: Sequence[SluSample],
               rules: ValueRules) -> tuple[float, AlignmentCounts]:
    """Concept-value error rate: same alignment over (concept, value) pairs."""
    pairs = [
        (concept_value_sequence(r, rules), concept_value_sequence(h, rules))
        for r, h in zip(refs, hyps)
    ]
    return corpus_error_rate(pairs)


# ---------------------------------------------------------------------------
# Windowed tagger

BIO_HEAD = "bio"


def bio_inventory(concepts: Sequence[str]) -> list[str]:
    tags = ["O"]
    for concept in sorted(set(concepts)):
        tags.append(f"B-{concept}")
        tags.append(f"I-{concept}")
    return tags


@dataclass
class SluTagger:
    """Per-token BIO classifier over a window of provider vectors."""

    mlp_spec: MlpSpec
    params: MlpParams
    tagset: list[str]
    window: tuple[int, int]
    word_dim: int

    def tag_index(self, tag: str) -> int:
        return self.tagset.index(tag)


def _window_features(vecs: np.ndarray, i: int, window: tuple[int, int], dim: int) -> np.ndarray:
    parts = []
    for offset in range(window[0], window[1] + 1):
        j = i + offset
        if 0 <= j < len(vecs):
            parts.append(vecs[j])
        else:
            parts.append(np.zeros(dim))
    return np.concatenate(parts)


def train_slu_tagger(
    samples: Sequence[SluSample],
    provider: EmbeddingProvider,
    dev_samples: Sequence[SluSample],
    concepts: Sequence[str],
    window: tuple[int, int] = (-3, 2),
    hidden_dims: tuple[int, ...] = neural.DESK_HIDDEN,
    epochs: int = 50,
    lr: float = 1e-3,
    batch_size: int = 32,
    seed: int = 0,
) -> tuple[SluTagger, list[dict]]:
    """Cross-entropy training with dev-CER checkpoint selection."""
    if not samples:
        raise ValueError("empty SLU training set")
    tagset = bio_inventory(concepts)
    known = set(tagset)
    for group in (samples, dev_samples):
        for sample in group:
            extra = set(sample.bio_tags) - known
            if extra:
                raise ValueError(f"tags outside the declared concept inventory: {sorted(extra)}")

    n_slots = window[1] - window[0] + 1
    mspec = MlpSpec(
        input_dim=n_slots * provider.dim,
        head_sizes={BIO_HEAD: len(tagset)},
        hidden_dims=hidden_dims,
    )
    tagger = SluTagger(mspec, neural.init_params(mspec, seed=seed), tagset, window,
                       provider.dim)
    tag_to_idx = {t: i for i, t in enumerate(tagset)}

    prepared = [
        (utterance_vectors(provider, s.utterance), [tag_to_idx[t] for t in s.bio_tags])
        for s in samples
    ]
    rng = np.random.default_rng(seed)
    best_cer = float("inf")
    best_params = tagger.params.copy()
    best_epoch = 0
    history = []
    for epoch in range(1, epochs + 1):
        total_loss = 0.0
        n_items = 0
        pending: dict[str, np.ndarray] = {}
        pending_count = 0
        for si in rng.permutation(len(prepared)):
            vecs, targets = prepared[si]
            for i, target in enumerate(targets):
                x = _window_features(vecs, i, window, provider.dim)
                probs, cache = forward(tagger.params, mspec, x, mode="train",
                                       dropout_seed=int(rng.integers(2**63)))
                total_loss += -float(np.log(max(probs[BIO_HEAD][target], 1e-300)))
                n_items += 1
                grads = backward(tagger.params, mspec, cache, BIO_HEAD, target)
                grads.pop("input")
                for key, g in grads.items():
                    if key in pending:
                        pending[key] += g
                    else:
                        pending[key] = g.copy()
                pending_count += 1
                if pending_count >= batch_size:
                    for g in pending.values():
                        g /= pending_count
                    adam_step(tagger.params, pending, lr=lr)
                    pending, pending_count = {}, 0
        if pending_count:
            for g in pending.values():
                g /= pending_count
            adam_step(tagger.params, pending, lr=lr)

        dev_hyp = decode_slu(tagger, [s.utterance for s in dev_samples], provider)
        cer, _ = score_cer(dev_samples, dev_hyp)
        entry = {"epoch": epoch, "train_loss": round(total_loss / max(n_items, 1), 6),
                 "dev_cer": cer}
        history.append(entry)
        log.info("slu epoch %d: loss %.4f dev CER %.4f", epoch, entry["train_loss"], cer)
        if cer < best_cer:
            best_cer = cer
            best_params = tagger.params.copy()
            best_epoch = epoch
    tagger.params = best_params
    for entry in history:
        entry["selected"] = entry["epoch"] == best_epoch
    return tagger, history


def decode_slu(tagger: SluTagger, utterances: Sequence[Utterance],
               provider: EmbeddingProvider) -> list[SluSample]:
    """Greedy per-token tagging; outputs re-encode through the repair path so
    every returned sample is well-formed BIO."""
    out = []
    for utt in utterances:
        real = tuple(t for t in utt.tokens if not t.synthetic)
        real_utt = Utterance.from_words([t.surface for t in real], utt.recording_id,
                                        utt.speaker_id, utt.time_span)
        vecs = utterance_vectors(provider, utt)
        raw = []
        for i in range(len(real)):
            x = _window_features(vecs, i, tagger.window, tagger.word_dim)
            probs, _ = forward(tagger.params, tagger.mlp_spec, x, mode="eval")
            raw.append(tagger.tagset[int(np.argmax(probs[BIO_HEAD]))])
        repaired = bio_encode(bio_decode(raw, real_utt.tokens), len(real_utt))
        out.append(SluSample(real_utt, tuple(repaired)))
    return out


def save_tagger(tagger: SluTagger, path) -> None:
    meta = {
        "kind": "slu",
        "mlp_spec": tagger.mlp_spec.to_dict(),
        "tagset": tagger.tagset,
        "window": list(tagger.window),
        "word_dim": tagger.word_dim,
        "step": tagger.params.step,
    }
    neural.save_arrays(path, meta, tagger.params.arrays)


def load_tagger(path) -> SluTagger:
    meta, arrays = neural.load_arrays(path)
    if meta.get("kind") != "slu":
        raise ValueError(f"{path}: not an SLU tagger checkpoint")
    params = MlpParams(arrays)
    params.step = meta["step"]
    return SluTagger(MlpSpec.from_dict(meta["mlp_spec"]), params, meta["tagset"],
                     tuple(meta["window"]), meta["word_dim"])
