"""Scoring machinery: attachment scores with subset breakdowns, OOV marking,
minimum-edit-distance error rates for SLU, weighted F1, and Student-t
confidence intervals.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize, special

from .corpus_io import DepTree, Token

__all__ = [
    "AttachmentReport",
    "AlignmentCounts",
    "attachment_scores",
    "mark_oov",
    "align_error_rate",
    "corpus_error_rate",
    "weighted_f1",
    "student_t_cdf",
    "student_t_quantile",
    "t_confidence_interval",
]


@dataclass(frozen=True)
class SubsetReport:
    las: float
    uas: float
    upos: float
    token_count: int
    delta_las: float
    delta_uas: float
    delta_upos: float


@dataclass(frozen=True)
class AttachmentReport:
    las: float
    uas: float
    upos: float
    token_count: int
    sentence_count: int
    subset: Optional[SubsetReport] = None

    def to_dict(self) -> dict:
        out = {
            "las": self.las, "uas": self.uas, "upos": self.upos,
            "token_count": self.token_count, "sentence_count": self.sentence_count,
        }
        if self.subset is not None:
            out["subset"] = {
                "las": self.subset.las, "uas": self.subset.uas, "upos": self.subset.upos,
                "token_count": self.subset.token_count,
                "delta_las": self.subset.delta_las,
                "delta_uas": self.subset.delta_uas,
                "delta_upos": self.subset.delta_upos,
            }
        return out


def _pct(hits: int, total: int) -> float:
    return 100.0 * hits / total if total else 0.0


def attachment_scores(
    gold: Sequence[DepTree],
    pred: Sequence[DepTree],
    subset: Optional[Callable[[Token], bool]] = None,
) -> AttachmentReport:
    """LAS/UAS/UPOS over aligned gold and predicted trees.

    Every token counts (speech transcripts carry no punctuation to exclude).
    With a `subset` predicate the report also carries the metrics over
    matching tokens only, plus the subset-minus-global deltas.
    """
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold vs {len(pred)} predicted sentences")
    head_hits = label_hits = pos_hits = total = 0
    s_head = s_label = s_pos = s_total = 0
    for idx, (g, p) in enumerate(zip(gold, pred)):
        if g.utterance.words != p.utterance.words:
            raise ValueError(
                f"sentence {idx} diverges: gold {' '.join(g.utterance.words)!r} "
                f"vs predicted {' '.join(p.utterance.words)!r}"
            )
        for i, tok in enumerate(g.utterance.tokens, start=1):
            head_ok = g.heads[i] == p.heads[i]
            label_ok = head_ok and g.labels[i] == p.labels[i]
            pos_ok = g.pos[i] == p.pos[i]
            total += 1
            head_hits += head_ok
            label_hits += label_ok
            pos_hits += pos_ok
            if subset is not None and subset(tok):
                s_total += 1
                s_head += head_ok
                s_label += label_ok
                s_pos += pos_ok
    if total == 0:
        raise ValueError("no tokens to score")
    las, uas, upos = _pct(label_hits, total), _pct(head_hits, total), _pct(pos_hits, total)
    sub = None
    if subset is not None:
        sub = SubsetReport(
            las=_pct(s_label, s_total), uas=_pct(s_head, s_total),
            upos=_pct(s_pos, s_total), token_count=s_total,
            delta_las=_pct(s_label, s_total) - las,
            delta_uas=_pct(s_head, s_total) - uas,
            delta_upos=_pct(s_pos, s_total) - upos,
        )
    return AttachmentReport(las, uas, upos, total, len(gold), sub)


def mark_oov(tokens: Sequence[Token], lexicon: set[str]) -> list[Token]:
    """Set each token's oov flag to (surface not in lexicon)."""
    if not lexicon:
        raise ValueError("lexicon must be non-empty")
    return [replace(t, oov=t.surface not in lexicon) for t in tokens]


# ---------------------------------------------------------------------------
# Forced alignment (CER / CVER building block)


@dataclass(frozen=True)
class AlignmentCounts:
    substitutions: int
    deletions: int
    insertions: int
    ref_length: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def rate(self) -> Optional[float]:
        return self.errors / self.ref_length if self.ref_length else None

    def __add__(self, other: "AlignmentCounts") -> "AlignmentCounts":
        return AlignmentCounts(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.ref_length + other.ref_length,
        )


def align_error_rate(ref: Sequence, hyp: Sequence) -> AlignmentCounts:
    """Minimum-edit-distance alignment with unit costs.

    Counts come from one optimal alignment; the backtrace prefers
    substitution over deletion over insertion, so individual S/D/I counts
    are deterministic even when several alignments tie (their sum cannot
    differ across optima).
    """
    n, m = len(ref), len(hyp)
    dist = np.zeros((n + 1, m + 1), dtype=int)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            dele = dist[i - 1, j] + 1
            ins = dist[i, j - 1] + 1
            dist[i, j] = min(sub, dele, ins)
    subs = dels = inss = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return AlignmentCounts(subs, dels, inss, n)


def corpus_error_rate(pairs: Sequence[tuple[Sequence, Sequence]]) -> tuple[float, AlignmentCounts]:
    """Corpus-level error rate: summed errors over summed reference lengths."""
    total = AlignmentCounts(0, 0, 0, 0)
    for ref, hyp in pairs:
        total = total + align_error_rate(ref, hyp)
    if total.ref_length == 0:
        raise ValueError("corpus error rate undefined: empty reference")
    return total.errors / total.ref_length, total


# ---------------------------------------------------------------------------
# Weighted F1


def weighted_f1(gold: Sequence, pred: Sequence) -> float:
    """Per-class F1 averaged with gold-support weights; 0 where undefined."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold labels vs {len(pred)} predictions")
    if not gold:
        raise ValueError("cannot score an empty label sequence")
    support = Counter(gold)
    tp = Counter()
    pred_count = Counter(pred)
    for g, p in zip(gold, pred):
        if g == p:
            tp[g] += 1
    score = 0.0
    for cls, n_gold in support.items():
        prec = tp[cls] / pred_count[cls] if pred_count[cls] else 0.0
        rec = tp[cls] / n_gold
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        score += n_gold * f1
    return score / len(gold)


# ---------------------------------------------------------------------------
# Student-t confidence intervals


def student_t_cdf(t: float, df: int) -> float:
    """CDF of the Student t-distribution via the regularized incomplete beta."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * special.betainc(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def student_t_quantile(p: float, df: int) -> float:
    """Numeric inversion of the Student-t CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError("quantile level must be in (0, 1)")
    if p == 0.5:
        return 0.0
    lo, hi = -1.0, 1.0
    while student_t_cdf(lo, df) > p:
        lo *= 2
    while student_t_cdf(hi, df) < p:
        hi *= 2
    return optimize.brentq(lambda t: student_t_cdf(t, df) - p, lo, hi, xtol=1e-12)


def t_confidence_interval(values: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Mean and half-width of the Student-t interval at the given level."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise ValueError("confidence interval needs at least 2 values")
    mean = float(values.mean())
    std = float(values.std(ddof=1))
    quantile = student_t_quantile((1.0 + level) / 2.0, n - 1)
    return mean, quantile * std / np.sqrt(n)
