"""Feature extraction, dynamic-oracle training and greedy decoding for the
transition parser.

Features concatenate, in fixed order, the word+tag embeddings of three stack
slots and a [-3, +2] window around the buffer front, then the embeddings of
the six most recent actions.  Tag and action embeddings (and optionally the
word table itself) are learned jointly with the classifier through the
input gradient; absent slots use dedicated padding rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import neural
from .corpus_io import DepTree, Utterance
from .embed import EmbeddingProvider, LookupProvider, utterance_vectors
from .metrics import AttachmentReport, attachment_scores
from .neural import MlpParams, MlpSpec, adam_step, backward, forward
from .transition import (
    ActionInventory,
    GoldAnnotation,
    ParserConfig,
    apply_action,
    dynamic_cost,
    finalize,
    initial_config,
    legal_actions,
    projectivize,
)

__all__ = [
    "FeatureSpec",
    "TrainRegime",
    "ParserModel",
    "build_parser_model",
    "extract_features",
    "train_parser",
    "decode",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

TRANSITION_HEAD = "transition"
TAG_HEAD = "tag"


@dataclass(frozen=True)
class FeatureSpec:
    word_dim: int
    stack_slots: int = 3
    window: tuple[int, int] = (-3, 2)
    history_len: int = 6
    tag_dim: int = 16
    action_dim: int = 16

    @property
    def n_token_slots(self) -> int:
        return self.stack_slots + (self.window[1] - self.window[0] + 1)

    @property
    def input_dim(self) -> int:
        return self.n_token_slots * (self.word_dim + self.tag_dim) \
            + self.history_len * self.action_dim

    def to_dict(self) -> dict:
        return {
            "word_dim": self.word_dim, "stack_slots": self.stack_slots,
            "window": list(self.window), "history_len": self.history_len,
            "tag_dim": self.tag_dim, "action_dim": self.action_dim,
        }

    @staticmethod
    def from_dict(raw: dict) -> "FeatureSpec":
        return FeatureSpec(
            word_dim=raw["word_dim"], stack_slots=raw["stack_slots"],
            window=tuple(raw["window"]), history_len=raw["history_len"],
            tag_dim=raw["tag_dim"], action_dim=raw["action_dim"],
        )


@dataclass(frozen=True)
class TrainRegime:
    epochs: int = 40
    explore_start_epoch: int = 2
    explore_prob: float = 0.9
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.explore_prob <= 1.0:
            raise ValueError("explore_prob must lie in [0, 1]")


@dataclass
class ParserModel:
    """Everything decoding needs: network, feature tables, inventories.

    `word_vocab` is set when the model learned its own word embeddings
    (trainable lookup); then the word table lives in `params` and decoding
    needs no provider.
    """

    mlp_spec: MlpSpec
    feature_spec: FeatureSpec
    inventory: ActionInventory
    params: MlpParams
    word_vocab: Optional[dict[str, int]] = None

    def word_vectors(self, utt: Utterance, provider: Optional[EmbeddingProvider]) -> np.ndarray:
        real = [t for t in utt.tokens if not t.synthetic]
        if self.word_vocab is not None:
            rows = [self.word_vocab.get(t.surface, 0) for t in real]
            return self.params.arrays["word_table"][rows]
        if provider is None:
            raise ValueError("this model carries no word table; pass an embedding provider")
        return utterance_vectors(provider, utt)

    def word_rows(self, utt: Utterance) -> Optional[list[int]]:
        if self.word_vocab is None:
            return None
        return [self.word_vocab.get(t.surface, 0) for t in utt.tokens if not t.synthetic]


def build_parser_model(
    inventory: ActionInventory,
    provider: EmbeddingProvider,
    hidden_dims: tuple[int, ...] = neural.DESK_HIDDEN,
    feature_spec: Optional[FeatureSpec] = None,
    seed: int = 0,
) -> ParserModel:
    """Initialize network weights and learned feature tables.

    A trainable LookupProvider seeds an internal word table that training
    updates; any other provider stays frozen and is queried at run time.
    """
    fspec = feature_spec or FeatureSpec(word_dim=provider.dim)
    if fspec.word_dim != provider.dim:
        raise ValueError(f"feature word_dim {fspec.word_dim} != provider dim {provider.dim}")
    mspec = MlpSpec(
        input_dim=fspec.input_dim,
        head_sizes={
            TRANSITION_HEAD: len(inventory.transition_actions),
            TAG_HEAD: len(inventory.tag_actions),
        },
        hidden_dims=hidden_dims,
    )
    params = neural.init_params(mspec, seed=seed)
    rng = np.random.default_rng([seed, 1])
    params.arrays["tag_table"] = (
        rng.standard_normal((len(inventory.pos_tags) + 1, fspec.tag_dim)) / np.sqrt(fspec.tag_dim)
    )
    params.arrays["action_table"] = (
        rng.standard_normal((len(inventory.all_actions) + 1, fspec.action_dim))
        / np.sqrt(fspec.action_dim)
    )
    params.arrays["word_pad"] = np.zeros(fspec.word_dim)

    word_vocab = None
    if isinstance(provider, LookupProvider) and provider.trainable:
        word_vocab = dict(provider.vocab)
        params.arrays["word_table"] = provider.table.copy()
    return ParserModel(mspec, fspec, inventory, params, word_vocab)


@dataclass(frozen=True)
class FeatureSlots:
    """Scatter map from input-gradient segments back to their tables.

    word_sources: per token slot, -1 for the padding vector, a table row
    (>= 0) for trainable words, or None for frozen provider vectors.
    """

    word_sources: tuple[Optional[int], ...]
    tag_rows: tuple[int, ...]
    action_rows: tuple[int, ...]


def extract_features(
    c: ParserConfig,
    word_vecs: Optional[np.ndarray],
    model: ParserModel,
    word_rows: Optional[Sequence[int]] = None,
) -> tuple[np.ndarray, FeatureSlots]:
    """Input vector for one configuration.

    `word_vecs` holds one provider vector per (real) token; with a trainable
    word table pass `word_rows` instead so lookups read the live table.
    Tag sub-vectors use the tags predicted so far (row 0 when untagged or
    slot absent); the root on the stack counts as an absent slot.
    """
    fspec = model.feature_spec
    arrays = model.params.arrays
    trainable = model.word_vocab is not None
    if trainable and word_rows is None:
        raise ValueError("model has a trainable word table; word_rows required")

    token_slots: list[Optional[int]] = []
    for depth in range(fspec.stack_slots):
        idx = len(c.stack) - 1 - depth
        tok = c.stack[idx] if idx >= 0 else 0
        token_slots.append(tok if tok != 0 else None)
    front = c.front if c.front is not None else c.n + 1
    for offset in range(fspec.window[0], fspec.window[1] + 1):
        pos = front + offset
        token_slots.append(pos if 1 <= pos <= c.n else None)

    parts: list[np.ndarray] = []
    word_sources: list[Optional[int]] = []
    tag_rows: list[int] = []
    for tok in token_slots:
        if tok is None:
            parts.append(arrays["word_pad"])
            word_sources.append(-1)
            tag_rows.append(0)
        else:
            if trainable:
                row = word_rows[tok - 1]
                parts.append(arrays["word_table"][row])
                word_sources.append(row)
            else:
                parts.append(word_vecs[tok - 1])
                word_sources.append(None)
            tag = c.tags[tok]
            tag_rows.append(0 if tag is None else model.inventory.pos_tags.index(tag) + 1)
        parts.append(arrays["tag_table"][tag_rows[-1]])

    action_rows = []
    recent = c.history[-fspec.history_len:]
    pad_count = fspec.history_len - len(recent)
    for _ in range(pad_count):
        action_rows.append(0)
    for a in recent:
        action_rows.append(model.inventory.action_index[a] + 1)
    for row in action_rows:
        parts.append(arrays["action_table"][row])

    x = np.concatenate(parts)
    if x.shape != (fspec.input_dim,):
        raise ValueError(f"feature vector of length {x.size}, spec wants {fspec.input_dim}")
    return x, FeatureSlots(tuple(word_sources), tuple(tag_rows), tuple(action_rows))


def _scatter_input_grad(d_input: np.ndarray, slots: FeatureSlots, model: ParserModel,
                        accum: dict[str, np.ndarray]) -> None:
    fspec = model.feature_spec
    dw, dt, da = fspec.word_dim, fspec.tag_dim, fspec.action_dim
    arrays = model.params.arrays

    def bucket(key: str) -> np.ndarray:
        if key not in accum:
            accum[key] = np.zeros_like(arrays[key])
        return accum[key]

    offset = 0
    for source, tag_row in zip(slots.word_sources, slots.tag_rows):
        gw = d_input[offset:offset + dw]
        if source == -1:
            pad = bucket("word_pad")
            pad += gw
        elif source is not None:
            bucket("word_table")[source] += gw
        offset += dw
        bucket("tag_table")[tag_row] += d_input[offset:offset + dt]
        offset += dt
    for row in slots.action_rows:
        bucket("action_table")[row] += d_input[offset:offset + da]
        offset += da


@dataclass
class SentenceData:
    utterance: Utterance  # real tokens only
    gold: GoldAnnotation  # projectivized
    original: DepTree
    word_vecs: Optional[np.ndarray]
    word_rows: Optional[list[int]]


def _prepare(model: ParserModel, trees: Sequence[DepTree],
             provider: Optional[EmbeddingProvider]) -> list[SentenceData]:
    data = []
    for tree in trees:
        utt = tree.utterance
        gold = projectivize(GoldAnnotation.from_tree(tree))
        if model.word_vocab is not None:
            data.append(SentenceData(utt, gold, tree, None, model.word_rows(utt)))
        else:
            data.append(SentenceData(utt, gold, tree, model.word_vectors(utt, provider), None))
    return data


def _legality_mask(legal, head: str, inventory: ActionInventory) -> np.ndarray:
    if head == TAG_HEAD:
        mask = np.zeros(len(inventory.tag_actions), dtype=bool)
        index = inventory.tag_index
    else:
        mask = np.zeros(len(inventory.transition_actions), dtype=bool)
        index = inventory.transition_index
    for a in legal:
        mask[index[a]] = True
    return mask


class _BatchAccumulator:
    def __init__(self, model: ParserModel, batch_size: int, lr: float):
        self.model = model
        self.batch_size = batch_size
        self.lr = lr
        self.grads: dict[str, np.ndarray] = {}
        self.count = 0

    def add(self, grads: dict[str, np.ndarray], slots: FeatureSlots) -> None:
        d_input = grads.pop("input")
        for key, g in grads.items():
            if key in self.grads:
                self.grads[key] += g
            else:
                self.grads[key] = g.copy()
        _scatter_input_grad(d_input, slots, self.model, self.grads)
        self.count += 1
        if self.count >= self.batch_size:
            self.flush()

    def flush(self) -> None:
        if not self.count:
            return
        for g in self.grads.values():
            g /= self.count
        adam_step(self.model.params, self.grads, lr=self.lr)
        self.grads = {}
        self.count = 0


def run_training_epoch(
    model: ParserModel,
    data: Sequence[SentenceData],
    regime: TrainRegime,
    epoch: int,
    rng: np.random.Generator,
) -> float:
    """One pass over the training sentences; returns the mean state loss.

    Every visited configuration contributes a cross-entropy term whose
    target is the model's best-scoring zero-cost action.  From
    `explore_start_epoch` on, the walk follows the model's argmax legal
    action with probability `explore_prob` (else the target), which exposes
    the classifier to its own mistakes under the dynamic oracle.
    """
    inventory = model.inventory
    batch = _BatchAccumulator(model, regime.batch_size, regime.lr)
    total_loss = 0.0
    n_states = 0
    for si in rng.permutation(len(data)):
        sent = data[si]
        c = initial_config(len(sent.utterance))
        while True:
            legal = legal_actions(c, inventory)
            if not legal:
                break
            head = TAG_HEAD if c.front_untagged() else TRANSITION_HEAD
            index = inventory.tag_index if head == TAG_HEAD else inventory.transition_index
            mask = _legality_mask(legal, head, inventory)
            x, slots = extract_features(c, sent.word_vecs, model, sent.word_rows)
            probs, cache = forward(
                model.params, model.mlp_spec, x, mode="train",
                dropout_seed=int(rng.integers(2**63)), masks={head: mask},
            )
            zero_cost = [a for a in legal if dynamic_cost(c, a, sent.gold) == 0]
            target = max(zero_cost, key=lambda a: probs[head][index[a]])
            total_loss += -float(np.log(max(probs[head][index[target]], 1e-300)))
            n_states += 1
            grads = backward(model.params, model.mlp_spec, cache, head, index[target])
            batch.add(grads, slots)

            explore = epoch >= regime.explore_start_epoch and rng.random() < regime.explore_prob
            if explore:
                chosen = legal[int(np.argmax([probs[head][index[a]] for a in legal]))]
            else:
                chosen = target
            c = apply_action(c, chosen)
    batch.flush()
    return total_loss / max(n_states, 1)


def train_parser(
    train_trees: Sequence[DepTree],
    dev_trees: Sequence[DepTree],
    provider: EmbeddingProvider,
    regime: TrainRegime = TrainRegime(),
    hidden_dims: tuple[int, ...] = neural.DESK_HIDDEN,
    feature_spec: Optional[FeatureSpec] = None,
    inventory: Optional[ActionInventory] = None,
) -> tuple[ParserModel, list[dict]]:
    """Dynamic-oracle training with dev-LAS checkpoint selection.

    Returns the model holding the best-epoch parameters (ties broken by the
    earliest epoch) and the per-epoch log (train loss, dev LAS/UAS/UPOS).
    """
    if not train_trees:
        raise ValueError("empty training set")
    if inventory is None:
        pos = {t.pos[i] for t in list(train_trees) + list(dev_trees) for i in t.pos}
        labels = {t.labels[i] for t in list(train_trees) + list(dev_trees) for i in t.labels}
        inventory = ActionInventory(sorted(pos), sorted(labels))
    model = build_parser_model(inventory, provider, hidden_dims, feature_spec,
                               seed=regime.seed)
    data = _prepare(model, train_trees, provider)
    dev_data = _prepare(model, dev_trees, provider)
    rng = np.random.default_rng(regime.seed)

    best_las = -1.0
    best_params = model.params.copy()
    best_epoch = 0
    history: list[dict] = []
    for epoch in range(1, regime.epochs + 1):
        loss = run_training_epoch(model, data, regime, epoch, rng)
        dev_pred = [_decode_sentence(model, sent) for sent in dev_data]
        report = attachment_scores([s.original for s in dev_data], dev_pred)
        entry = {
            "epoch": epoch, "train_loss": round(loss, 6),
            "dev_las": report.las, "dev_uas": report.uas, "dev_upos": report.upos,
        }
        history.append(entry)
        log.info("epoch %d: loss %.4f dev LAS %.2f UAS %.2f UPOS %.2f",
                 epoch, loss, report.las, report.uas, report.upos)
        if report.las > best_las:
            best_las = report.las
            best_params = model.params.copy()
            best_epoch = epoch
    model.params = best_params
    for entry in history:
        entry["selected"] = entry["epoch"] == best_epoch
    return model, history


def _decode_sentence(model: ParserModel, sent: SentenceData) -> DepTree:
    n = len(sent.utterance)
    c = initial_config(n)
    inventory = model.inventory
    max_steps = 3 * n + 1
    steps = 0
    while True:
        legal = legal_actions(c, inventory)
        if not legal:
            break
        if steps >= max_steps:
            raise AssertionError(f"decode exceeded {max_steps} actions for {n} tokens")
        head = TAG_HEAD if c.front_untagged() else TRANSITION_HEAD
        index = inventory.tag_index if head == TAG_HEAD else inventory.transition_index
        mask = _legality_mask(legal, head, inventory)
        x, _ = extract_features(c, sent.word_vecs, model, sent.word_rows)
        probs, _ = forward(model.params, model.mlp_spec, x, mode="eval", masks={head: mask})
        chosen = legal[int(np.argmax([probs[head][index[a]] for a in legal]))]
        c = apply_action(c, chosen)
        steps += 1
    return finalize(c, sent.utterance)


def decode(
    model: ParserModel,
    utterances: Sequence[Utterance],
    provider: Optional[EmbeddingProvider] = None,
) -> list[DepTree]:
    """Greedy argmax decoding.  Synthetic tokens inform provider vectors but
    never enter the parse; output trees cover the real tokens only."""
    out = []
    for utt in utterances:
        real = tuple(t for t in utt.tokens if not t.synthetic)
        real_utt = Utterance.from_words(
            [t.surface for t in real], utt.recording_id, utt.speaker_id, utt.time_span
        )
        sent = SentenceData(
            utterance=real_utt,
            gold=None,
            original=None,
            word_vecs=None if model.word_vocab is not None else model.word_vectors(utt, provider),
            word_rows=model.word_rows(utt),
        )
        out.append(_decode_sentence(model, sent))
    return out


# ---------------------------------------------------------------------------
# Checkpoint files


def save_model(model: ParserModel, path) -> None:
    meta = {
        "kind": "parser",
        "mlp_spec": model.mlp_spec.to_dict(),
        "feature_spec": model.feature_spec.to_dict(),
        "actions": model.inventory.to_lines(),
        "word_vocab": model.word_vocab,
        "step": model.params.step,
    }
    neural.save_arrays(path, meta, model.params.arrays)


def load_model(path) -> ParserModel:
    meta, arrays = neural.load_arrays(path)
    if meta.get("kind") != "parser":
        raise ValueError(f"{path}: not a parser checkpoint")
    params = MlpParams(arrays)
    params.step = meta["step"]
    return ParserModel(
        mlp_spec=MlpSpec.from_dict(meta["mlp_spec"]),
        feature_spec=FeatureSpec.from_dict(meta["feature_spec"]),
        inventory=ActionInventory.from_lines(meta["actions"]),
        params=params,
        word_vocab=meta["word_vocab"],
    )
