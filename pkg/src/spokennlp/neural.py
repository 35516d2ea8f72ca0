"""Feed-forward classifier used by the parser and the SLU tagger.

Input dropout, a stack of ReLU hidden layers with their own dropout, and one
linear+softmax decision layer per head.  Dropout is inverted (activations
scale by 1/(1-p) at train time) so evaluation is a plain forward pass.
Illegal classes are masked to -inf logits before the softmax, which makes
their probabilities exactly zero and their gradients the masked-softmax
gradients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

__all__ = [
    "MlpSpec",
    "MlpParams",
    "init_params",
    "forward",
    "backward",
    "adam_step",
    "softmax",
]

PAPER_HIDDEN = (3200, 1600)
DESK_HIDDEN = (320, 160)


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    head_sizes: Mapping[str, int]
    hidden_dims: tuple[int, ...] = PAPER_HIDDEN
    input_dropout: float = 0.5
    hidden_dropout: float = 0.4

    def __post_init__(self):
        if self.input_dim < 1 or any(d < 1 for d in self.hidden_dims):
            raise ValueError("dimensions must be positive")
        if not self.head_sizes or any(k < 1 for k in self.head_sizes.values()):
            raise ValueError("each head needs a positive output arity")
        for rate in (self.input_dropout, self.hidden_dropout):
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"dropout rate {rate} outside [0, 1)")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "head_sizes": dict(self.head_sizes),
            "hidden_dims": list(self.hidden_dims),
            "input_dropout": self.input_dropout,
            "hidden_dropout": self.hidden_dropout,
        }

    @staticmethod
    def from_dict(raw: dict) -> "MlpSpec":
        return MlpSpec(
            input_dim=raw["input_dim"],
            head_sizes=raw["head_sizes"],
            hidden_dims=tuple(raw["hidden_dims"]),
            input_dropout=raw["input_dropout"],
            hidden_dropout=raw["hidden_dropout"],
        )


@dataclass
class MlpParams:
    """Weight arrays plus Adam accumulators, all keyed the same way."""

    arrays: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def copy(self) -> "MlpParams":
        return MlpParams(
            {k: v.copy() for k, v in self.arrays.items()},
            {k: v.copy() for k, v in self.adam_m.items()},
            {k: v.copy() for k, v in self.adam_v.items()},
            self.step,
        )


def _layer_keys(spec: MlpSpec):
    for i in range(len(spec.hidden_dims)):
        yield f"w{i}", f"b{i}"


def _head_keys(name: str) -> tuple[str, str]:
    return f"head_{name}_w", f"head_{name}_b"


def init_params(spec: MlpSpec, seed: int = 0) -> MlpParams:
    """He-uniform weights for the ReLU layers, zero biases, seeded."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    fan_in = spec.input_dim
    for (wk, bk), width in zip(_layer_keys(spec), spec.hidden_dims):
        limit = np.sqrt(6.0 / fan_in)
        arrays[wk] = rng.uniform(-limit, limit, size=(width, fan_in))
        arrays[bk] = np.zeros(width)
        fan_in = width
    for name, arity in spec.head_sizes.items():
        wk, bk = _head_keys(name)
        limit = np.sqrt(6.0 / fan_in)
        arrays[wk] = rng.uniform(-limit, limit, size=(arity, fan_in))
        arrays[bk] = np.zeros(arity)
    return MlpParams(arrays)


def softmax(logits: np.ndarray) -> np.ndarray:
    finite = logits[np.isfinite(logits)]
    if finite.size == 0:
        raise ValueError("softmax over fully masked logits")
    shifted = logits - finite.max()
    exps = np.where(np.isfinite(shifted), np.exp(np.minimum(shifted, 0.0)), 0.0)
    return exps / exps.sum()


def forward(
    params: MlpParams,
    spec: MlpSpec,
    x: np.ndarray,
    mode: str = "eval",
    dropout_seed: Optional[int] = None,
    masks: Optional[Mapping[str, np.ndarray]] = None,
):
    """Run the network on one input vector.

    Returns (probs_per_head, cache); the cache is None in eval mode and
    feeds `backward` in train mode.  `masks` maps head name to a boolean
    legality vector; masked classes get probability exactly 0.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.input_dim,):
        raise ValueError(f"input of shape {x.shape}, spec wants ({spec.input_dim},)")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', not {mode!r}")

    train = mode == "train"
    rng = np.random.default_rng(dropout_seed) if train else None

    def drop_mask(size: int, rate: float) -> np.ndarray:
        if not train or rate == 0.0:
            return np.ones(size)
        return (rng.random(size) >= rate) / (1.0 - rate)

    mask0 = drop_mask(spec.input_dim, spec.input_dropout)
    activations = [x * mask0]
    zs = []
    drop_masks = [mask0]
    for wk, bk in _layer_keys(spec):
        z = params.arrays[wk] @ activations[-1] + params.arrays[bk]
        zs.append(z)
        mask = drop_mask(z.size, spec.hidden_dropout)
        drop_masks.append(mask)
        activations.append(np.maximum(z, 0.0) * mask)

    probs: dict[str, np.ndarray] = {}
    for name in spec.head_sizes:
        wk, bk = _head_keys(name)
        logits = params.arrays[wk] @ activations[-1] + params.arrays[bk]
        if masks is not None and name in masks:
            logits = np.where(masks[name], logits, -np.inf)
        probs[name] = softmax(logits)

    cache = None
    if train:
        cache = {"activations": activations, "zs": zs, "drop_masks": drop_masks,
                 "probs": probs}
    return probs, cache


def backward(
    params: MlpParams,
    spec: MlpSpec,
    cache: dict,
    head: str,
    target: Union[int, np.ndarray],
) -> dict[str, np.ndarray]:
    """Cross-entropy gradients for one head (the only one trained this step).

    `target` is a class index or a distribution over the head's classes.
    Returns gradients for the trunk, the active head, and the input vector
    (key "input") so embedding tables upstream can be updated too.
    """
    probs = cache["probs"][head]
    arity = spec.head_sizes[head]
    if isinstance(target, (int, np.integer)):
        if not 0 <= target < arity:
            raise ValueError(f"target class {target} outside head {head!r} of arity {arity}")
        if probs[target] == 0.0:
            raise ValueError(f"target class {target} is masked out for head {head!r}")
        t = np.zeros(arity)
        t[target] = 1.0
    else:
        t = np.asarray(target, dtype=float)
        if t.shape != (arity,):
            raise ValueError(f"target distribution of shape {t.shape} for arity {arity}")
        if np.any((t > 0) & (probs == 0.0)):
            raise ValueError(f"target distribution puts mass on masked classes of {head!r}")

    activations = cache["activations"]
    zs = cache["zs"]
    drop_masks = cache["drop_masks"]

    grads: dict[str, np.ndarray] = {}
    d_logits = probs - t  # masked classes: 0 - 0
    wk, bk = _head_keys(head)
    grads[wk] = np.outer(d_logits, activations[-1])
    grads[bk] = d_logits
    d_act = params.arrays[wk].T @ d_logits

    for i in reversed(range(len(spec.hidden_dims))):
        d_z = d_act * drop_masks[i + 1] * (zs[i] > 0.0)
        lw, lb = f"w{i}", f"b{i}"
        grads[lw] = np.outer(d_z, activations[i])
        grads[lb] = d_z
        d_act = params.arrays[lw].T @ d_z

    grads["input"] = d_act * drop_masks[0]
    return grads


def adam_step(
    params: MlpParams,
    grads: Mapping[str, np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> MlpParams:
    """One bias-corrected Adam update on the keys present in `grads`.

    Mutates `params` in place and returns it; the step count increments
    once per call.
    """
    for key, grad in grads.items():
        if key == "input":
            continue
        if not np.all(np.isfinite(grad)):
            raise ValueError(f"non-finite gradient for tensor {key!r}")
        if grad.shape != params.arrays[key].shape:
            raise ValueError(f"gradient shape {grad.shape} mismatches {key!r}")
    params.step += 1
    t = params.step
    for key, grad in grads.items():
        if key == "input":
            continue
        m = params.adam_m.setdefault(key, np.zeros_like(grad))
        v = params.adam_v.setdefault(key, np.zeros_like(grad))
        m *= beta1
        m += (1 - beta1) * grad
        v *= beta2
        v += (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        params.arrays[key] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


# ---------------------------------------------------------------------------
# Checkpoint container (versioned npz with a JSON meta entry)


def save_arrays(path, meta: dict, arrays: Mapping[str, np.ndarray]) -> None:
    payload = {f"arr_{k}": v for k, v in arrays.items()}
    payload["meta"] = np.array(json.dumps({"format_version": 1, **meta}, sort_keys=True))
    np.savez(path, **payload)


def load_arrays(path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.pop("format_version", None) != 1:
            raise ValueError(f"{path}: unsupported checkpoint format version")
        arrays = {k[4:]: data[k] for k in data.files if k.startswith("arr_")}
    return meta, arrays
