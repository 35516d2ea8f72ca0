"""TV-show classification stack: TF-IDF vectors, a kernel SVM trained with
SMO, and the repeated-random-split experiment harness scored by weighted F1.

The triangular kernel K(x, z) = -||x - z|| is parameter-free and only
conditionally positive definite, which is fine here: the zero-sum dual
constraint that SMO maintains keeps the optimization on the subspace where
the kernel behaves like a PSD one.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse

from .corpus_io import LabeledDocument
from .embed import EmbeddingProvider
from .metrics import t_confidence_interval, weighted_f1
from . import neural
from .neural import MlpSpec, adam_step, backward, forward

__all__ = [
    "TfidfModel",
    "tfidf_fit",
    "tfidf_transform",
    "tfidf_matrix",
    "triangular_kernel",
    "linear_kernel",
    "KERNELS",
    "SvmModel",
    "svm_train",
    "OneVsRestSvm",
    "SvmTextClassifier",
    "MeanPoolMlpClassifier",
    "run_splits",
]


# ---------------------------------------------------------------------------
# TF-IDF


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: dict[str, int]  # token -> column
    idf: np.ndarray
    k: int


def _texts(docs: Sequence) -> list[str]:
    return [d.text if isinstance(d, LabeledDocument) else d for d in docs]


def tfidf_fit(docs: Sequence, k: int = 5000) -> TfidfModel:
    """Vocabulary of the top-k tokens by document frequency (ties broken
    lexicographically); idf = ln(N / df), unsmoothed."""
    texts = _texts(docs)
    if not texts:
        raise ValueError("cannot fit TF-IDF on an empty corpus")
    df = Counter()
    for text in texts:
        df.update(set(text.split()))
    ranked = sorted(df, key=lambda t: (-df[t], t))[:k]
    vocabulary = {t: i for i, t in enumerate(ranked)}
    n = len(texts)
    idf = np.array([np.log(n / df[t]) for t in ranked])
    return TfidfModel(vocabulary, idf, k)


def tfidf_transform(model: TfidfModel, doc) -> sparse.csr_matrix:
    """L2-normalized count*idf row vector; unknown tokens are ignored and an
    empty document maps to the zero vector."""
    text = doc.text if isinstance(doc, LabeledDocument) else doc
    counts = Counter(text.split())
    cols, vals = [], []
    for token, count in counts.items():
        col = model.vocabulary.get(token)
        if col is not None:
            cols.append(col)
            vals.append(count * model.idf[col])
    row = sparse.csr_matrix(
        (vals, (np.zeros(len(cols), dtype=int), cols)),
        shape=(1, len(model.vocabulary)),
    )
    norm = sparse.linalg.norm(row)
    if norm > 0:
        row = row / norm
    return row


def tfidf_matrix(model: TfidfModel, docs: Sequence) -> sparse.csr_matrix:
    rows = [tfidf_transform(model, d) for d in docs]
    return sparse.vstack(rows).tocsr() if rows else sparse.csr_matrix((0, len(model.vocabulary)))


# ---------------------------------------------------------------------------
# Kernels


def _pairwise_sq_dists(x, z) -> np.ndarray:
    xn = np.asarray(x.multiply(x).sum(axis=1)).ravel()
    zn = np.asarray(z.multiply(z).sum(axis=1)).ravel()
    cross = np.asarray((x @ z.T).todense())
    return np.maximum(xn[:, None] + zn[None, :] - 2.0 * cross, 0.0)


def triangular_kernel(x, z) -> np.ndarray:
    """K(x, z) = -||x - z||_2, the non-parametric triangular kernel."""
    return -np.sqrt(_pairwise_sq_dists(x, z))


def linear_kernel(x, z) -> np.ndarray:
    return np.asarray((x @ z.T).todense())


KERNELS: dict[str, Callable] = {
    "triangular": triangular_kernel,
    "linear": linear_kernel,
}


# ---------------------------------------------------------------------------
# SMO


@dataclass
class SvmModel:
    """Binary kernel SVM in dual form (support vectors only)."""

    sv_vectors: sparse.csr_matrix
    sv_coef: np.ndarray  # alpha_i * y_i over support vectors
    bias: float
    kernel: str
    C: float

    def decision(self, x) -> np.ndarray:
        gram = KERNELS[self.kernel](self.sv_vectors, x)
        return self.sv_coef @ gram + self.bias

    def dual_constraint(self) -> float:
        return float(self.sv_coef.sum())


def svm_train(
    X: sparse.csr_matrix,
    y: Sequence[int],
    kernel: str = "triangular",
    C: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 10,
    seed: int = 0,
    max_sweeps: int = 500,
) -> SvmModel:
    """SMO-style dual optimization of a binary SVM (labels must be ±1).

    Sweeps stop after `max_passes` consecutive passes without an update or
    after `max_sweeps` total; KKT violations beyond `tol` trigger pair
    updates.  The pair step is skipped when the kernel curvature is
    non-negative (duplicate points under the triangular kernel).
    """
    y = np.asarray(y, dtype=float)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ValueError("binary SVM needs both +1 and -1 labels")
    m = X.shape[0]
    K = KERNELS[kernel](X, X)
    alphas = np.zeros(m)
    b = 0.0
    rng = np.random.default_rng(seed)

    def f(i: int) -> float:
        return float((alphas * y) @ K[:, i] + b)

    passes = 0
    sweeps = 0
    while passes < max_passes and sweeps < max_sweeps:
        changed = 0
        sweeps += 1
        for i in range(m):
            e_i = f(i) - y[i]
            if not ((y[i] * e_i < -tol and alphas[i] < C)
                    or (y[i] * e_i > tol and alphas[i] > 0)):
                continue
            j = int(rng.integers(m - 1))
            if j >= i:
                j += 1
            e_j = f(j) - y[j]
            a_i_old, a_j_old = alphas[i], alphas[j]
            if y[i] == y[j]:
                lo, hi = max(0.0, a_i_old + a_j_old - C), min(C, a_i_old + a_j_old)
            else:
                lo, hi = max(0.0, a_j_old - a_i_old), min(C, C + a_j_old - a_i_old)
            if lo == hi:
                continue
            eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
            if eta >= 0:
                continue
            a_j = np.clip(a_j_old - y[j] * (e_i - e_j) / eta, lo, hi)
            if abs(a_j - a_j_old) < 1e-7:
                continue
            a_i = a_i_old + y[i] * y[j] * (a_j_old - a_j)
            alphas[i], alphas[j] = a_i, a_j
            b1 = b - e_i - y[i] * (a_i - a_i_old) * K[i, i] - y[j] * (a_j - a_j_old) * K[i, j]
            b2 = b - e_j - y[i] * (a_i - a_i_old) * K[i, j] - y[j] * (a_j - a_j_old) * K[j, j]
            if 0 < a_i < C:
                b = b1
            elif 0 < a_j < C:
                b = b2
            else:
                b = (b1 + b2) / 2.0
            changed += 1
        passes = passes + 1 if changed == 0 else 0

    sv = alphas > 1e-12
    return SvmModel(X[sv], alphas[sv] * y[sv], b, kernel, C)


class OneVsRestSvm:
    """Multiclass wrapper: one binary machine per class, argmax decision,
    ties broken by the lowest class index."""

    def __init__(self, classes: list[str], machines: list[SvmModel]):
        self.classes = classes
        self.machines = machines

    @classmethod
    def train(cls, X, labels: Sequence[str], kernel: str = "triangular",
              C: float = 1.0, tol: float = 1e-3, max_passes: int = 10,
              seed: int = 0) -> "OneVsRestSvm":
        classes = sorted(set(labels))
        if len(classes) < 2:
            raise ValueError("need at least 2 classes")
        machines = []
        for cls_idx, name in enumerate(classes):
            y = np.where(np.asarray(labels) == name, 1, -1)
            machines.append(svm_train(X, y, kernel, C, tol, max_passes,
                                      seed=seed + cls_idx))
        return cls(classes, machines)

    def decision_matrix(self, X) -> np.ndarray:
        return np.stack([m.decision(X) for m in self.machines], axis=1)

    def predict(self, X) -> list[str]:
        scores = self.decision_matrix(X)
        return [self.classes[i] for i in np.argmax(scores, axis=1)]


# ---------------------------------------------------------------------------
# Document classifiers (factories for run_splits)


class SvmTextClassifier:
    """TF-IDF + one-vs-rest kernel SVM over raw document texts."""

    def __init__(self, vocab_size: int = 5000, kernel: str = "triangular",
                 C: float = 1.0, seed: int = 0):
        self.vocab_size = vocab_size
        self.kernel = kernel
        self.C = C
        self.seed = seed
        self.tfidf: Optional[TfidfModel] = None
        self.svm: Optional[OneVsRestSvm] = None

    def fit(self, texts: Sequence[str], labels: Sequence[str]) -> "SvmTextClassifier":
        self.tfidf = tfidf_fit(texts, self.vocab_size)
        X = tfidf_matrix(self.tfidf, texts)
        self.svm = OneVsRestSvm.train(X, labels, kernel=self.kernel, C=self.C,
                                      seed=self.seed)
        return self

    def predict(self, texts: Sequence[str]) -> list[str]:
        if self.tfidf is None or self.svm is None:
            raise ValueError("classifier used before fit")
        return self.svm.predict(tfidf_matrix(self.tfidf, texts))

    def describe(self) -> dict:
        return {"model": "svm", "kernel": self.kernel, "vocab_size": self.vocab_size,
                "C": self.C}


class MeanPoolMlpClassifier:
    """Mean-pooled provider vectors per document, classified by the MLP."""

    def __init__(self, provider: EmbeddingProvider,
                 hidden_dims: tuple[int, ...] = neural.DESK_HIDDEN,
                 epochs: int = 10, lr: float = 1e-3, batch_size: int = 32,
                 seed: int = 0):
        self.provider = provider
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed
        self.classes: Optional[list[str]] = None
        self.mspec: Optional[MlpSpec] = None
        self.params = None

    def _doc_vector(self, text: str) -> np.ndarray:
        words = text.split()
        if not words:
            return np.zeros(self.provider.dim)
        return self.provider.embed(words).mean(axis=0)

    def fit(self, texts: Sequence[str], labels: Sequence[str]) -> "MeanPoolMlpClassifier":
        self.classes = sorted(set(labels))
        self.mspec = MlpSpec(input_dim=self.provider.dim,
                             head_sizes={"category": len(self.classes)},
                             hidden_dims=self.hidden_dims)
        self.params = neural.init_params(self.mspec, seed=self.seed)
        vectors = np.stack([self._doc_vector(t) for t in texts])
        targets = [self.classes.index(l) for l in labels]
        rng = np.random.default_rng(self.seed)
        for _ in range(self.epochs):
            pending, count = {}, 0
            for i in rng.permutation(len(texts)):
                _, cache = forward(self.params, self.mspec, vectors[i], mode="train",
                                   dropout_seed=int(rng.integers(2**63)))
                grads = backward(self.params, self.mspec, cache, "category", targets[i])
                grads.pop("input")
                for key, g in grads.items():
                    if key in pending:
                        pending[key] += g
                    else:
                        pending[key] = g.copy()
                count += 1
                if count >= self.batch_size:
                    for g in pending.values():
                        g /= count
                    adam_step(self.params, pending, lr=self.lr)
                    pending, count = {}, 0
            if count:
                for g in pending.values():
                    g /= count
                adam_step(self.params, pending, lr=self.lr)
        return self

    def predict(self, texts: Sequence[str]) -> list[str]:
        if self.params is None:
            raise ValueError("classifier used before fit")
        out = []
        for text in texts:
            probs, _ = forward(self.params, self.mspec, self._doc_vector(text), mode="eval")
            out.append(self.classes[int(np.argmax(probs["category"]))])
        return out

    def describe(self) -> dict:
        return {"model": "mlp", "provider": self.provider.kind, "epochs": self.epochs}


# ---------------------------------------------------------------------------
# Repeated random splits


def _stratified_sample(docs: Sequence[LabeledDocument], train_size: int,
                       test_size: int, rng: np.random.Generator):
    """Exact-size train/test sample, category proportions preserved by
    largest-remainder allocation across strata."""
    n = len(docs)
    if train_size + test_size > n:
        raise ValueError(f"requested {train_size}+{test_size} items from {n} documents")
    strata: dict[str, list[int]] = {}
    for i, doc in enumerate(docs):
        strata.setdefault(doc.category, []).append(i)
    names = sorted(strata)
    sizes = np.array([len(strata[nm]) for nm in names], dtype=float)

    def allocate(total: int) -> list[int]:
        ideal = total * sizes / n
        base = ideal.astype(int)
        order = sorted(range(len(names)), key=lambda i: (-(ideal[i] - base[i]), i))
        for i in order[: total - int(base.sum())]:
            base[i] += 1
        return base.tolist()

    train_counts = allocate(train_size)
    test_counts = allocate(test_size)
    train_idx, test_idx = [], []
    for nm, n_train, n_test in zip(names, train_counts, test_counts):
        members = strata[nm]
        if n_train + n_test > len(members):
            raise ValueError(
                f"category {nm!r} has {len(members)} documents, "
                f"cannot supply {n_train}+{n_test}"
            )
        perm = rng.permutation(len(members))
        train_idx.extend(members[j] for j in perm[:n_train])
        test_idx.extend(members[j] for j in perm[n_train:n_train + n_test])
    return train_idx, test_idx


def run_splits(
    docs: Sequence[LabeledDocument],
    model_factory: Callable[[], object],
    n_splits: int = 10,
    train_size: Optional[int] = None,
    test_size: Optional[int] = None,
    seed: int = 0,
) -> dict:
    """Fit/score the factory's classifier on repeated stratified random
    splits; reports per-split weighted F1, their mean, sample std and a 95%
    t-interval."""
    if train_size is None:
        train_size = int(0.8 * len(docs))
    if test_size is None:
        test_size = len(docs) - train_size
    scores = []
    described = None
    for split in range(n_splits):
        rng = np.random.default_rng([seed, split])
        train_idx, test_idx = _stratified_sample(docs, train_size, test_size, rng)
        train_docs = [docs[i] for i in train_idx]
        test_docs = [docs[i] for i in test_idx]
        clf = model_factory()
        clf.fit([d.text for d in train_docs], [d.category for d in train_docs])
        pred = clf.predict([d.text for d in test_docs])
        scores.append(weighted_f1([d.category for d in test_docs], pred))
        if described is None and hasattr(clf, "describe"):
            described = clf.describe()
    mean = float(np.mean(scores))
    std = float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0
    half = t_confidence_interval(scores)[1] if len(scores) > 1 else 0.0
    return {
        "splits": [float(s) for s in scores],
        "mean_weighted_f1": mean,
        "std_weighted_f1": std,
        "ci95_half_width": float(half),
        "n_splits": n_splits,
        "train_size": train_size,
        "test_size": test_size,
        "classifier": described or {},
    }
