"""Text-based location prior: l1-regularised multinomial logistic regression.

Features are unigram term frequencies, l2-normalised, after stripping
@-mentions and URLs.  Training minimises mean cross-entropy plus
``l1_strength * sum|W|`` (bias unpenalised) with proximal gradient descent
(ISTA) and a backtracking line search, starting from zero.  The
soft-threshold step produces exact zeros, and with the sufficient-decrease
test every accepted step lowers the regularised objective.
"""

from __future__ import annotations

import io
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp, softmax

from .dataset import atomic_write_text

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"(?<![A-Za-z0-9_])@[A-Za-z0-9_]+")
_TOKEN_RE = re.compile(r"\w+")


class TextModelError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    index: dict[str, int]
    df: dict[str, int]

    def __len__(self):
        return len(self.index)

    @classmethod
    def build(cls, texts: Sequence[str], min_df: int = 1) -> "Vocabulary":
        df = Counter()
        for text in texts:
            df.update(set(tokenize(text)))
        terms = sorted(t for t, c in df.items() if c >= min_df)
        return cls({t: i for i, t in enumerate(terms)}, {t: df[t] for t in terms})

    def to_json(self) -> dict:
        terms = sorted(self.index, key=self.index.get)
        return {"terms": terms, "df": [self.df.get(t, 0) for t in terms]}

    @classmethod
    def from_json(cls, obj) -> "Vocabulary":
        return cls({t: i for i, t in enumerate(obj["terms"])}, dict(zip(obj["terms"], obj["df"])))


def featurize(text: str, vocab: Vocabulary) -> sp.csr_matrix:
    """Return a 1 x |V| l2-normalised term-frequency row."""
    return featurize_many([text], vocab)


def featurize_many(texts: Sequence[str], vocab: Vocabulary) -> sp.csr_matrix:
    indptr, indices, data = [0], [], []
    for text in texts:
        counts = Counter(vocab.index[t] for t in tokenize(text) if t in vocab.index)
        cols = sorted(counts)
        vals = np.array([counts[c] for c in cols], dtype=float)
        norm = np.sqrt(vals @ vals)
        if norm > 0:
            vals /= norm
        indices.extend(cols)
        data.extend(vals.tolist())
        indptr.append(len(indices))
    return sp.csr_matrix((data, indices, indptr), shape=(len(texts), len(vocab)))


def smooth_loss_and_grad(coef: np.ndarray, bias: np.ndarray, X, y: np.ndarray):
    """Mean multinomial cross-entropy and its gradient w.r.t. (coef, bias).

    ``coef`` is (m, V), ``X`` is (N, V), ``y`` holds class indices.
    """
    n = X.shape[0]
    scores = X @ coef.T + bias
    lse = logsumexp(scores, axis=1)
    loss = float(np.mean(lse - scores[np.arange(n), y]))
    resid = np.exp(scores - lse[:, None])
    resid[np.arange(n), y] -= 1.0
    resid /= n
    grad_coef = np.asarray((X.T @ resid).T)
    return loss, grad_coef, resid.sum(axis=0)


def _soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


@dataclass
class TextModel:
    vocab: Vocabulary
    coef: np.ndarray  # (m, V)
    bias: np.ndarray  # (m,)
    l1_strength: float
    loss_trace: list[float] = field(default_factory=list)

    @property
    def n_labels(self) -> int:
        return len(self.bias)

    def zero_fraction(self) -> float:
        return float(np.mean(self.coef == 0.0)) if self.coef.size else 1.0

    def predict_proba(self, X) -> np.ndarray:
        return softmax(np.asarray(X @ self.coef.T) + self.bias, axis=1)

    def save(self, triplet_path, meta_path) -> None:
        out = io.StringIO()
        rows, cols = np.nonzero(self.coef)
        for r, c in zip(rows, cols):
            out.write(f"{r}\t{c}\t{float(self.coef[r, c])!r}\n")
        atomic_write_text(triplet_path, out.getvalue())
        meta = {
            "n_labels": self.n_labels,
            "l1_strength": self.l1_strength,
            "bias": self.bias.tolist(),
            "loss_trace": self.loss_trace,
            "vocabulary": self.vocab.to_json(),
        }
        atomic_write_text(meta_path, json.dumps(meta) + "\n")

    @classmethod
    def load(cls, triplet_path, meta_path) -> "TextModel":
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        vocab = Vocabulary.from_json(meta["vocabulary"])
        coef = np.zeros((meta["n_labels"], len(vocab)))
        with open(triplet_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    r, c, w = line.split("\t")
                    coef[int(r), int(c)] = float(w)
        return cls(vocab, coef, np.asarray(meta["bias"], dtype=float),
                   float(meta["l1_strength"]), list(meta["loss_trace"]))


def train_text_model(
    texts: Sequence[str],
    cells: Sequence[int],
    n_labels: int | None = None,
    l1_strength: float = 1e-4,
    vocab: Vocabulary | None = None,
    max_iter: int = 300,
    tol: float = 1e-7,
    min_df: int = 1,
) -> TextModel:
    y = np.asarray(cells, dtype=np.int64)
    if len(texts) != len(y):
        raise TextModelError("texts and cells differ in length")
    if len(np.unique(y)) < 2:
        raise TextModelError(
            "training users fall into a single cell; configure more cells "
            "(a smaller bucket_size) so the classifier has at least two classes")
    if l1_strength < 0:
        raise TextModelError("l1_strength must be >= 0")
    m = int(n_labels if n_labels is not None else y.max() + 1)
    vocab = vocab or Vocabulary.build(texts, min_df=min_df)
    X = featurize_many(texts, vocab)

    coef = np.zeros((m, len(vocab)))
    bias = np.zeros(m)
    loss, g_coef, g_bias = smooth_loss_and_grad(coef, bias, X, y)
    objective = loss
    trace = [objective]
    step = 1.0
    for _ in range(max_iter):
        while True:
            new_coef = _soft_threshold(coef - step * g_coef, step * l1_strength)
            new_bias = bias - step * g_bias
            d_coef, d_bias = new_coef - coef, new_bias - bias
            new_loss, new_g_coef, new_g_bias = smooth_loss_and_grad(new_coef, new_bias, X, y)
            model = (loss + np.sum(g_coef * d_coef) + g_bias @ d_bias
                     + (np.sum(d_coef ** 2) + d_bias @ d_bias) / (2 * step))
            if new_loss <= model + 1e-12 or step < 1e-12:
                break
            step *= 0.5
        new_objective = new_loss + l1_strength * np.abs(new_coef).sum()
        if new_objective > objective:
            # numerical noise at convergence; keep the previous iterate
            break
        coef, bias, loss, g_coef, g_bias = new_coef, new_bias, new_loss, new_g_coef, new_g_bias
        done = objective - new_objective <= tol * max(1.0, abs(objective))
        objective = float(new_objective)
        trace.append(objective)
        if done:
            break
        step *= 1.25
    return TextModel(vocab, coef, bias, float(l1_strength), trace)


def predict_prior(model: TextModel, x) -> np.ndarray:
    """Softmax distribution over cells for one featurised row."""
    if sp.issparse(x):
        x = x.toarray()
    x = np.asarray(x, dtype=float).reshape(-1)
    scores = model.coef @ x + model.bias
    return softmax(scores)
