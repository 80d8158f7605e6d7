"""Object/background classifier.

Bayesian-bootstrap sample synthesis from count histograms, an explicit
additive chi-squared feature map, and a linear hinge-loss SVM on top of it
trained and updated by subgradient steps.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .codebook import CountHistogram
from .errors import DataError, TrainingError

SVM_MAGIC = b"ETLDSVM1"


def bayesian_bootstrap(h: CountHistogram, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Re-weight a count histogram ``n_samples`` times.

    Each bin of each sample is ``floor(P * count)`` with an independent
    ``P ~ U[0, 1)``. Returns an ``(n_samples, K)`` integer array.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    P = rng.random((n_samples, h.K))
    return np.floor(P * h.counts[None, :]).astype(np.int64)


@dataclass(frozen=True)
class FeatureMapConfig:
    order: int = 1
    period: float = 0.5

    def __post_init__(self):
        if self.order < 1 or not self.period > 0:
            raise ValueError("feature map needs order >= 1 and period > 0")

    @property
    def block(self) -> int:
        return 2 * self.order + 1

    def mapped_dim(self, K: int) -> int:
        return K * self.block

    def spectrum(self) -> np.ndarray:
        """``L * kappa(j L)`` for j = 0..order, kappa(w) = sech(pi w)."""
        j = np.arange(self.order + 1)
        return self.period / np.cosh(math.pi * j * self.period)


def chi2_kernel(x, y) -> float:
    """Exact additive chi-squared kernel sum_i 2 x_i y_i / (x_i + y_i)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s = x + y
    nz = s > 0
    return float(np.sum(2.0 * x[nz] * y[nz] / s[nz]))


def chi2_map(rep, cfg: FeatureMapConfig = FeatureMapConfig()) -> np.ndarray:
    """Map non-negative vector(s) to ``K * (2n + 1)`` features per row.

    Bin k occupies columns ``k*(2n+1) : (k+1)*(2n+1)`` laid out as
    ``[c0, cos1, sin1, ..., cos_n, sin_n]``; zero bins map to zeros.
    """
    X = np.asarray(rep, dtype=np.float64)
    if np.any(X < 0):
        raise DataError("chi2 feature map needs non-negative input")
    single = X.ndim == 1
    X = np.atleast_2d(X)
    n, K = X.shape
    spec = cfg.spectrum()
    out = np.zeros((n, K, cfg.block), dtype=np.float64)
    pos = X > 0
    xv = X[pos]
    lx = np.log(xv)
    out[pos, 0] = np.sqrt(xv * spec[0])
    for j in range(1, cfg.order + 1):
        a = np.sqrt(2.0 * xv * spec[j])
        out[pos, 2 * j - 1] = a * np.cos(j * cfg.period * lx)
        out[pos, 2 * j] = a * np.sin(j * cfg.period * lx)
    out = out.reshape(n, K * cfg.block)
    return out[0] if single else out


def _normalize_rows(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    tot = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, tot, out=np.zeros_like(counts), where=tot > 0)


@dataclass(eq=False)
class SvmModel:
    weights: np.ndarray
    bias: float
    lam: float = 1e-4
    step: int = 1  # next subgradient step index; rate is 1 / (lam * step)
    cfg: FeatureMapConfig = FeatureMapConfig()
    seed: int = 0

    @property
    def dim(self) -> int:
        return len(self.weights)

    @property
    def K(self) -> int:
        return self.dim // self.cfg.block

    def decision(self, mapped) -> np.ndarray:
        return np.asarray(mapped) @ self.weights + self.bias

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(SVM_MAGIC)
            fh.write(struct.pack("<i", self.dim))
            fh.write(np.asarray(self.weights, dtype="<f8").tobytes())
            fh.write(struct.pack("<d", self.bias))

    @classmethod
    def load(cls, path, cfg: FeatureMapConfig = FeatureMapConfig(), lam: float = 1e-4) -> "SvmModel":
        with open(path, "rb") as fh:
            if fh.read(len(SVM_MAGIC)) != SVM_MAGIC:
                raise DataError(f"{path}: not an SVM model file")
            (dim,) = struct.unpack("<i", fh.read(4))
            raw = fh.read()
        if len(raw) != 8 * (dim + 1):
            raise DataError(f"{path}: truncated model")
        vals = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        return cls(weights=vals[:dim].copy(), bias=float(vals[dim]), lam=lam, cfg=cfg)


@njit(cache=True)
def _pegasos(X, y, cw, order, w, b, lam, step):
    """Subgradient epochs over rows of X in the given order.

    The bias is an extra weight on a constant feature of 1. Returns the bias
    and the next step index.
    """
    n, dim = X.shape
    for ii in range(order.shape[0]):
        i = order[ii]
        eta = 1.0 / (lam * step)
        margin = b
        for j in range(dim):
            margin += w[j] * X[i, j]
        margin *= y[i]
        shrink = 1.0 - eta * lam
        if margin < 1.0:
            g = eta * y[i] * cw[i]
            for j in range(dim):
                w[j] = shrink * w[j] + g * X[i, j]
            b = shrink * b + g
        else:
            for j in range(dim):
                w[j] *= shrink
            b *= shrink
        step += 1
    return b, step


def train_svm(pos, neg, cfg: FeatureMapConfig = FeatureMapConfig(), seed: int = 0,
              epochs: int = 50, lam: float = 1e-4) -> SvmModel:
    """Fit the linear SVM on mapped, L1-normalized count samples.

    ``pos``/``neg`` are ``(N, K)`` count arrays. Losses are weighted per class
    inversely to the class sizes. Sample order is reshuffled every epoch from
    a generator seeded with ``seed``.
    """
    pos = np.atleast_2d(np.asarray(pos))
    neg = np.atleast_2d(np.asarray(neg))
    if pos.size == 0 or neg.size == 0 or len(pos) == 0 or len(neg) == 0:
        raise TrainingError("SVM training needs at least one sample per class")
    if pos.shape[1] != neg.shape[1]:
        raise TrainingError("positive and negative samples differ in dimension")
    X = chi2_map(_normalize_rows(np.vstack([pos, neg])), cfg)
    n_pos, n_neg = len(pos), len(neg)
    n = n_pos + n_neg
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    cw = np.concatenate([np.full(n_pos, n / (2.0 * n_pos)), np.full(n_neg, n / (2.0 * n_neg))])
    rng = np.random.default_rng(seed)
    w = np.zeros(X.shape[1], dtype=np.float64)
    b, step = 0.0, 1
    for _ in range(epochs):
        order = rng.permutation(n)
        b, step = _pegasos(X, y, cw, order, w, b, lam, step)
    return SvmModel(weights=w, bias=float(b), lam=lam, step=int(step), cfg=cfg, seed=seed)


def score_rep(model: SvmModel, rep) -> float:
    """Decision value of a normalized representation (sparse evaluation)."""
    rep = np.asarray(rep, dtype=np.float64)
    nz = np.flatnonzero(rep)
    if len(nz) == 0:
        return float(model.bias)
    blk = model.cfg.block
    feats = chi2_map(rep[nz], model.cfg).reshape(len(nz), blk)
    W = model.weights.reshape(-1, blk)[nz]
    return float(np.einsum("kj,kj->", feats, W) + model.bias)


def score_counts(model: SvmModel, counts) -> float:
    counts = np.asarray(counts)
    tot = counts.sum()
    if tot == 0:
        return float(model.bias)
    return score_rep(model, counts / float(tot))


def score(model: SvmModel, h: CountHistogram) -> float:
    """D(h) = <w, psi(h / n)> + b; positive means object."""
    return score_counts(model, h.counts)


def score_many(model: SvmModel, counts) -> np.ndarray:
    """Scores for each row of an ``(N, K)`` count array, in row order."""
    return np.array([score_counts(model, row) for row in np.atleast_2d(counts)])


def online_update(model: SvmModel, h: CountHistogram, label: int, steps: int = 5) -> SvmModel:
    """Subgradient steps on a single example at the current schedule rate.

    Steps where the example already meets the margin are skipped entirely, so
    a satisfied example leaves the model untouched.
    """
    if label not in (1, -1):
        raise ValueError("label must be +1 or -1")
    counts = np.asarray(h.counts)
    tot = counts.sum()
    rep = counts / float(tot) if tot else np.zeros(len(counts))
    x = chi2_map(rep, model.cfg)
    for _ in range(steps):
        margin = label * (float(x @ model.weights) + model.bias)
        if margin >= 1.0:
            break
        eta = 1.0 / (model.lam * model.step)
        shrink = 1.0 - eta * model.lam
        model.weights *= shrink
        model.weights += eta * label * x
        model.bias = shrink * model.bias + eta * label
        model.step += 1
    return model
