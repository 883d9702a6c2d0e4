"""L2-regularized logistic regression with a deterministic batch optimizer.

The objective is the mean negative log-likelihood plus ``l2/2 * ||w||^2``;
the intercept is not penalized. Training starts from zero and takes descent
steps (L-BFGS directions by default, plain gradient with ``method="gd"``)
accepted by a backtracking Armijo line search, so every recorded loss is no
larger than the previous one.
"""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import expit

from .errors import (
    ConvergenceWarning,
    DegenerateLabelsError,
    ModelFormatError,
    NumericalError,
    SchemaMismatchWarning,
    UnsupportedVersionError,
)
from .features import EncodedRow, FeatureVocabulary, to_csr

FORMAT_VERSION = 1


def _as_matrix(matrix, n_columns=None):
    if isinstance(matrix, (list, tuple)) and (not matrix or isinstance(matrix[0], EncodedRow)):
        if n_columns is None:
            raise ValueError("n_columns is required for a list of encoded rows")
        return to_csr(matrix, n_columns)
    if sparse.issparse(matrix):
        return sparse.csr_matrix(matrix, dtype=float)
    return np.asarray(matrix, dtype=float)


def _check_labels(labels):
    y = np.asarray(labels, dtype=float)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    return y


def loss_and_gradient(weights, intercept, matrix, labels, l2):
    """Mean logistic loss with L2 penalty, and its gradient.

    Returns ``(loss, grad_w, grad_b)``. ``log(1 + exp(z))`` is evaluated with
    ``logaddexp`` so large logits do not overflow.
    """
    X = _as_matrix(matrix, len(weights))
    y = _check_labels(labels)
    n = X.shape[0]
    if n == 0:
        raise ValueError("loss is undefined on an empty matrix")
    w = np.asarray(weights, dtype=float)
    z = X @ w + intercept
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(w @ w)
    r = (expit(z) - y) / n
    grad_w = X.T @ r + l2 * w
    return loss, np.asarray(grad_w, dtype=float).ravel(), float(np.sum(r))


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings; ``l2=None`` means ``1/n`` for ``n`` training rows."""

    l2: float | None = None
    max_iterations: int = 500
    tolerance: float = 1e-8
    initial_step: float = 1.0
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    method: str = "lbfgs"
    memory: int = 10

    def __post_init__(self):
        if self.l2 is not None and not self.l2 >= 0:
            raise ValueError("l2 must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must be in (0, 1)")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be > 0")
        if self.method not in ("lbfgs", "gd"):
            raise ValueError("method must be 'lbfgs' or 'gd'")


@dataclass
class TrainReport:
    losses: list[float]
    converged: bool
    wall_time: float = 0.0

    @property
    def iterations(self):
        return len(self.losses) - 1

    def to_dict(self, timing=False):
        d = {"converged": self.converged, "iterations": self.iterations, "losses": self.losses}
        if timing:
            d["wall_time"] = self.wall_time
        return d


@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray
    intercept: float
    vocab: FeatureVocabulary
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercept", float(self.intercept))
        if w.shape != (self.vocab.total_columns,):
            raise ValueError(
                f"weights length {w.shape} does not match {self.vocab.total_columns} columns"
            )
        if not (np.all(np.isfinite(w)) and math.isfinite(self.intercept)):
            raise ValueError("model weights must be finite")

    def zeroed(self, columns) -> "LogisticModel":
        """Copy with the given weight columns set to zero."""
        w = self.weights.copy()
        w[list(columns)] = 0.0
        return LogisticModel(w, self.intercept, self.vocab, dict(self.train_meta))

    def __eq__(self, other):
        if not isinstance(other, LogisticModel):
            return NotImplemented
        return (
            self.weights.tobytes() == other.weights.tobytes()
            and np.float64(self.intercept).tobytes() == np.float64(other.intercept).tobytes()
            and self.vocab == other.vocab
            and self.train_meta == other.train_meta
        )

    __hash__ = None


def _default_vocab(n_columns):
    return FeatureVocabulary.from_terms({}, [f"x{i:05d}" for i in range(n_columns)])


def _line_search(f, theta, loss, grad, direction, step, cfg):
    slope = float(grad @ direction)
    while step > 1e-20:
        candidate = theta + step * direction
        new_loss = f(candidate)[0]
        if math.isfinite(new_loss) and new_loss <= loss + cfg.sufficient_decrease * step * slope:
            return candidate, step
        step *= cfg.shrink
    return None, step


def _lbfgs_direction(grad, pairs, diag):
    """Two-loop recursion with a diagonal initial inverse Hessian."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= diag * (float(s @ y) / float(y @ (diag * y)))
    else:
        q *= diag
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def _curvature_bound(X, l2):
    """Inverse of an upper bound on each diagonal Hessian entry.

    The logistic curvature is at most 1/4 per sample, so this Jacobi scaling
    never overshoots and copes with a penalty that dwarfs the data term.
    """
    n = X.shape[0]
    if sparse.issparse(X):
        sq = np.asarray(X.multiply(X).sum(axis=0)).ravel() / n
    else:
        sq = np.mean(X * X, axis=0) if n else np.zeros(X.shape[1])
    bound = np.append(0.25 * sq + l2, 0.25)
    return 1.0 / np.maximum(bound, 1e-12)


def train(
    matrix,
    labels,
    config: TrainConfig = TrainConfig(),
    *,
    vocab: FeatureVocabulary | None = None,
    source_quarters=(),
    target_quarter=None,
    initial=None,
):
    """Fit a logistic model; returns ``(LogisticModel, TrainReport)``.

    ``matrix`` is a dense array, a sparse matrix, or a list of EncodedRow.
    Without ``vocab`` the columns are named ``x00000, x00001, ...``.
    ``initial`` optionally gives starting weights with the intercept last;
    the default is all zeros.
    """
    started = time.perf_counter()
    n_columns = vocab.total_columns if vocab is not None else None
    X = _as_matrix(matrix, n_columns)
    y = _check_labels(labels)
    if X.shape[0] != y.shape[0]:
        raise ValueError("matrix and labels have different lengths")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise DegenerateLabelsError(f"need both classes to train, got {n_pos} positive of {len(y)}")
    if vocab is None:
        vocab = _default_vocab(X.shape[1])
    d = X.shape[1]
    l2 = config.l2 if config.l2 is not None else 1.0 / X.shape[0]

    def f(theta):
        loss, gw, gb = loss_and_gradient(theta[:d], theta[d], X, y, l2)
        return loss, np.append(gw, gb)

    theta = np.zeros(d + 1)
    if initial is not None:
        theta = np.array(initial, dtype=float).ravel()
        if theta.shape != (d + 1,):
            raise ValueError(f"initial must have {d + 1} entries (weights then intercept)")
    loss, grad = f(theta)
    losses = [loss]
    pairs = []
    diag = _curvature_bound(X, l2)
    converged = False
    step = config.initial_step
    for it in range(1, config.max_iterations + 1):
        if config.method == "gd":
            direction = -grad
            trial = step if it == 1 else min(step * 2.0, 1e6)
        else:
            direction = _lbfgs_direction(grad, pairs, diag)
            if float(grad @ direction) >= 0:
                pairs.clear()
                direction = -diag * grad
            trial = config.initial_step if not pairs else 1.0
        new_theta, step = _line_search(f, theta, loss, grad, direction, trial, config)
        if new_theta is None:
            # no representable decrease along a descent direction
            converged = float(np.linalg.norm(grad)) < 1e-6
            break
        new_loss, new_grad = f(new_theta)
        if not math.isfinite(new_loss):
            raise NumericalError(it)
        s, yv = new_theta - theta, new_grad - grad
        sy = float(s @ yv)
        if sy > 1e-12:
            pairs.append((s, yv, 1.0 / sy))
            if len(pairs) > config.memory:
                pairs.pop(0)
        decrease = loss - new_loss
        theta, loss, grad = new_theta, new_loss, new_grad
        losses.append(loss)
        if decrease <= config.tolerance * max(abs(losses[-2]), 1e-300):
            converged = True
            break
    if not converged:
        warnings.warn(
            f"training stopped after {len(losses) - 1} iterations without converging",
            ConvergenceWarning,
            stacklevel=2,
        )
    meta = {
        "source_quarters": sorted(str(q) for q in source_quarters),
        "target_quarter": None if target_quarter is None else str(target_quarter),
        "l2": l2,
        "iterations": len(losses) - 1,
        "final_loss": loss,
        "converged": converged,
    }
    model = LogisticModel(theta[:d], theta[d], vocab, meta)
    return model, TrainReport(losses, converged, time.perf_counter() - started)


def _logits(model, rows):
    X = _as_matrix(rows, model.vocab.total_columns)
    return X @ model.weights + model.intercept


def predict_propensity(model: LogisticModel, row: EncodedRow) -> float:
    """Win probability for one encoded row."""
    z = model.intercept
    for i, v in zip(row.indices, row.values):
        if not 0 <= i < model.vocab.total_columns:
            raise IndexError(f"column id {i} out of range for {model.vocab.total_columns} columns")
        z += model.weights[i] * v
    return float(expit(z))


def predict_batch(model: LogisticModel, rows) -> np.ndarray:
    for row in rows:
        if row.indices and not (0 <= min(row.indices) and max(row.indices) < model.vocab.total_columns):
            raise IndexError(f"column id out of range for {model.vocab.total_columns} columns")
    if not rows:
        return np.zeros(0)
    return expit(_logits(model, list(rows)))


# -- persistence ---------------------------------------------------------------

def model_to_dict(model: LogisticModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "fingerprint": model.vocab.fingerprint,
        "vocabulary": model.vocab.to_dict(),
        "weights": [float(w) for w in model.weights],
        "intercept": model.intercept,
        "train_meta": model.train_meta,
    }


def dumps_model(model: LogisticModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True, allow_nan=False) + "\n"


def save_model(model: LogisticModel, destination):
    text = dumps_model(model)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def loads_model(text: str, expected_fingerprint: str | None = None) -> LogisticModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError("model file has no format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"unsupported model format_version {doc['format_version']!r}; expected {FORMAT_VERSION}"
        )
    try:
        vocab = FeatureVocabulary.from_dict(doc["vocabulary"])
        stored = doc["fingerprint"]
        model = LogisticModel(
            np.asarray(doc["weights"], dtype=float),
            doc["intercept"],
            vocab,
            doc["train_meta"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    if stored != vocab.fingerprint or doc["vocabulary"].get("fingerprint") != stored:
        raise ModelFormatError("vocabulary fingerprint does not match its contents")
    if expected_fingerprint is not None and expected_fingerprint != stored:
        warnings.warn(
            f"model vocabulary fingerprint {stored[:12]} differs from expected "
            f"{expected_fingerprint[:12]}",
            SchemaMismatchWarning,
            stacklevel=2,
        )
    return model


def load_model(source, expected_fingerprint: str | None = None) -> LogisticModel:
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    return loads_model(text, expected_fingerprint)
