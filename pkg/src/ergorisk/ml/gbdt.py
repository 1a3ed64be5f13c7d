"""Gradient-boosted decision trees for multiclass risk labels.

Softmax cross-entropy boosting: each round fits one regression tree per class
to the residual ``y - p`` and adds ``learning_rate`` times its output to that
class's logit. Trees split with ``x < threshold`` going left and grow
best-first until the leaf budget, the depth limit, or zero gain stops them.
"""

from __future__ import annotations

import heapq
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ModelError

SCHEMA = "ergorisk-gbdt/1"
PRIOR_FLOOR = 1e-12
GAIN_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat array tree; ``feature[i] == -1`` marks a leaf holding ``value[i]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def depth(self) -> int:
        def d(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(d(self.left[i]), d(self.right[i]))
        return d(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] < self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active[idx] = self.feature[node[idx]] >= 0
        return self.value[node]

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(np.array(d["feature"], dtype=int), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=int), np.array(d["right"], dtype=int),
                   np.array(d["value"], dtype=float))

    @classmethod
    def constant(cls, value: float) -> "DecisionTree":
        return cls(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                   np.array([float(value)]))


def presort(X: np.ndarray) -> np.ndarray:
    """Per-feature row orders, shape (n_features, n_rows)."""
    return np.argsort(X, axis=0, kind="stable").T.copy()


def best_split(X: np.ndarray, r: np.ndarray, order: np.ndarray | None = None):
    """Best (gain, feature, threshold) by squared-error reduction, or None.

    ``order`` holds the rows of this node sorted along each feature.
    """
    if order is None:
        order = presort(X)
    n = order.shape[1]
    if n < 2:
        return None
    x = np.take_along_axis(X.T, order, axis=1)
    cs = np.cumsum(r[order], axis=1)[:, :-1]
    total = cs[0, -1] + r[order[0, -1]]
    nl = np.arange(1, n)
    gain = cs ** 2 / nl + (total - cs) ** 2 / (n - nl) - total * total / n
    gain = np.where(x[:, 1:] > x[:, :-1], gain, -np.inf)
    flat = int(np.argmax(gain))
    j, i = divmod(flat, n - 1)
    if not np.isfinite(gain[j, i]):
        return None
    return float(gain[j, i]), int(j), 0.5 * (x[j, i] + x[j, i + 1])


def fit_tree(X: np.ndarray, r: np.ndarray, max_depth: int = 6, max_leaves: int = 27,
             order: np.ndarray | None = None) -> DecisionTree:
    """Greedy best-first regression tree; leaves hold the mean residual."""
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    if X.ndim != 2 or r.ndim != 1 or X.shape[0] != r.size:
        raise ModelError("fit_tree needs a rectangular feature matrix and one residual per row")
    if r.size == 0:
        raise ModelError("fit_tree on empty input")
    if order is None:
        order = presort(X)
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [float(r.mean())]
    members = {0: order}
    depth = {0: 0}
    heap = []

    def push(node):
        if depth[node] >= max_depth:
            return
        o = members[node]
        split = best_split(X, r, o)
        rows = o[0]
        if split is not None and split[0] > GAIN_EPS * max(1.0, float(np.sum(r[rows] ** 2))):
            heapq.heappush(heap, (-split[0], node, split[1], split[2]))

    push(0)
    n_leaves = 1
    goes_left = np.zeros(r.size, dtype=bool)
    while heap and n_leaves < max_leaves:
        _, node, j, beta = heapq.heappop(heap)
        o = members.pop(node)
        rows = o[0]
        goes_left[rows] = X[rows, j] < beta
        in_left = goes_left[o]
        children = []
        for sub in (o[in_left].reshape(o.shape[0], -1), o[~in_left].reshape(o.shape[0], -1)):
            c = len(feature)
            feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
            value.append(float(r[sub[0]].mean()))
            members[c] = sub
            depth[c] = depth[node] + 1
            children.append(c)
        feature[node], threshold[node] = j, float(beta)
        left[node], right[node] = children
        n_leaves += 1
        for c in children:
            push(c)
    return DecisionTree(np.array(feature), np.array(threshold), np.array(left),
                        np.array(right), np.array(value))


@dataclass(frozen=True)
class GbdtConfig:
    n_estimators: int = 29
    max_depth: int = 6
    max_leaves: int = 27
    learning_rate: float = 0.18
    n_classes: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.n_estimators < 0:
            raise ModelError("learning_rate must be positive and n_estimators non-negative")
        if self.max_depth < 1 or self.max_leaves < 2:
            raise ModelError("trees need max_depth >= 1 and max_leaves >= 2")


@dataclass(frozen=True, eq=False)
class GbdtModel:
    init: np.ndarray
    rounds: list[list[DecisionTree]]
    learning_rate: float
    n_features: int
    feature_names: tuple[str, ...] = ()
    loss_trace: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return int(self.init.size)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "learning_rate": self.learning_rate,
                "n_features": self.n_features, "feature_names": list(self.feature_names),
                "init": self.init.tolist(), "loss_trace": list(self.loss_trace),
                "meta": self.meta,
                "rounds": [[t.to_dict() for t in rnd] for rnd in self.rounds]}

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("schema") != SCHEMA:
            raise ModelError(f"not a {SCHEMA} model file")
        return cls(np.array(d["init"], dtype=float),
                   [[DecisionTree.from_dict(t) for t in rnd] for rnd in d["rounds"]],
                   float(d["learning_rate"]), int(d["n_features"]),
                   tuple(d.get("feature_names", ())), list(d.get("loss_trace", [])),
                   d.get("meta", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GbdtModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-np.mean(logp[np.arange(y.size), y]))


def _check_X(X, n_features=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ModelError("features must be a 2-D matrix")
    if n_features is not None and X.shape[1] != n_features:
        raise ModelError(f"feature width {X.shape[1]} does not match the model ({n_features})")
    return X


def train_gbdt(X, y, cfg: GbdtConfig | None = None, feature_names=()) -> GbdtModel:
    """Fit the boosted ensemble; labels are integers in ``[0, n_classes)``."""
    cfg = cfg or GbdtConfig()
    X = _check_X(X)
    y = np.asarray(y, dtype=int)
    if y.size == 0 or y.size != X.shape[0]:
        raise ModelError("need one label per feature row and at least one row")
    K = cfg.n_classes
    if y.min() < 0 or y.max() >= K:
        raise ModelError(f"labels must lie in [0, {K})")
    prior = np.bincount(y, minlength=K) / y.size
    init = np.log(np.maximum(prior, PRIOR_FLOOR))
    onehot = np.eye(K)[y]
    logits = np.tile(init, (y.size, 1))
    trace = [cross_entropy(logits, y)]
    rounds: list[list[DecisionTree]] = []
    if np.count_nonzero(prior) == 1:
        warnings.warn("training labels contain a single class; returning a constant model",
                      stacklevel=2)
        return GbdtModel(init, rounds, cfg.learning_rate, X.shape[1], tuple(feature_names),
                         trace)
    order = presort(X)
    for _ in range(cfg.n_estimators):
        resid = onehot - softmax(logits)
        trees = [fit_tree(X, resid[:, k], cfg.max_depth, cfg.max_leaves, order)
                 for k in range(K)]
        logits = _step(logits, trees, X, cfg.learning_rate)
        rounds.append(trees)
        trace.append(cross_entropy(logits, y))
    return GbdtModel(init, rounds, cfg.learning_rate, X.shape[1], tuple(feature_names), trace)


def _step(logits: np.ndarray, trees: list[DecisionTree], X: np.ndarray, eta: float) -> np.ndarray:
    return logits + eta * np.column_stack([t.predict(X) for t in trees])


def staged_logits(model: GbdtModel, X):
    """Yield the logits after 0, 1, ..., len(rounds) rounds."""
    X = _check_X(X, model.n_features)
    logits = np.tile(model.init, (X.shape[0], 1))
    yield logits
    for trees in model.rounds:
        logits = _step(logits, trees, X, model.learning_rate)
        yield logits


def decision_function(model: GbdtModel, X) -> np.ndarray:
    logits = None
    for logits in staged_logits(model, X):
        pass
    return logits


def argmax_high(scores: np.ndarray) -> np.ndarray:
    """Row argmax with ties resolved toward the highest class index."""
    K = scores.shape[1]
    return K - 1 - np.argmax(scores[:, ::-1], axis=1)


def predict_gbdt(model: GbdtModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Predicted class per row plus the softmax class probabilities."""
    logits = decision_function(model, X)
    return argmax_high(logits), softmax(logits)
