"""Multiclass gradient-boosted decision trees with exact greedy splits.

One regression tree per class per round is fit to the softmax
cross-entropy gradient ``p - y`` and hessian ``p (1 - p)``. Splits maximise

    gain = 1/2 [G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)] - gamma

over every midpoint between distinct consecutive feature values, and
leaves store ``-eta * G / (H + lam)`` so that inference is a plain sum.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1
LEAF = -1


class DegenerateLabels(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


class NonFiniteFeature(ValueError):
    pass


@dataclass(frozen=True)
class GbtHyperparams:
    num_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    l2_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 42

    def __post_init__(self):
        if self.num_rounds < 0:
            raise ValueError("num_rounds must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.l2_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ValueError("l2_lambda, gamma and min_child_weight must be >= 0")


@dataclass
class Tree:
    """Array-encoded binary tree; node ids are indices, node 0 is the root.

    Internal node ``i`` sends ``x`` left iff ``x[feature[i]] < threshold[i]``.
    Leaves have ``feature[i] == -1``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by every row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        for _ in range(self.depth()):
            f = self.feature[node]
            internal = f != LEAF
            go_left = X[rows, np.where(internal, f, 0)] < self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.weight[self.apply(X)]


@dataclass
class GbtModel:
    label_map: list[str]
    trees: list[Tree]  # round-major: trees[r * K + k]
    hyperparams: GbtHyperparams
    base_score: float = 0.0
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_classes(self) -> int:
        return len(self.label_map)

    @property
    def n_rounds(self) -> int:
        return len(self.trees) // self.n_classes

    def tree(self, round_: int, class_index: int) -> Tree:
        return self.trees[round_ * self.n_classes + class_index]

    def decision_function(self, X) -> np.ndarray:
        """Raw per-class scores, shape ``(n, K)``."""
        X = _as_matrix(X)
        K = self.n_classes
        scores = np.full((len(X), K), self.base_score, dtype=np.float64)
        if not self.trees or not len(X):
            return scores
        feature, threshold, left, right, weight, roots, depth = self._pack()
        rows = np.arange(len(X))
        for t, root in enumerate(roots):
            node = np.full(len(X), root, dtype=np.int64)
            for _ in range(depth[t]):
                # leaves point at themselves, so extra iterations are no-ops
                go_left = X[rows, feature[node]] < threshold[node]
                node = np.where(go_left, left[node], right[node])
            scores[:, t % K] += weight[node]
        return scores

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict_index(self, X) -> np.ndarray:
        # np.argmax returns the first maximum: ties go to the lowest class index
        return np.argmax(self.decision_function(X), axis=1)

    def predict(self, X) -> list[str]:
        return [self.label_map[i] for i in self.predict_index(X)]

    def _pack(self):
        """Concatenate all trees into flat arrays with self-looping leaves."""
        if self._packed is None:
            offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])
            feature, threshold, left, right = [], [], [], []
            for off, t in zip(offsets, self.trees):
                leaf = t.feature == LEAF
                ids = np.arange(t.n_nodes) + off
                feature.append(np.where(leaf, 0, t.feature))
                threshold.append(np.where(leaf, np.inf, t.threshold))
                left.append(np.where(leaf, ids, t.left + off))
                right.append(np.where(leaf, ids, t.right + off))
            self._packed = (
                np.concatenate(feature),
                np.concatenate(threshold),
                np.concatenate(left),
                np.concatenate(right),
                np.concatenate([t.weight for t in self.trees]),
                offsets[:-1],
                [t.depth() for t in self.trees],
            )
        return self._packed

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        trees = []
        for i, t in enumerate(self.trees):
            nodes = []
            for n in range(t.n_nodes):
                if t.feature[n] == LEAF:
                    nodes.append({"id": n, "weight": float(t.weight[n])})
                else:
                    nodes.append({
                        "id": n,
                        "feature": int(t.feature[n]),
                        "threshold": float(t.threshold[n]),
                        "left": int(t.left[n]),
                        "right": int(t.right[n]),
                    })
            trees.append({"round": i // self.n_classes, "class_index": i % self.n_classes, "nodes": nodes})
        return {
            "format_version": FORMAT_VERSION,
            "label_map": list(self.label_map),
            "hyperparams": asdict(self.hyperparams),
            "base_score": self.base_score,
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GbtModel":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
        trees = []
        for tdoc in doc["trees"]:
            nodes = sorted(tdoc["nodes"], key=lambda n: n["id"])
            n = len(nodes)
            t = Tree(
                feature=np.full(n, LEAF, dtype=np.int64),
                threshold=np.zeros(n),
                left=np.full(n, LEAF, dtype=np.int64),
                right=np.full(n, LEAF, dtype=np.int64),
                weight=np.zeros(n),
            )
            for node in nodes:
                i = node["id"]
                if "weight" in node:
                    t.weight[i] = node["weight"]
                else:
                    t.feature[i] = node["feature"]
                    t.threshold[i] = node["threshold"]
                    t.left[i] = node["left"]
                    t.right[i] = node["right"]
            trees.append(t)
        return cls(
            label_map=list(doc["label_map"]),
            trees=trees,
            hyperparams=GbtHyperparams(**doc["hyperparams"]),
            base_score=float(doc["base_score"]),
        )

    def save(self, path: str | os.PathLike) -> None:
        # json writes floats with repr(), the shortest string that round-trips exactly
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "GbtModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X


@dataclass
class Split:
    feature: int
    threshold: float
    gain: float
    position: int  # number of sorted examples going left


def split_gain(GL, HL, GR, HR, lam, gamma):
    G, H = GL + GR, HL + HR
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)) - gamma


def find_best_split(
    sorted_values: np.ndarray,
    sorted_grad: np.ndarray,
    sorted_hess: np.ndarray,
    params: GbtHyperparams,
) -> Split | None:
    """Exact greedy split search at one node.

    All arguments are ``(n_features, n_examples)`` with each row ordered by
    that feature's value. Every midpoint between distinct consecutive values
    is scored; the best candidate wins with ties going to the lowest feature
    index and then the lowest threshold. Returns ``None`` when no candidate
    has positive gain and both children meet ``min_child_weight``.
    """
    n = sorted_values.shape[1]
    if n < 2:
        return None
    cum_h = np.cumsum(sorted_hess, axis=1)
    HL = cum_h[:, :-1]
    # right-hand sums accumulated directly, not as H - HL, so the
    # min_child_weight test does not depend on the summation order
    HR = np.cumsum(sorted_hess[:, ::-1], axis=1)[:, -2::-1]
    mcw = params.min_child_weight
    lam = params.l2_lambda
    valid = (sorted_values[:, 1:] != sorted_values[:, :-1]) & (HL >= mcw) & (HR >= mcw)
    cand = np.flatnonzero(valid)  # row-major: feature, then threshold
    if not len(cand):
        return None
    cum_g = np.cumsum(sorted_grad, axis=1)
    GL = cum_g[:, :-1].ravel()[cand]
    GR = (cum_g[:, -1:] - cum_g[:, :-1]).ravel()[cand]
    HL = HL.ravel()[cand]
    HR = HR.ravel()[cand]
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = split_gain(GL, HL, GR, HR, lam, params.gamma)
    gain[~np.isfinite(gain)] = -np.inf
    best = gain.max()
    if not best > 0:
        return None
    # absorb summation-order noise so exact ties resolve to the lowest (feature, threshold)
    pick = int(np.flatnonzero(gain >= best - 1e-12 * max(1.0, abs(best)))[0])
    # gains within rounding noise of zero (e.g. lam = 0 on a pure node) are not splits
    G, H = GL[pick] + GR[pick], HL[pick] + HR[pick]
    noise = 1e-12 * (GL[pick] ** 2 / (HL[pick] + lam) + GR[pick] ** 2 / (HR[pick] + lam) + G * G / (H + lam))
    if not gain[pick] > noise:
        return None
    f, pos = divmod(int(cand[pick]), n - 1)
    lo, hi = sorted_values[f, pos], sorted_values[f, pos + 1]
    thr = (lo + hi) / 2.0
    if not lo < thr:
        thr = hi
    return Split(feature=f, threshold=float(thr), gain=float(gain[pick]), position=pos + 1)


@dataclass
class Presorted:
    """Per-feature sort of a training matrix, shared by every tree of a fit.

    Features holding a single value can never split and are left out;
    ``features`` maps row ``j`` of ``order``/``values`` back to a column of X.
    """

    features: np.ndarray
    order: np.ndarray
    values: np.ndarray

    @classmethod
    def of(cls, X: np.ndarray) -> "Presorted":
        features = np.flatnonzero(X.min(axis=0) != X.max(axis=0)) if len(X) else np.arange(0)
        order = np.argsort(X[:, features], axis=0, kind="stable").T.copy()
        values = X[order, features[:, None]]
        return cls(features, order, values)


class _TreeGrower:
    def __init__(self, X, presorted: Presorted, grad, hess, params: GbtHyperparams):
        self.X = X
        self.features = presorted.features
        self.grad = grad
        self.hess = hess
        self.params = params
        self.nodes: list[list] = []  # [feature, threshold, left, right, weight]
        self.leaf_members: list[tuple[int, np.ndarray]] = []
        if len(self.features):
            self._grow(presorted.order, presorted.values, 0)
        else:
            self._leaf(np.arange(len(X)))

    def _leaf(self, members: np.ndarray) -> int:
        G = self.grad[members].sum()
        H = self.hess[members].sum()
        self.nodes.append([LEAF, 0.0, LEAF, LEAF, -self.params.learning_rate * G / (H + self.params.l2_lambda)])
        self.leaf_members.append((len(self.nodes) - 1, members))
        return len(self.nodes) - 1

    def _grow(self, idx_sorted: np.ndarray, vals_sorted: np.ndarray, depth: int) -> int:
        split = None
        if depth < self.params.max_depth:
            split = find_best_split(vals_sorted, self.grad[idx_sorted], self.hess[idx_sorted], self.params)
        if split is None:
            return self._leaf(idx_sorted[0])
        feature = int(self.features[split.feature])
        mask = (self.X[:, feature] < split.threshold)[idx_sorted]
        shape = (len(idx_sorted), -1)
        node = len(self.nodes)
        self.nodes.append([feature, split.threshold, LEAF, LEAF, 0.0])
        self.nodes[node][2] = self._grow(idx_sorted[mask].reshape(shape), vals_sorted[mask].reshape(shape), depth + 1)
        self.nodes[node][3] = self._grow(idx_sorted[~mask].reshape(shape), vals_sorted[~mask].reshape(shape), depth + 1)
        return node

    def tree(self) -> Tree:
        cols = list(zip(*self.nodes))
        return Tree(
            feature=np.array(cols[0], dtype=np.int64),
            threshold=np.array(cols[1], dtype=np.float64),
            left=np.array(cols[2], dtype=np.int64),
            right=np.array(cols[3], dtype=np.int64),
            weight=np.array(cols[4], dtype=np.float64),
        )


def grow_tree(X, grad, hess, params: GbtHyperparams, presorted: Presorted | None = None):
    """Fit one tree to per-example gradients and hessians.

    Returns ``(tree, leaf_members)`` where ``leaf_members`` pairs each leaf
    id with the training rows that reached it.
    """
    X = np.asarray(X, dtype=np.float64)
    g = _TreeGrower(X, presorted or Presorted.of(X), grad, hess, params)
    return g.tree(), g.leaf_members


def fit(X, y: Sequence[str], params: GbtHyperparams | None = None, *, n_jobs: int = 1) -> GbtModel:
    """Train a multiclass booster on feature matrix ``X`` and labels ``y``.

    The label map is the sorted set of distinct labels. With ``n_jobs > 1``
    the K class trees of a round are grown concurrently; the result is the
    same model as the sequential schedule.
    """
    params = params or GbtHyperparams()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyDataset("need a non-empty 2-D feature matrix")
    if len(y) != len(X):
        raise ValueError(f"{len(X)} feature rows but {len(y)} labels")
    if not np.isfinite(X).all():
        raise NonFiniteFeature("features must be finite")
    label_map = sorted(set(y))
    if len(label_map) < 2:
        raise DegenerateLabels(f"need at least 2 classes, got {label_map}")
    index = {lab: i for i, lab in enumerate(label_map)}
    yi = np.array([index[lab] for lab in y])
    K = len(label_map)
    onehot = np.zeros((len(X), K))
    onehot[np.arange(len(X)), yi] = 1.0

    presorted = Presorted.of(X)
    scores = np.zeros((len(X), K))
    trees: list[Tree] = []
    pool = ThreadPoolExecutor(n_jobs) if n_jobs > 1 else None
    try:
        for _ in range(params.num_rounds):
            p = softmax(scores)
            grad = p - onehot
            hess = p * (1.0 - p)

            def grow(k):
                return grow_tree(X, np.ascontiguousarray(grad[:, k]), np.ascontiguousarray(hess[:, k]), params, presorted)

            grown = list(pool.map(grow, range(K))) if pool else [grow(k) for k in range(K)]
            for k, (tree, leaves) in enumerate(grown):
                trees.append(tree)
                for leaf, members in leaves:
                    scores[members, k] += tree.weight[leaf]
    finally:
        if pool:
            pool.shutdown()
    return GbtModel(label_map=label_map, trees=trees, hyperparams=params, base_score=0.0)


def cross_entropy(scores: np.ndarray, y_index: np.ndarray) -> float:
    """Mean softmax cross-entropy of raw class scores."""
    p = softmax(scores)
    return float(-np.mean(np.log(np.clip(p[np.arange(len(p)), y_index], 1e-300, None))))


def staged_scores(model: GbtModel, X) -> list[np.ndarray]:
    """Class scores after 0, 1, ..., n_rounds rounds."""
    X = _as_matrix(X)
    K = model.n_classes
    scores = np.full((len(X), K), model.base_score)
    out = [scores.copy()]
    for r in range(model.n_rounds):
        for k in range(K):
            scores[:, k] += model.tree(r, k).predict(X)
        out.append(scores.copy())
    return out
