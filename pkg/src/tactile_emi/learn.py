"""Window features and a from-scratch random forest for weight classification.

Features per window, over the measured force:
    for each axis x, y, z: mean, std, min, max, rms   (indices axis*5 + k)
    magnitude mean                                   (index 15)
Standard deviation is the population one (ddof=0) throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import RngStream
from .datagen import LabeledTrace

N_FEATURES = 16
FEATURE_NAMES = [f"{ax}_{stat}" for ax in "xyz" for stat in ("mean", "std", "min", "max", "rms")] + ["mag_mean"]
FOREST_FORMAT = "tactile-emi-forest/1"


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 100
    stride: int = 50
    phase_filter: str = "dwell_only"

    def __post_init__(self) -> None:
        if self.window_len <= 0 or self.stride <= 0:
            raise ValueError("window_len and stride must be > 0")
        if self.phase_filter not in ("dwell_only", "all"):
            raise ValueError(f"unknown phase_filter {self.phase_filter!r}")


def _features(windows: np.ndarray) -> np.ndarray:
    """(n, L, 3) -> (n, 16)."""
    mean = windows.mean(axis=1)
    std = windows.std(axis=1)
    lo = windows.min(axis=1)
    hi = windows.max(axis=1)
    rms = np.sqrt((windows**2).mean(axis=1))
    per_axis = np.stack([mean, std, lo, hi, rms], axis=2).reshape(len(windows), 15)
    mag = np.linalg.norm(windows, axis=2).mean(axis=1)
    return np.column_stack([per_axis, mag])


def extract_features(window, spec: WindowSpec) -> np.ndarray:
    """Features of one window given as SensorFrames or an (L, 3) array of measured forces."""
    if len(window) and hasattr(window[0], "measured_force"):
        arr = np.array([f.measured_force.as_array() for f in window])
    else:
        arr = np.asarray(window, dtype=float)
    if len(arr) != spec.window_len:
        raise ValueError(f"window has {len(arr)} frames, spec expects {spec.window_len}")
    return _features(arr[None, :, :])[0]


def window_starts(n: int, spec: WindowSpec) -> range:
    return range(0, n - spec.window_len + 1, spec.stride)


def trace_windows(lt: LabeledTrace, spec: WindowSpec) -> np.ndarray:
    data = lt.trace.measured_force
    if spec.phase_filter == "dwell_only":
        data = data[lt.dwell]
    starts = window_starts(len(data), spec)
    if not len(starts):
        return np.empty((0, spec.window_len, 3))
    return np.stack([data[s : s + spec.window_len] for s in starts])


def windowed_dataset(traces: Sequence[LabeledTrace], spec: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for lt in traces:
        w = trace_windows(lt, spec)
        if len(w):
            xs.append(_features(w))
            ys.append(np.full(len(w), lt.label))
    if not xs:
        return np.empty((0, N_FEATURES)), np.empty(0, dtype=int)
    return np.vstack(xs), np.concatenate(ys)


# --- forest ----------------------------------------------------------------


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    feature_subsample: int = 4

    def __post_init__(self) -> None:
        if self.n_trees < 1 or self.max_depth < 0 or self.min_leaf < 1 or self.feature_subsample < 1:
            raise ValueError(f"invalid forest parameters {self}")


@dataclass
class Tree:
    """Flat array tree. ``feature[i] == -1`` marks a leaf; samples with x <= threshold go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    votes: np.ndarray  # (n_nodes, n_classes) training counts; meaningful at leaves

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=int)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            rows = np.flatnonzero(inner)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax takes the first maximum: ties go to the lowest class index
        return np.argmax(self.votes[self.apply(X)], axis=1)

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            i, d = stack.pop()
            if self.feature[i] < 0:
                best = max(best, d)
            else:
                stack += [(self.left[i], d + 1), (self.right[i], d + 1)]
        return best


@dataclass
class Forest:
    trees: list[Tree]
    n_classes: int
    params: ForestParams
    seed: int
    n_features: int = N_FEATURES
    class_names: list[str] = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_votes(self, X: np.ndarray) -> np.ndarray:
        """(n_samples, n_classes) vote counts."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        counts = np.zeros((len(X), self.n_classes), dtype=int)
        rows = np.arange(len(X))
        for t in self.trees:
            np.add.at(counts, (rows, t.predict(X)), 1)
        return counts

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.tree_votes(X), axis=1)

    def to_json(self) -> str:
        doc = {
            "format": FOREST_FORMAT,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "class_names": self.class_names,
            "seed": self.seed,
            "params": self.params.__dict__,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": [repr(float(x)) for x in t.threshold],
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "votes": t.votes.tolist(),
                }
                for t in self.trees
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> Forest:
        doc = json.loads(text)
        if doc.get("format") != FOREST_FORMAT:
            raise ValueError(f"unsupported forest format {doc.get('format')!r}")
        trees = [
            Tree(
                np.array(t["feature"], dtype=int),
                np.array([float(x) for x in t["threshold"]]),
                np.array(t["left"], dtype=int),
                np.array(t["right"], dtype=int),
                np.array(t["votes"], dtype=int).reshape(len(t["feature"]), doc["n_classes"]),
            )
            for t in doc["trees"]
        ]
        return cls(trees, doc["n_classes"], ForestParams(**doc["params"]), doc["seed"], doc["n_features"], doc["class_names"])


def predict(forest: Forest, features) -> tuple[int, np.ndarray]:
    """Majority label (ties -> lowest class index) and the vote share per class."""
    counts = forest.tree_votes(np.asarray(features, dtype=float)[None, :])[0]
    return int(np.argmax(counts)), counts / forest.n_trees


def gini(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(n > 0, counts / n, 0.0)
    return 1.0 - (p * p).sum(axis=-1)


def best_split(X: np.ndarray, y: np.ndarray, n_classes: int, features: Sequence[int], min_leaf: int):
    """Lowest weighted Gini split over ``features``.

    Returns (score, feature, threshold) or None. Ties break on lowest
    feature index, then lowest threshold.
    """
    n = len(y)
    onehot = np.eye(n_classes, dtype=float)[y]
    best = None
    for f in sorted(features):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left = np.cumsum(onehot[order], axis=0)[:-1]  # row i: first i+1 samples
        n_left = np.arange(1, n)
        ok = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not ok.any():
            continue
        pos = np.flatnonzero(ok)
        cl = left[pos]
        cr = left[-1] + onehot[order[-1]] - cl
        nl = n_left[pos]
        score = (nl * gini(cl) + (n - nl) * gini(cr)) / n
        k = int(np.argmin(score))  # first minimum = lowest threshold for this feature
        lo, hi = xs[pos[k]], xs[pos[k] + 1]
        thr = (lo + hi) / 2.0
        if thr >= hi:  # adjacent doubles
            thr = lo
        cand = (float(score[k]), f, float(thr))
        if best is None or cand[0] < best[0]:
            best = cand
    return best


def build_tree(X: np.ndarray, y: np.ndarray, n_classes: int, params: ForestParams, rng: RngStream) -> Tree:
    feature, threshold, left, right, votes = [], [], [], [], []
    n_feat = X.shape[1]
    k = min(params.feature_subsample, n_feat)

    def new_node(idx: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        votes.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = votes[node]
        if depth >= params.max_depth or np.count_nonzero(counts) < 2 or len(idx) < 2 * params.min_leaf:
            continue
        feats = rng.generator.choice(n_feat, size=k, replace=False)
        split = best_split(X[idx], y[idx], n_classes, feats, params.min_leaf)
        if split is None or split[0] >= gini(counts.astype(float)) - 1e-15:
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is expanded (and numbered) first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return Tree(
        np.array(feature, dtype=int),
        np.array(threshold, dtype=float),
        np.array(left, dtype=int),
        np.array(right, dtype=int),
        np.array(votes, dtype=int).reshape(len(feature), n_classes),
    )


class DegenerateDatasetError(ValueError):
    pass


def train_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams = ForestParams(),
    seed: int = 42,
    n_classes: int | None = None,
    class_names: Sequence[str] = (),
) -> Forest:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(y) == 0 or len(np.unique(y)) < 2:
        raise DegenerateDatasetError("training needs at least two classes")
    if not np.isfinite(X).all():
        raise DegenerateDatasetError("training features contain NaN or infinity")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    root = RngStream(seed, "forest")
    trees = []
    for t in range(params.n_trees):
        rng = root.child(f"tree{t}")
        boot = rng.integers(0, len(y), size=len(y))
        trees.append(build_tree(X[boot], y[boot], n_classes, params, rng))
    return Forest(trees, n_classes, params, seed, X.shape[1], list(class_names))


# --- evaluation ------------------------------------------------------------


@dataclass
class Evaluation:
    confusion: np.ndarray  # [true, predicted]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    precision_undefined: np.ndarray  # class never predicted
    recall_undefined: np.ndarray  # class absent from the test set
    f1_undefined: np.ndarray

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def macro_f1(self) -> float | None:
        """None when no class has a defined F1 (printed as '--')."""
        if self.f1_undefined.all():
            return None
        return float(self.f1.mean())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "precision_undefined": self.precision_undefined.tolist(),
            "recall_undefined": self.recall_undefined.tolist(),
            "f1_undefined": self.f1_undefined.tolist(),
            "confusion": self.confusion.tolist(),
        }


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return cm


def scores_from_confusion(cm: np.ndarray) -> Evaluation:
    tp = np.diag(cm).astype(float)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    p_undef = predicted == 0
    r_undef = actual == 0
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=~p_undef)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=~r_undef)
    denom = precision + recall
    f1_undef = p_undef | r_undef | (denom == 0)
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=~f1_undef)
    return Evaluation(cm, precision, recall, f1, p_undef, r_undef, f1_undef)


def evaluate(forest: Forest, X: np.ndarray, y: np.ndarray) -> Evaluation:
    if len(y) == 0:
        raise ValueError("empty test set")
    return scores_from_confusion(confusion_matrix(y, forest.predict(X), forest.n_classes))


def accuracy(forest: Forest, X: np.ndarray, y: np.ndarray) -> float:
    return float((forest.predict(X) == np.asarray(y)).mean())


def leaf_sizes(tree: Tree) -> np.ndarray:
    leaves = tree.feature < 0
    return tree.votes[leaves].sum(axis=1)

