"""Random forest classifier over the three match outcomes.

Trees are grown on bootstrap samples with Gini impurity, sampling ``mtry``
features per split. Every tree draws from its own RNG stream derived from
``(seed, tree_index)``, and training rows are put in a canonical order first,
so the fitted forest depends only on the multiset of rows and the seed, not
on row order or on how many workers built it.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ModelError
from .outcomes import OUTCOMES, Outcome, OutcomeProbs, argmax_outcome

N_CLASSES = 3
ARTIFACT_TYPE = "random_forest"
ARTIFACT_VERSION = 1
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    max_depth: int | None = None
    min_leaf: int = 5
    mtry: int | None = None  # None -> ceil(sqrt(n_features))
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1 or None")

    def resolved_mtry(self, n_features: int) -> int:
        m = self.mtry if self.mtry is not None else math.ceil(math.sqrt(n_features))
        return max(1, min(m, n_features))


@dataclass(frozen=True)
class DecisionTree:
    """Flat binary tree. ``feature[i] == -1`` marks node ``i`` as a leaf.

    ``counts[i]`` holds the class counts of the (bootstrap) rows that reached
    node ``i``; rows with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        leaf_counts = self.counts[self.apply(X)].astype(float)
        return leaf_counts / leaf_counts.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["counts"], dtype=np.int64).reshape(-1, N_CLASSES),
        )


@dataclass(frozen=True)
class Forest:
    trees: tuple[DecisionTree, ...]
    n_features: int
    seed: int
    params: ForestParams
    classes: tuple[Outcome, ...] = OUTCOMES
    degenerate_class: Outcome | None = None
    oob_accuracy: float | None = field(default=None, compare=False)

    @property
    def is_degenerate(self) -> bool:
        return self.degenerate_class is not None

    def proba_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ModelError(f"feature dimension {X.shape[1]} != forest dimension {self.n_features}")
        if self.is_degenerate:
            out = np.zeros((len(X), N_CLASSES))
            out[:, int(self.degenerate_class)] = 1.0
            return out
        total = np.zeros((len(X), N_CLASSES))
        for tree in self.trees:
            total += tree.predict_proba(X)
        return total / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "type": ARTIFACT_TYPE,
            "version": ARTIFACT_VERSION,
            "n_features": self.n_features,
            "seed": self.seed,
            "classes": [c.label for c in self.classes],
            "hyperparams": asdict(self.params),
            "degenerate_class": self.degenerate_class.label if self.is_degenerate else None,
            "oob_accuracy": self.oob_accuracy,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("type") != ARTIFACT_TYPE:
            raise ModelError(f"not a random forest artifact (type={d.get('type')!r})")
        if d.get("version") != ARTIFACT_VERSION:
            raise ModelError(f"random forest artifact version {d.get('version')!r} not supported")
        degenerate = d.get("degenerate_class")
        return cls(
            tuple(DecisionTree.from_dict(t) for t in d["trees"]),
            int(d["n_features"]),
            int(d["seed"]),
            ForestParams(**d["hyperparams"]),
            tuple(Outcome.parse(c) for c in d["classes"]),
            Outcome.parse(degenerate) if degenerate is not None else None,
            d.get("oob_accuracy"),
        )


# ---------------------------------------------------------------------------
# tree growing


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tree_index]))


def _pick_features(Xn: np.ndarray, rng: np.random.Generator, mtry: int) -> np.ndarray:
    """Draw up to ``mtry`` features that are not constant within the node.

    Constant features are skipped and more are drawn, so a node only
    becomes a leaf for lack of features when every feature is constant.
    """
    d = Xn.shape[1]
    perm = rng.permutation(d)
    chosen: list[np.ndarray] = []
    have = 0
    step = max(4 * mtry, 16)
    for lo in range(0, d, step):
        block = perm[lo : lo + step]
        cols = Xn[:, block]
        varying = block[cols.min(axis=0) < cols.max(axis=0)]
        take = varying[: mtry - have]
        chosen.append(take)
        have += len(take)
        if have >= mtry:
            break
    return np.sort(np.concatenate(chosen)) if chosen else np.empty(0, dtype=np.int64)


def _best_split(
    Xn: np.ndarray, yn: np.ndarray, feats: np.ndarray, min_leaf: int
) -> tuple[int, float] | None:
    n = len(yn)
    sub = Xn[:, feats]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    onehot = np.eye(N_CLASSES, dtype=np.int64)[yn]
    left = np.cumsum(onehot[order], axis=0)[:-1]  # (n-1, m, 3)
    total = onehot.sum(axis=0)
    right = total - left
    nl = np.arange(1, n, dtype=float)[:, None]
    nr = n - nl
    cost = (nl - (left**2).sum(axis=2) / nl) + (nr - (right**2).sum(axis=2) / nr)
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    cost = np.where(valid, cost, np.inf)
    best = cost.min()
    tied = cost <= best + _TIE_TOL * max(1.0, abs(best))
    # lowest feature index first (feats is sorted), then lowest threshold
    col = int(np.flatnonzero(tied.any(axis=0))[0])
    row = int(np.flatnonzero(tied[:, col])[0])
    lo, hi = xs[row, col], xs[row + 1, col]
    thr = lo + (hi - lo) / 2.0
    if not (lo <= thr < hi):
        thr = lo
    return int(feats[col]), float(thr)


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    rng: np.random.Generator,
    sample: np.ndarray | None = None,
) -> DecisionTree:
    """Fit one tree on rows ``sample`` (with repeats) of ``X``/``y``."""
    if sample is None:
        sample = np.arange(len(y))
    Xs, ys = X[sample], y[sample]
    mtry = params.resolved_mtry(X.shape[1])
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    counts: list[np.ndarray] = []

    def new_node(rows: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(ys[rows], minlength=N_CLASSES))
        return len(feature) - 1

    root = new_node(np.arange(len(ys)))
    stack = [(root, np.arange(len(ys)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        c = counts[node]
        if np.count_nonzero(c) <= 1 or len(rows) < 2 * params.min_leaf:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        Xn = Xs[rows]
        feats = _pick_features(Xn, rng, mtry)
        if feats.size == 0:
            continue
        split = _best_split(Xn, ys[rows], feats, params.min_leaf)
        if split is None:
            continue
        f, thr = split
        mask = Xn[:, f] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        li, ri = new_node(lrows), new_node(rrows)
        feature[node], threshold[node], left[node], right[node] = f, thr, li, ri
        # push right first so the left subtree gets the lower node ids
        stack.append((ri, rrows, depth + 1))
        stack.append((li, lrows, depth + 1))

    return DecisionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.vstack(counts).astype(np.int64),
    )


def _build_one(X: np.ndarray, y: np.ndarray, params: ForestParams, seed: int, index: int):
    rng = _tree_rng(seed, index)
    n = len(y)
    sample = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
    return grow_tree(X, y, params, rng, sample), sample


_WORKER: dict = {}


def _init_worker(X, y, params, seed):
    _WORKER.update(X=X, y=y, params=params, seed=seed)


def _worker_build(index: int):
    w = _WORKER
    return _build_one(w["X"], w["y"], w["params"], w["seed"], index)


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row permutation that depends only on row contents."""
    return np.asarray(sorted(range(len(y)), key=lambda i: (int(y[i]), X[i].tobytes())), dtype=np.int64)


def train(
    X: np.ndarray | Sequence[Sequence[float]],
    y: Sequence[Outcome | int],
    params: ForestParams | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> Forest:
    """Fit a forest; a single-label training set gives a flagged constant forest."""
    params = params or ForestParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray([int(v) for v in y], dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ModelError(f"X has shape {X.shape} but there are {len(y)} labels")
    if len(y) < 2:
        raise ModelError("need at least 2 training rows")
    if not np.all(np.isfinite(X)):
        raise ModelError("non-finite feature values")
    if np.any((y < 0) | (y >= N_CLASSES)):
        raise ModelError("labels must be outcome indices 0..2")
    labels = np.unique(y)
    if len(labels) == 1:
        return Forest((), X.shape[1], seed, params, degenerate_class=Outcome(int(labels[0])))

    order = canonical_order(X, y)
    X, y = X[order], y[order]

    if n_jobs > 1 and params.n_trees > 1:
        with ProcessPoolExecutor(n_jobs, initializer=_init_worker, initargs=(X, y, params, seed)) as ex:
            built = list(ex.map(_worker_build, range(params.n_trees), chunksize=max(1, params.n_trees // (4 * n_jobs))))
    else:
        built = [_build_one(X, y, params, seed, i) for i in range(params.n_trees)]

    trees = tuple(t for t, _ in built)
    oob = None
    if params.bootstrap:
        votes = np.zeros((len(y), N_CLASSES))
        seen = np.zeros(len(y), dtype=bool)
        for tree, sample in built:
            out = np.ones(len(y), dtype=bool)
            out[sample] = False
            if out.any():
                votes[out] += tree.predict_proba(X[out])
                seen |= out
        if seen.any():
            pred = np.array([int(argmax_outcome(v)) for v in votes[seen]])
            oob = float(np.mean(pred == y[seen]))
    return Forest(trees, X.shape[1], seed, params, oob_accuracy=oob)


def predict_proba(forest: Forest, x: np.ndarray | Sequence[float]) -> OutcomeProbs:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ModelError("predict_proba takes a single feature vector")
    return OutcomeProbs.from_weights(forest.proba_matrix(x)[0])


def predict(forest: Forest, x: np.ndarray | Sequence[float]) -> Outcome:
    return predict_proba(forest, x).argmax()


def predict_many(forest: Forest, X: np.ndarray) -> list[Outcome]:
    return [OutcomeProbs.from_weights(p).argmax() for p in forest.proba_matrix(X)]
