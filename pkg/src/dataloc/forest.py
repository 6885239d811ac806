"""Random forest room classifier.

Trees are grown greedily on bootstrap samples by Gini impurity, with a
random subset of candidate features drawn at every node. All randomness is
keyed by position rather than by call order:

* tree ``t`` bootstraps with sub-seed ``(seed, "bootstrap", t)``;
* the node reached by path code ``c`` (root 1, children ``2c`` / ``2c+1``)
  draws its candidate features with sub-seed ``(seed, "tree", t, c)``.

Consequently the first ``n`` trees of a forest are the forest of size ``n``
and a tree grown to depth ``d`` is the depth-``d`` truncation of the same
tree grown deeper. :func:`predict_grid` relies on both facts.

Ties resolve to the minimum everywhere: leaf labels and votes to the
lexicographically smallest label, equal-gain splits to the lowest feature
index and then the lowest threshold.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from dataloc import rng
from dataloc.errors import (
    CorruptModel,
    DimensionMismatch,
    EmptyMatrix,
    InvalidConfig,
    SingleClass,
    VersionMismatch,
)
from dataloc.features import FeatureMatrix

MODEL_FORMAT = "dataloc-forest"
MODEL_VERSION = 1

# relative slack when comparing split scores; distinct scores on small
# instances differ by far more, float noise by far less
_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 30
    max_depth: int = 20
    max_features: str | int = "sqrt"  # "sqrt", "all" or a fixed count
    seed: int = 0
    min_samples_split: int = 2
    bootstrap: bool = True  # disabling is meant for testing single trees

    def __post_init__(self):
        if self.n_estimators < 1:
            raise InvalidConfig("n_estimators must be >= 1")
        if self.max_depth < 1:
            raise InvalidConfig("max_depth must be >= 1")
        if self.min_samples_split < 1:
            raise InvalidConfig("min_samples_split must be >= 1")
        mf = self.max_features
        if isinstance(mf, str):
            if mf not in ("sqrt", "all"):
                raise InvalidConfig(f"unknown max_features {mf!r}")
        elif isinstance(mf, bool) or not isinstance(mf, int) or mf < 1:
            raise InvalidConfig(f"bad max_features {mf!r}")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.isqrt(n_features))
        if self.max_features == "all":
            return n_features
        if self.max_features > n_features:
            raise InvalidConfig(f"max_features {self.max_features} > {n_features} features")
        return self.max_features


@dataclass(eq=False)
class DecisionTree:
    """Flattened tree in preorder; node 0 is the root.

    Leaves have ``feature == -1``. ``counts[i]`` holds the (bootstrap)
    class counts that reached node ``i``; internal nodes keep theirs so a
    tree can be cut at any depth.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    counts: np.ndarray
    label: np.ndarray = field(init=False)

    def __post_init__(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.depth = np.asarray(self.depth, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.label = np.argmax(self.counts, axis=1)

    def __eq__(self, other):
        if not isinstance(other, DecisionTree):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("feature", "threshold", "left", "right", "depth", "counts")
        )

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def walk(self, rows: np.ndarray, steps: int) -> list[np.ndarray]:
        """Node index of every row after 0..steps descents (leaves stay put)."""
        node = np.zeros(len(rows), dtype=np.int64)
        trail = [node]
        r = np.arange(len(rows))
        for _ in range(steps):
            feat = self.feature[node]
            leaf = feat < 0
            go_left = rows[r, np.where(leaf, 0, feat)] <= self.threshold[node]
            node = np.where(leaf, node, np.where(go_left, self.left[node], self.right[node]))
            trail.append(node)
        return trail

    def apply(self, rows: np.ndarray) -> np.ndarray:
        """Leaf class index for each row."""
        return self.label[self.walk(rows, self.max_depth)[-1]]


@dataclass(eq=False)
class ForestModel:
    config: ForestConfig
    trees: list[DecisionTree]
    device_universe: tuple[str, ...]
    classes: tuple[str, ...]

    def __eq__(self, other):
        if not isinstance(other, ForestModel):
            return NotImplemented
        return (
            self.config == other.config
            and self.device_universe == other.device_universe
            and self.classes == other.classes
            and len(self.trees) == len(other.trees)
            and all(a == b for a, b in zip(self.trees, other.trees))
        )


def gini(counts) -> float:
    """Gini impurity ``1 - sum(p_c^2)`` of a class-count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    return float(1.0 - np.sum((counts / n) ** 2))


def best_split(x: np.ndarray, y: np.ndarray, n_classes: int, features: Sequence[int]):
    """Best ``(feature, threshold)`` over candidate columns, or None.

    Minimising weighted child Gini is equivalent to maximising
    ``sum(L_c^2)/n_L + sum(R_c^2)/n_R``; a split must beat the parent's
    ``sum(T_c^2)/n``.
    """
    n = len(y)
    feats = np.asarray(sorted(features), dtype=np.int64)
    cols = x[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    vals = np.take_along_axis(cols, order, axis=0)
    ys = y[order]  # (n, m)
    onehot = np.zeros((n, len(feats), n_classes), dtype=np.int64)
    np.put_along_axis(onehot, ys[:, :, None], 1, axis=2)
    left = np.cumsum(onehot, axis=0)[:-1]  # boundary after row i
    total = onehot.sum(axis=0)
    right = total[None, :, :] - left
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    score = (left ** 2).sum(axis=2) / n_left + (right ** 2).sum(axis=2) / n_right
    valid = vals[:-1] < vals[1:]
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    parent = float((total[0] ** 2).sum()) / n
    top = float(score.max())
    if top <= parent * (1 + _TIE_RTOL):
        return None
    tied = score >= top - abs(top) * _TIE_RTOL
    # lowest feature first, then lowest threshold (boundaries are ascending)
    col = int(np.flatnonzero(tied.any(axis=0))[0])
    pos = int(np.flatnonzero(tied[:, col])[0])
    threshold = (float(vals[pos, col]) + float(vals[pos + 1, col])) / 2
    return int(feats[col]), threshold


def grow_tree(x: np.ndarray, y: np.ndarray, n_classes: int, sample: np.ndarray,
              config: ForestConfig, tree_index: int) -> DecisionTree:
    n_features = x.shape[1]
    m = config.features_per_split(n_features)
    nodes: dict[str, list] = {k: [] for k in ("feature", "threshold", "left", "right", "depth", "counts")}

    def grow(idx: np.ndarray, depth: int, code: int) -> int:
        node = len(nodes["feature"])
        counts = np.bincount(y[idx], minlength=n_classes)
        for key, value in (("feature", -1), ("threshold", 0.0), ("left", -1),
                           ("right", -1), ("depth", depth), ("counts", counts)):
            nodes[key].append(value)
        if depth >= config.max_depth or len(idx) < config.min_samples_split \
                or np.count_nonzero(counts) < 2:
            return node
        if m == n_features:
            feats = range(n_features)
        else:
            feats = rng.choose(rng.derive_seed(config.seed, "tree", tree_index, code), n_features, m)
        split = best_split(x[idx], y[idx], n_classes, feats)
        if split is None:
            return node
        f, thr = split
        go_left = x[idx, f] <= thr
        nodes["feature"][node] = f
        nodes["threshold"][node] = thr
        nodes["left"][node] = grow(idx[go_left], depth + 1, 2 * code)
        nodes["right"][node] = grow(idx[~go_left], depth + 1, 2 * code + 1)
        return node

    grow(sample, 0, 1)
    return DecisionTree(**nodes)


def bootstrap_sample(seed: int, tree_index: int, n: int) -> np.ndarray:
    return np.sort(rng.integers(rng.derive_seed(seed, "bootstrap", tree_index), n, n))


def _grow_job(args):
    x, y, n_classes, config, t = args
    n = len(y)
    sample = bootstrap_sample(config.seed, t, n) if config.bootstrap else np.arange(n)
    return grow_tree(x, y, n_classes, sample, config, t)


def _encode(matrix: FeatureMatrix):
    classes = tuple(matrix.classes)
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[label] for label in matrix.labels], dtype=np.int64)
    return np.asarray(matrix.rows, dtype=np.float64), y, classes


def train_forest(matrix: FeatureMatrix, config: ForestConfig, jobs: int = 1) -> ForestModel:
    """Fit ``config.n_estimators`` trees; the result depends only on (matrix, config)."""
    if len(matrix) < 2:
        raise EmptyMatrix("need at least 2 rows to train")
    x, y, classes = _encode(matrix)
    if len(classes) < 2:
        raise SingleClass(f"only class {classes[0]!r} present")
    config.features_per_split(x.shape[1])  # validates fixed counts
    jobs_args = [(x, y, len(classes), config, t) for t in range(config.n_estimators)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(_grow_job, jobs_args))
    else:
        trees = [_grow_job(a) for a in jobs_args]
    return ForestModel(config, trees, matrix.device_universe, classes)


def _votes(model: ForestModel, rows: np.ndarray) -> np.ndarray:
    n_classes = len(model.classes)
    votes = np.zeros((len(rows), n_classes), dtype=np.int64)
    r = np.arange(len(rows))
    for tree in model.trees:
        np.add.at(votes, (r, tree.apply(rows)), 1)
    return votes


def _check_rows(model: ForestModel, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != len(model.device_universe):
        raise DimensionMismatch(
            f"row has {rows.shape[1]} features, model expects {len(model.device_universe)}"
        )
    return rows


def vote_counts(model: ForestModel, row) -> dict[str, int]:
    votes = _votes(model, _check_rows(model, row))[0]
    return {c: int(v) for c, v in zip(model.classes, votes)}


def predict(model: ForestModel, row) -> str:
    """Plurality vote of the trees; ties go to the smallest label."""
    return predict_many(model, _check_rows(model, row))[0]


def predict_many(model: ForestModel, rows) -> list[str]:
    votes = _votes(model, _check_rows(model, rows))
    return [model.classes[i] for i in np.argmax(votes, axis=1)]


def evaluate(model: ForestModel, matrix: FeatureMatrix) -> float:
    """Fraction of rows whose predicted label matches."""
    if matrix.device_universe != model.device_universe:
        raise DimensionMismatch("matrix universe differs from the model's")
    predicted = predict_many(model, matrix.rows)
    return sum(p == t for p, t in zip(predicted, matrix.labels)) / len(matrix)


def predict_grid(model: ForestModel, rows, depths: Sequence[int],
                 n_estimators_list: Sequence[int]) -> np.ndarray:
    """Class indices predicted by every (depth cap, forest size) sub-forest.

    Returns an int array of shape ``(len(depths), len(n_estimators_list),
    len(rows))``. Entry ``[i, j]`` equals the predictions of a forest trained
    with ``max_depth=depths[i]`` and ``n_estimators=n_estimators_list[j]``
    (all other config equal), provided the model was trained with depth and
    size at least as large.
    """
    rows = _check_rows(model, rows)
    if max(depths) > model.config.max_depth or max(n_estimators_list) > len(model.trees):
        raise ValueError("grid exceeds the depth or size of the model")
    n_classes = len(model.classes)
    per_tree = np.empty((len(depths), len(model.trees), len(rows)), dtype=np.int64)
    for t, tree in enumerate(model.trees):
        trail = tree.walk(rows, max(depths))
        for i, d in enumerate(depths):
            per_tree[i, t] = tree.label[trail[d]]
    out = np.empty((len(depths), len(n_estimators_list), len(rows)), dtype=np.int64)
    r = np.arange(len(rows))
    for i in range(len(depths)):
        votes = np.zeros((len(rows), n_classes), dtype=np.int64)
        done = 0
        for j, n_est in sorted(enumerate(n_estimators_list), key=lambda p: p[1]):
            for t in range(done, n_est):
                np.add.at(votes, (r, per_tree[i, t]), 1)
            done = n_est
            out[i, j] = np.argmax(votes, axis=1)
    return out


# -- model files ------------------------------------------------------------

def model_to_dict(model: ForestModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(model.config),
        "device_universe": list(model.device_universe),
        "classes": list(model.classes),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "depth": t.depth.tolist(),
                "counts": t.counts.tolist(),
            }
            for t in model.trees
        ],
    }


def dumps_model(model: ForestModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":")) + "\n"


def serialize_model(model: ForestModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8", newline="\n")


def loads_model(text: str) -> ForestModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModel(f"not a model file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise CorruptModel("missing format tag")
    if doc.get("version") != MODEL_VERSION:
        raise VersionMismatch(f"model version {doc.get('version')!r}, expected {MODEL_VERSION}")
    try:
        config = ForestConfig(**doc["config"])
        classes = tuple(doc["classes"])
        universe = tuple(doc["device_universe"])
        trees = [DecisionTree(**t) for t in doc["trees"]]
    except (KeyError, TypeError, ValueError, InvalidConfig) as exc:
        raise CorruptModel(f"malformed model: {exc}") from None
    for t in trees:
        n = t.n_nodes
        if not (len(t.threshold) == len(t.left) == len(t.right) == len(t.depth) == n) \
                or t.counts.shape != (n, len(classes)):
            raise CorruptModel("inconsistent tree arrays")
        internal = t.feature >= 0
        if (t.feature >= len(universe)).any() or (t.left[internal] >= n).any() \
                or (t.right[internal] >= n).any() or (t.left[internal] <= 0).any():
            raise CorruptModel("tree references out of range")
    if len(trees) != config.n_estimators:
        raise CorruptModel("tree count differs from n_estimators")
    return ForestModel(config, trees, universe, classes)


def deserialize_model(path) -> ForestModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
