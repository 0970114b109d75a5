"""Bootstrap aggregation of randomized CARTs.

A forest is a bag of trees plus the bookkeeping needed for out-of-bag
(OOB) estimation: for every tree the multiset of training rows it was
grown on. Training is deterministic given (data, config): tree *b* draws
its bootstrap sample and its node-level feature subsets from streams
derived from (seed, b), so the result is independent of how many worker
threads are used.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from . import cart
from .cart import CLASSIFICATION, REGRESSION, DecisionTree
from .errors import DegenerateInputError, TableFormatError
from .seeding import derive_seed, rng_for

FORMAT_TAG = "abcforest-forest v1"


def default_n_try(d: int, task: str) -> int:
    """sqrt(d) features per node for classification, d/3 for regression."""
    if task == CLASSIFICATION:
        return max(1, int(np.floor(np.sqrt(d))))
    return max(1, int(np.floor(d / 3)))


@dataclass(frozen=True)
class ForestConfig:
    """Ensemble hyperparameters; None fields resolve against the data."""

    n_tree: int = 500
    n_boot: int | None = None      # None -> N (keep the whole table)
    n_try: int | None = None       # None -> task default
    seed: int = 0
    sampling: str = "bootstrap"    # with replacement | "subsample" without
    min_leaf: int | None = None    # None -> 1 (classification) / 5 (regression)

    def resolved(self, n: int, d: int, task: str) -> "ForestConfig":
        cfg = self
        if cfg.n_boot is None:
            cfg = replace(cfg, n_boot=n)
        if cfg.n_try is None:
            cfg = replace(cfg, n_try=default_n_try(d, task))
        if cfg.min_leaf is None:
            cfg = replace(cfg, min_leaf=5 if task == REGRESSION else 1)
        if cfg.n_tree < 1:
            raise ValueError("n_tree must be >= 1")
        if not 1 <= cfg.n_boot <= n:
            raise ValueError(f"n_boot must be in [1, {n}]")
        if not 1 <= cfg.n_try <= d:
            raise ValueError(f"n_try must be in [1, {d}]")
        if cfg.sampling not in ("bootstrap", "subsample"):
            raise ValueError(f"unknown sampling mode {cfg.sampling!r}")
        return cfg


@dataclass(frozen=True)
class VoteTally:
    """Per-model vote counts over the trees of a classification forest."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def count_for(self, model: int) -> int:
        return int(self.counts[model - 1])

    def argmax_model(self) -> int:
        return int(np.argmax(self.counts)) + 1


@dataclass(frozen=True)
class ImportanceReport:
    """Mean impurity decrease per feature, with a descending ranking."""

    values: np.ndarray
    feature_names: tuple[str, ...] | None = None

    @property
    def ranking(self) -> np.ndarray:
        # stable sort on negated values: ties resolve to the lower index
        return np.argsort(-self.values, kind="stable")

    def as_rows(self):
        names = self.feature_names or tuple(
            f"f{j}" for j in range(self.values.shape[0]))
        return [(names[j], float(self.values[j])) for j in self.ranking]


@njit(cache=True, nogil=True)
def _tree_codes(feature, threshold, left, right, value, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = np.int32(value[node])


@njit(cache=True, nogil=True)
def _prefix_error_curve(pred_codes, truth_codes, skip, n_classes, out):
    """Error of the majority vote over tree prefixes 1..n_tree.

    pred_codes: (n_tree, n) predicted class codes; skip: (n_tree, n) bool,
    True where a tree must not vote (in-bag). Records with no votes so far
    are excluded from the denominator.
    """
    n_tree, n = pred_codes.shape
    votes = np.zeros((n, n_classes), dtype=np.int64)
    for b in range(n_tree):
        errors = 0
        covered = 0
        for i in range(n):
            if not skip[b, i]:
                votes[i, pred_codes[b, i]] += 1
            best_c = -1
            best_n = np.int64(0)
            for c in range(n_classes):
                if votes[i, c] > best_n:
                    best_n = votes[i, c]
                    best_c = c
            if best_c >= 0:
                covered += 1
                if best_c != truth_codes[i]:
                    errors += 1
        out[b] = errors / covered if covered > 0 else np.nan


def _draw_sample(seed: int, b: int, n: int, n_boot: int, sampling: str) -> np.ndarray:
    rng = rng_for(seed, "tree", b, "bootstrap")
    if sampling == "bootstrap":
        return rng.integers(0, n, size=n_boot).astype(np.int64)
    return rng.permutation(n)[:n_boot].astype(np.int64)


class Forest:
    """A trained ensemble with OOB bookkeeping and importance scores."""

    def __init__(self, trees, in_bag, task, config, n_classes, n_features,
                 X_train=None, y_train=None, feature_names=None):
        self.trees: list[DecisionTree] = trees
        self.in_bag = in_bag            # (n_tree, n_train) uint16 multiplicities
        self.task = task
        self.config = config
        self.n_classes = n_classes
        self.n_features = n_features
        self.X_train = X_train
        self.y_train = y_train
        self.feature_names = tuple(feature_names) if feature_names else None
        self._oob_codes_cache = None
        self._oob_values_cache = None

    @property
    def n_tree(self) -> int:
        return len(self.trees)

    @property
    def n_train(self) -> int:
        return self.in_bag.shape[1]

    def _check_task(self, task):
        if self.task != task:
            raise ValueError(f"operation requires a {task} forest, got {self.task}")

    def _check_vector(self, summaries):
        x = np.asarray(summaries, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise ValueError(
                f"expected a summary vector of length {self.n_features}, got shape {x.shape}")
        return x

    def _codes_matrix(self, X):
        """(n_tree, n) per-tree prediction codes (class code or node value)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty((self.n_tree, X.shape[0]), dtype=np.int32)
        for b, t in enumerate(self.trees):
            _tree_codes(t.feature, t.threshold, t.left, t.right, t.value, X, out[b])
        return out

    def tree_predictions(self, X):
        """(n_tree, n) raw per-tree predictions (1-based labels or reals)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty((self.n_tree, X.shape[0]), dtype=np.float64)
        for b, t in enumerate(self.trees):
            out[b] = t.predict_batch(X)
        return out

    # ---- ensemble predictions -------------------------------------------------

    def vote(self, summaries) -> VoteTally:
        """Per-model vote counts for one summary vector."""
        self._check_task(CLASSIFICATION)
        x = self._check_vector(summaries)
        codes = self._codes_matrix(x.reshape(1, -1))[:, 0]
        counts = np.bincount(codes, minlength=self.n_classes)
        return VoteTally(counts)

    def classify(self, summaries) -> int:
        """Majority-vote model index; ties go to the lowest index."""
        return self.vote(summaries).argmax_model()

    def vote_batch(self, X) -> np.ndarray:
        self._check_task(CLASSIFICATION)
        codes = self._codes_matrix(X)
        n = codes.shape[1]
        counts = np.zeros((n, self.n_classes), dtype=np.int64)
        for c in range(self.n_classes):
            counts[:, c] = np.sum(codes == c, axis=0)
        return counts

    def classify_batch(self, X) -> np.ndarray:
        return np.argmax(self.vote_batch(X), axis=1) + 1

    def regress(self, summaries) -> float:
        """Mean of the tree predictions for one summary vector."""
        self._check_task(REGRESSION)
        x = self._check_vector(summaries)
        preds = self.tree_predictions(x.reshape(1, -1))[:, 0]
        return float(np.sum(preds) / self.n_tree)

    def regress_batch(self, X) -> np.ndarray:
        self._check_task(REGRESSION)
        preds = self.tree_predictions(X)
        return np.sum(preds, axis=0) / self.n_tree

    # ---- out-of-bag machinery -------------------------------------------------

    def attach_training_data(self, X, y) -> None:
        """Reattach the training view after loading a persisted forest."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.shape != (self.n_train, self.n_features):
            raise ValueError(
                f"training data shape {X.shape} does not match the forest's "
                f"({self.n_train}, {self.n_features})")
        self.X_train = X
        self.y_train = (np.asarray(y, dtype=np.int64)
                        if self.task == CLASSIFICATION
                        else np.asarray(y, dtype=np.float64))
        self._oob_codes_cache = None
        self._oob_values_cache = None

    def _require_training_data(self):
        if self.X_train is None:
            raise ValueError("forest carries no training data view")

    def _oob_codes(self):
        if self._oob_codes_cache is None:
            self._require_training_data()
            self._oob_codes_cache = self._codes_matrix(self.X_train)
        return self._oob_codes_cache

    def _oob_values(self):
        if self._oob_values_cache is None:
            self._require_training_data()
            self._oob_values_cache = self.tree_predictions(self.X_train)
        return self._oob_values_cache

    def oob_predict(self, index: int):
        """Aggregate over trees whose bag excludes the record; None if no such tree."""
        self._require_training_data()
        i = int(index)
        if not 0 <= i < self.n_train:
            raise ValueError(f"record index {i} outside training data")
        mask = self.in_bag[:, i] == 0
        if not np.any(mask):
            return None
        if self.task == CLASSIFICATION:
            codes = self._oob_codes()[mask, i]
            counts = np.bincount(codes, minlength=self.n_classes)
            return int(np.argmax(counts)) + 1
        preds = self._oob_values()[mask, i]
        return float(np.sum(preds) / preds.shape[0])

    def oob_votes(self) -> tuple[np.ndarray, np.ndarray]:
        """(n_train, M) OOB vote counts and the has-any-OOB-tree mask."""
        self._check_task(CLASSIFICATION)
        codes = self._oob_codes()
        oob = self.in_bag == 0
        counts = np.zeros((self.n_train, self.n_classes), dtype=np.int64)
        for c in range(self.n_classes):
            counts[:, c] = np.sum((codes == c) & oob, axis=0)
        defined = counts.sum(axis=1) > 0
        return counts, defined

    def oob_predictions(self) -> tuple[np.ndarray, np.ndarray]:
        """OOB prediction per training record plus the defined mask.

        Classification: 1-based labels (0 where undefined). Regression:
        means (NaN where undefined).
        """
        if self.task == CLASSIFICATION:
            counts, defined = self.oob_votes()
            pred = np.where(defined, np.argmax(counts, axis=1) + 1, 0)
            return pred, defined
        vals = self._oob_values()
        oob = self.in_bag == 0
        defined = oob.any(axis=0)
        pred = np.full(self.n_train, np.nan)
        for i in np.flatnonzero(defined):
            sel = vals[oob[:, i], i]
            pred[i] = np.sum(sel) / sel.shape[0]
        return pred, defined

    def oob_error(self) -> float:
        """OOB misclassification rate over records having an OOB prediction."""
        self._check_task(CLASSIFICATION)
        self._require_training_data()
        pred, defined = self.oob_predictions()
        if not np.any(defined):
            raise DegenerateInputError("no training record has an out-of-bag tree")
        return float(np.mean(pred[defined] != self.y_train[defined]))

    def importance(self) -> ImportanceReport:
        """Mean over trees of the per-feature impurity decrease."""
        total = np.zeros(self.n_features)
        for t in self.trees:
            total += t.importance
        return ImportanceReport(total / self.n_tree, self.feature_names)

    def error_vs_trees(self, X=None, y=None) -> np.ndarray:
        """Classification error using the first n trees, n = 1..n_tree.

        With (X, y) given the curve is evaluated on held-out data; without,
        it is the OOB error curve on the training data, whose final point
        equals :meth:`oob_error`.
        """
        self._check_task(CLASSIFICATION)
        if self.n_tree < 2:
            raise ValueError("error_vs_trees needs at least 2 trees")
        if X is None:
            self._require_training_data()
            codes = self._oob_codes()
            truth = (np.asarray(self.y_train, dtype=np.int64) - 1).astype(np.int32)
            skip = self.in_bag > 0
        else:
            X = np.ascontiguousarray(X, dtype=np.float64)
            codes = self._codes_matrix(X)
            truth = (np.asarray(y, dtype=np.int64) - 1).astype(np.int32)
            skip = np.zeros(codes.shape, dtype=np.bool_)
        out = np.empty(self.n_tree)
        _prefix_error_curve(codes, truth, skip, self.n_classes, out)
        return out


def train(X, y, task=CLASSIFICATION, config: ForestConfig | None = None,
          feature_names=None, threads: int = 1, n_classes=None) -> Forest:
    """Train a forest of randomized CARTs.

    ``threads`` only caps worker parallelism; the result is bit-identical
    for any value because every tree owns its own derived RNG streams.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    n, d = X.shape
    if config is None:
        config = ForestConfig()
    config = config.resolved(n, d, task)
    if task == CLASSIFICATION:
        y = np.asarray(y, dtype=np.int64)
        n_classes = int(y.max()) if n_classes is None else int(n_classes)
    else:
        y = np.asarray(y, dtype=np.float64)
        n_classes = 1

    in_bag = np.zeros((config.n_tree, n), dtype=np.uint16)

    def build(b):
        sample = _draw_sample(config.seed, b, n, config.n_boot, config.sampling)
        tree = cart.grow(X, y, task=task, n_try=config.n_try,
                         seed=derive_seed(config.seed, "tree", b, "grow"),
                         n_classes=n_classes, min_leaf=config.min_leaf,
                         sample=sample)
        return b, sample, tree

    trees: list[DecisionTree | None] = [None] * config.n_tree
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for b, sample, tree in pool.map(build, range(config.n_tree)):
                trees[b] = tree
                np.add.at(in_bag[b], sample, 1)
    else:
        for b in range(config.n_tree):
            _, sample, tree = build(b)
            trees[b] = tree
            np.add.at(in_bag[b], sample, 1)
    return Forest(trees, in_bag, task, config, n_classes, d,
                  X_train=X, y_train=y, feature_names=feature_names)


# ---- persistence ---------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def save_forest(forest: Forest, path) -> None:
    """Persist a forest as a self-describing text file (bit-exact reload).

    Bags are not stored: they are regenerated from the recorded seed and
    sampling parameters, which fully determine them.
    """
    cfg = forest.config
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(FORMAT_TAG + "\n")
        fh.write(f"task {forest.task}\n")
        fh.write(f"n_classes {forest.n_classes}\n")
        fh.write(f"n_features {forest.n_features}\n")
        fh.write(f"n_train {forest.n_train}\n")
        fh.write(f"n_tree {cfg.n_tree}\n")
        fh.write(f"n_boot {cfg.n_boot}\n")
        fh.write(f"n_try {cfg.n_try}\n")
        fh.write(f"min_leaf {cfg.min_leaf}\n")
        fh.write(f"sampling {cfg.sampling}\n")
        fh.write(f"seed {cfg.seed}\n")
        names = ",".join(forest.feature_names) if forest.feature_names else "-"
        fh.write(f"feature_names {names}\n")
        for b, t in enumerate(forest.trees):
            fh.write(f"tree {b} {t.n_nodes}\n")
            fh.write("imp " + " ".join(_fmt(v) for v in t.importance) + "\n")
            for i in range(t.n_nodes):
                fh.write(f"{t.feature[i]} {_fmt(t.threshold[i])} {t.left[i]} "
                         f"{t.right[i]} {_fmt(t.value[i])} {t.count[i]}\n")
        fh.write("end\n")


def load_forest(path) -> Forest:
    """Reload a forest persisted by :func:`save_forest`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != FORMAT_TAG:
        raise TableFormatError(f"{path}: not a {FORMAT_TAG!r} file")
    head = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("tree "):
        key, _, val = lines[pos].partition(" ")
        head[key] = val
        pos += 1
    try:
        task = head["task"]
        n_classes = int(head["n_classes"])
        n_features = int(head["n_features"])
        n_train = int(head["n_train"])
        config = ForestConfig(n_tree=int(head["n_tree"]), n_boot=int(head["n_boot"]),
                              n_try=int(head["n_try"]), seed=int(head["seed"]),
                              sampling=head["sampling"], min_leaf=int(head["min_leaf"]))
        feature_names = None if head["feature_names"] == "-" else tuple(
            head["feature_names"].split(","))
    except (KeyError, ValueError) as exc:
        raise TableFormatError(f"{path}: malformed forest header: {exc}") from exc

    trees = []
    for b in range(config.n_tree):
        if pos >= len(lines) or not lines[pos].startswith("tree "):
            raise TableFormatError(f"{path}: expected 'tree {b}' at line {pos + 1}")
        parts = lines[pos].split()
        n_nodes = int(parts[2])
        pos += 1
        imp_parts = lines[pos].split()
        if imp_parts[0] != "imp":
            raise TableFormatError(f"{path}: expected importance line at line {pos + 1}")
        importance = np.array([float(v) for v in imp_parts[1:]], dtype=np.float64)
        pos += 1
        feature = np.empty(n_nodes, dtype=np.int64)
        threshold = np.empty(n_nodes, dtype=np.float64)
        left = np.empty(n_nodes, dtype=np.int64)
        right = np.empty(n_nodes, dtype=np.int64)
        value = np.empty(n_nodes, dtype=np.float64)
        count = np.empty(n_nodes, dtype=np.int64)
        for i in range(n_nodes):
            f, t, l, r, v, c = lines[pos].split()
            feature[i] = int(f)
            threshold[i] = float(t)
            left[i] = int(l)
            right[i] = int(r)
            value[i] = float(v)
            count[i] = int(c)
            pos += 1
        trees.append(DecisionTree(task, feature, threshold, left, right, value,
                                  count, importance, n_features, n_classes,
                                  config.n_try, config.min_leaf, config.seed))
    in_bag = np.zeros((config.n_tree, n_train), dtype=np.uint16)
    for b in range(config.n_tree):
        sample = _draw_sample(config.seed, b, n_train, config.n_boot, config.sampling)
        np.add.at(in_bag[b], sample, 1)
    return Forest(trees, in_bag, task, config, n_classes, n_features,
                  feature_names=feature_names)
