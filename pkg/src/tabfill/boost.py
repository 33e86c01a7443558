"""Gradient-boosted decision trees, written from scratch on a shared exact
greedy tree grower: squared-error boosting for regression and softmax
boosting (one tree per class per round) for classification, plus default
parameters and a seeded random hyperparameter search with an overfit guard.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._tree import grow_tree, predict_tree

DEFAULT_N_TREES = 100
DEFAULT_LEARNING_RATE = 0.3
DEFAULT_MAX_DEPTH = 6
SMALL_SAMPLE_MAX_DEPTH = 3
SMALL_SAMPLE_LIMIT = 100
DEFAULT_ROW_SUBSAMPLE = 0.7

SEARCH_MIN_TRIALS = 5
SEARCH_MAX_TRIALS = 50


@dataclass(frozen=True)
class BoostParams:
    n_trees: int = DEFAULT_N_TREES
    learning_rate: float = DEFAULT_LEARNING_RATE
    max_depth: int = DEFAULT_MAX_DEPTH
    min_samples_leaf: int = 1
    row_subsample: float = DEFAULT_ROW_SUBSAMPLE
    column_subsample: float = 1.0
    l2_leaf: float = 1.0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1 (got {self.n_trees})")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0 (got {self.learning_rate})")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1 (got {self.max_depth})")
        if self.min_samples_leaf < 1:
            raise ValueError(
                f"min_samples_leaf must be >= 1 (got {self.min_samples_leaf})"
            )
        if not 0 < self.row_subsample <= 1:
            raise ValueError(f"row_subsample must be in (0, 1] (got {self.row_subsample})")
        if not 0 < self.column_subsample <= 1:
            raise ValueError(
                f"column_subsample must be in (0, 1] (got {self.column_subsample})"
            )
        if self.l2_leaf < 0:
            raise ValueError(f"l2_leaf must be >= 0 (got {self.l2_leaf})")


@dataclass
class Tree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0])
        predict_tree(self.feature, self.threshold, self.left, self.right, self.value, x, out)
        return out


@dataclass
class BoostModel:
    task: str  # "regression" | "classification"
    n_classes: int  # 0 for regression
    base_score: float | np.ndarray
    trees: list[Tree]  # round-major; n_classes trees per round for classification
    params: BoostParams
    seed: int
    n_features: int
    train_loss: list[float]


def default_params(task: str, n_samples: int, n_features: int) -> BoostParams:
    """Out-of-box parameters; depth drops to 3 below 100 samples."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    depth = SMALL_SAMPLE_MAX_DEPTH if n_samples < SMALL_SAMPLE_LIMIT else DEFAULT_MAX_DEPTH
    return BoostParams(max_depth=depth)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _exact_mean(y: np.ndarray) -> float:
    # np.mean of a constant vector can drift by rounding; keep it exact
    if np.all(y == y[0]):
        return float(y[0])
    return float(np.mean(y))


def _subset(rng: np.random.Generator, n: int, frac: float) -> np.ndarray:
    if frac >= 1.0:
        return np.arange(n, dtype=np.int64)
    k = min(n, max(1, int(round(frac * n))))
    chosen = rng.permutation(n)[:k]
    chosen.sort()
    return chosen.astype(np.int64)


def _fit_one_tree(x, numer, denom, feat_ids, params: BoostParams) -> Tree:
    feature, threshold, left, right, value, count, n_nodes = grow_tree(
        np.ascontiguousarray(x),
        np.ascontiguousarray(numer),
        np.ascontiguousarray(denom),
        feat_ids,
        float(params.l2_leaf),
        params.max_depth,
        params.min_samples_leaf,
    )
    return Tree(
        feature=feature[:n_nodes].copy(),
        threshold=threshold[:n_nodes].copy(),
        left=left[:n_nodes].copy(),
        right=right[:n_nodes].copy(),
        value=value[:n_nodes].copy(),
        n_node_samples=count[:n_nodes].copy(),
    )


def _validate_xy(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("X must be 2-D")
    if x.shape[0] == 0:
        raise ValueError("X is empty")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"X has {x.shape[0]} rows but y has {y.shape[0]}")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if not np.isfinite(x).all():
        raise ValueError("X contains non-finite values")
    if not np.isfinite(y).all():
        raise ValueError("y contains non-finite values")
    return x, y


def fit_regressor(
    x: np.ndarray, y: np.ndarray, params: BoostParams | None = None, seed=0
) -> BoostModel:
    """Squared-error boosting: base score = mean(y), each round fits one tree
    to the current residuals on a seeded row subsample."""
    x, y = _validate_xy(x, y)
    n, d = x.shape
    if params is None:
        params = default_params("regression", n, d)
    rng = _as_rng(seed)
    base = _exact_mean(y)
    f = np.full(n, base)
    trees: list[Tree] = []
    losses: list[float] = []
    ones_cache: dict[int, np.ndarray] = {}
    for _ in range(params.n_trees):
        sub = _subset(rng, n, params.row_subsample)
        feats = _subset(rng, d, params.column_subsample)
        residual = y - f
        denom = ones_cache.setdefault(len(sub), np.ones(len(sub)))
        tree = _fit_one_tree(x[sub], residual[sub], denom, feats, params)
        f += params.learning_rate * tree.predict(x)
        trees.append(tree)
        losses.append(float(np.mean((y - f) ** 2)))
    return BoostModel(
        task="regression",
        n_classes=0,
        base_score=base,
        trees=trees,
        params=params,
        seed=seed if isinstance(seed, int) else -1,
        n_features=d,
        train_loss=losses,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logloss_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    p = softmax(logits)
    picked = np.clip(p[np.arange(len(y)), y], 1e-12, None)
    return float(-np.mean(np.log(picked)))


def classification_gradients(
    logits: np.ndarray, y: np.ndarray, n_classes: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class log-loss gradient p - 1[class] and curvature p(1-p)."""
    p = softmax(logits)
    onehot = np.zeros((len(y), n_classes))
    onehot[np.arange(len(y)), y] = 1.0
    return p - onehot, p * (1.0 - p)


def fit_classifier(
    x: np.ndarray,
    y: np.ndarray,
    params: BoostParams | None = None,
    seed=0,
    n_classes: int | None = None,
) -> BoostModel:
    """Softmax boosting with one tree per class per round.

    Trees fit the negative gradients; leaf values are
    -sum(g) / (sum(p(1-p)) + l2). Base scores are the log class priors.
    """
    y_codes = np.asarray(y)
    if not np.issubdtype(y_codes.dtype, np.integer):
        y_int = y_codes.astype(np.int64)
        if not np.all(y_int == y_codes):
            raise ValueError("class codes must be integers")
        y_codes = y_int
    else:
        y_codes = y_codes.astype(np.int64)
    x, _ = _validate_xy(x, y_codes.astype(np.float64))
    n, d = x.shape
    k = int(n_classes) if n_classes is not None else int(y_codes.max()) + 1
    if k < 2:
        raise ValueError(f"classification needs at least 2 classes (got {k})")
    if y_codes.min() < 0 or y_codes.max() >= k:
        raise ValueError(f"class codes must lie in [0, {k - 1}]")
    counts = np.bincount(y_codes, minlength=k)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValueError(f"classes absent from y: {missing.tolist()}")
    if params is None:
        params = default_params("classification", n, d)
    rng = _as_rng(seed)
    base = np.log(counts / n)
    f = np.tile(base, (n, 1))
    trees: list[Tree] = []
    losses: list[float] = []
    for _ in range(params.n_trees):
        sub = _subset(rng, n, params.row_subsample)
        feats = _subset(rng, d, params.column_subsample)
        grad, hess = classification_gradients(f, y_codes, k)
        x_sub = x[sub]
        for c in range(k):
            tree = _fit_one_tree(x_sub, -grad[sub, c], hess[sub, c], feats, params)
            f[:, c] += params.learning_rate * tree.predict(x)
            trees.append(tree)
        losses.append(logloss_from_logits(f, y_codes))
    return BoostModel(
        task="classification",
        n_classes=k,
        base_score=base,
        trees=trees,
        params=params,
        seed=seed if isinstance(seed, int) else -1,
        n_features=d,
        train_loss=losses,
    )


def predict(model: BoostModel, x: np.ndarray):
    """Regression: one value per row. Classification: (probabilities, codes)
    where codes are per-row argmax (ties to the lowest code)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(
            f"X must have {model.n_features} columns (got shape {x.shape})"
        )
    lr = model.params.learning_rate
    if model.task == "regression":
        out = np.full(x.shape[0], model.base_score, dtype=np.float64)
        for tree in model.trees:
            out += lr * tree.predict(x)
        return out
    k = model.n_classes
    logits = np.tile(np.asarray(model.base_score), (x.shape[0], 1))
    for i, tree in enumerate(model.trees):
        logits[:, i % k] += lr * tree.predict(x)
    probs = softmax(logits)
    return probs, np.argmax(probs, axis=1)


def _holdout_objective(x, y, task, params, perm, fit_seed) -> float:
    n = len(y)
    n_val = max(1, int(0.2 * n))
    val_idx = perm[:n_val]
    tr_idx = perm[n_val:]
    try:
        if task == "regression":
            model = fit_regressor(x[tr_idx], y[tr_idx], params, seed=fit_seed)
            val_loss = float(np.mean((predict(model, x[val_idx]) - y[val_idx]) ** 2))
            train_loss = float(np.mean((predict(model, x[tr_idx]) - y[tr_idx]) ** 2))
        else:
            y_int = y.astype(np.int64)
            k = int(y_int.max()) + 1
            if np.bincount(y_int[tr_idx], minlength=k).min() == 0:
                return np.inf
            model = fit_classifier(x[tr_idx], y_int[tr_idx], params, seed=fit_seed, n_classes=k)
            probs_val, _ = predict(model, x[val_idx])
            probs_tr, _ = predict(model, x[tr_idx])
            val_loss = float(
                -np.mean(np.log(np.clip(probs_val[np.arange(len(val_idx)), y_int[val_idx]], 1e-12, None)))
            )
            train_loss = float(
                -np.mean(np.log(np.clip(probs_tr[np.arange(len(tr_idx)), y_int[tr_idx]], 1e-12, None)))
            )
    except ValueError:
        return np.inf
    if not (np.isfinite(val_loss) and np.isfinite(train_loss)):
        return np.inf
    return val_loss + max(0.0, val_loss - train_loss)


def search_params(
    x: np.ndarray, y: np.ndarray, task: str, n_trials: int, seed: int = 0
) -> BoostParams:
    """Seeded random search over the boosting hyperparameters.

    The objective is the holdout loss on a seeded 80/20 split plus an
    overfit penalty of max(0, val_loss - train_loss); the earliest best
    trial wins. Row subsampling stays fixed at 70%.
    """
    if not SEARCH_MIN_TRIALS <= n_trials <= SEARCH_MAX_TRIALS:
        raise ValueError(
            f"n_trials must be in [{SEARCH_MIN_TRIALS}, {SEARCH_MAX_TRIALS}] (got {n_trials})"
        )
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(y))
    best_obj = np.inf
    best: BoostParams | None = None
    for t in range(n_trials):
        trial = BoostParams(
            learning_rate=float(np.exp(rng.uniform(np.log(0.01), np.log(0.3)))),
            max_depth=int(rng.integers(2, 9)),
            n_trees=int(rng.integers(50, 301)),
            min_samples_leaf=int(rng.choice(np.array([1, 5, 10, 20]))),
            row_subsample=DEFAULT_ROW_SUBSAMPLE,
            l2_leaf=float(np.exp(rng.uniform(np.log(0.1), np.log(10.0)))),
        )
        obj = _holdout_objective(x, y, task, trial, perm, fit_seed=seed + 100000 + t)
        if best is None or obj < best_obj:
            best_obj = obj
            best = trial
    assert best is not None
    return best
