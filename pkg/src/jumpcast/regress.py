"""Regression forecasters built on the raw feature matrix.

Three families share one design-matrix surface: ordinary least squares via
the normal equations (with an automatic ridge fallback for ill-conditioned
systems), degree-2 polynomial expansion feeding the same OLS path, and
additive regression trees grown greedily on second-order gain with leaf
weight -G/(H + lambda), optionally row-sampled by gradient magnitude
(keep the largest gradients, subsample and reweight the rest).

No feature scaling is applied anywhere; conditioning problems are handled
by the ridge fallback instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, NonFinite, WidthMismatch

RECIPE_IDENTITY = "identity"
RECIPE_DEGREE2 = "degree2"
RECIPE_DEGREE2_SQUARES = "degree2_squares_only"

_SPLIT_GAIN_FLOOR = 1e-12


@dataclass(frozen=True)
class DesignMatrix:
    """Predictor matrix plus aligned target vector.

    ``values`` holds raw predictors for the identity recipe; after
    :func:`poly_expand` it holds the expanded columns (leading constant
    included) and ``includes_intercept`` is set.
    """

    values: np.ndarray
    target: np.ndarray
    recipe: str = RECIPE_IDENTITY
    includes_intercept: bool = False
    n_raw_features: int = -1

    def __post_init__(self):
        if self.values.ndim != 2:
            raise WidthMismatch("design matrix must be 2-d")
        if self.values.shape[0] != self.target.shape[0]:
            raise WidthMismatch("X and y row counts differ")
        if not np.all(np.isfinite(self.values)) or not np.all(np.isfinite(self.target)):
            raise NonFinite("design matrix entries must be finite")
        if self.n_raw_features < 0:
            object.__setattr__(self, "n_raw_features", self.values.shape[1])


def design_matrix(x: np.ndarray, y: np.ndarray) -> DesignMatrix:
    return DesignMatrix(
        values=np.asarray(x, dtype=float), target=np.asarray(y, dtype=float)
    )


def _expand_degree2(x: np.ndarray, *, interactions: bool) -> np.ndarray:
    """[1, x_1..x_p, x_i*x_j for i <= j] (or squares only)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rows, p = x.shape
    cols = [np.ones((rows, 1)), x]
    with np.errstate(over="ignore"):  # overflow surfaces as a NonFinite error
        if interactions:
            for i in range(p):
                cols.append(x[:, i:] * x[:, i : i + 1])
        else:
            cols.append(x * x)
    return np.hstack(cols)


def expanded_width(p: int, *, interactions: bool = True) -> int:
    return 1 + p + (p * (p + 1) // 2 if interactions else p)


def poly_expand(dm: DesignMatrix, degree: int = 2, *, interactions: bool = True) -> DesignMatrix:
    """Degree-2 basis expansion of a raw design matrix."""
    if degree != 2:
        raise ValueError("only degree 2 is supported")
    if dm.recipe != RECIPE_IDENTITY:
        raise ValueError("design matrix is already expanded")
    expanded = _expand_degree2(dm.values, interactions=interactions)
    if not np.all(np.isfinite(expanded)):
        raise NonFinite("degree-2 expansion overflowed to non-finite values")
    return DesignMatrix(
        values=expanded,
        target=dm.target,
        recipe=RECIPE_DEGREE2 if interactions else RECIPE_DEGREE2_SQUARES,
        includes_intercept=True,
        n_raw_features=dm.values.shape[1],
    )


@dataclass(frozen=True)
class LinearModel:
    """OLS coefficients, intercept first, plus the expansion recipe."""

    coefficients: np.ndarray
    recipe: str
    n_features: int
    ridge_fallback: bool = False
    ridge_penalty: float = 0.0
    condition_number: float = 0.0

    def design_row(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise WidthMismatch(
                f"model expects {self.n_features} raw features, got {x.shape[1]}"
            )
        if self.recipe == RECIPE_IDENTITY:
            return np.hstack([np.ones((x.shape[0], 1)), x])
        return _expand_degree2(x, interactions=self.recipe == RECIPE_DEGREE2)

    def predict(self, x: np.ndarray) -> np.ndarray | float:
        scalar = np.asarray(x).ndim == 1
        out = self.design_row(x) @ self.coefficients
        return float(out[0]) if scalar else out


def ols_fit(dm: DesignMatrix, *, cond_threshold: float = 1e12) -> LinearModel:
    """Least squares through the normal equations.

    When X'X is numerically rank deficient (condition number above the
    threshold, or non-finite), a small ridge penalty proportional to
    trace(X'X)/p is added and the model is flagged; no error is raised.
    """
    if dm.includes_intercept:
        design = dm.values
    else:
        design = np.hstack([np.ones((dm.values.shape[0], 1)), dm.values])
    gram = design.T @ design
    rhs = design.T @ dm.target
    cond = float(np.linalg.cond(gram))
    penalty = 0.0
    fallback = not np.isfinite(cond) or cond > cond_threshold
    if fallback:
        penalty = 1e-8 * float(np.trace(gram)) / gram.shape[0]
        gram = gram + penalty * np.eye(gram.shape[0])
    try:
        beta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        # Exactly singular even after the ridge bump: fall back to the
        # pseudo-inverse solution and keep the flag.
        fallback = True
        beta = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return LinearModel(
        coefficients=beta,
        recipe=dm.recipe,
        n_features=dm.n_raw_features,
        ridge_fallback=fallback,
        ridge_penalty=penalty,
        condition_number=cond,
    )


# --- gradient-boosted trees ---


@dataclass(frozen=True)
class GossParams:
    top_fraction: float  # kept outright, ranked by |gradient|
    rest_fraction: float  # uniformly sampled from the remainder

    def __post_init__(self):
        if not (0.0 < self.top_fraction <= 1.0):
            raise ValueError("top_fraction must be in (0, 1]")
        if self.rest_fraction < 0.0:
            raise ValueError("rest_fraction must be >= 0")
        if self.top_fraction + self.rest_fraction > 1.0 + 1e-12:
            raise ValueError("top_fraction + rest_fraction must be <= 1")


@dataclass(frozen=True)
class GbtParams:
    rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 4
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    goss: GossParams | None = None
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in (0, 1]")
        if self.reg_lambda < 0.0:
            raise ValueError("reg_lambda must be >= 0")


@dataclass(frozen=True)
class RegressionTree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            cur = node[active]
            go_left = x[active, self.feature[cur]] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.value[node]


def _grow_tree(
    x: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    *,
    max_depth: int,
    reg_lambda: float,
    min_child_weight: float,
) -> RegressionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def grow(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        g_sum = float(g[idx].sum())
        h_sum = float(h[idx].sum())
        best_gain = _SPLIT_GAIN_FLOOR
        best = None
        if depth < max_depth and idx.size >= 2:
            parent_score = g_sum * g_sum / (h_sum + reg_lambda)
            for f in range(x.shape[1]):
                order = np.argsort(x[idx, f], kind="stable")
                ordered = idx[order]
                xs = x[ordered, f]
                gl = np.cumsum(g[ordered])[:-1]
                hl = np.cumsum(h[ordered])[:-1]
                gr = g_sum - gl
                hr = h_sum - hl
                ok = (xs[:-1] < xs[1:]) & (hl >= min_child_weight) & (hr >= min_child_weight)
                if not ok.any():
                    continue
                gain = 0.5 * (
                    gl**2 / (hl + reg_lambda)
                    + gr**2 / (hr + reg_lambda)
                    - parent_score
                )
                gain[~ok] = -np.inf
                k = int(np.argmax(gain))
                if gain[k] > best_gain:
                    best_gain = float(gain[k])
                    best = (f, 0.5 * (xs[k] + xs[k + 1]), ordered[: k + 1], ordered[k + 1 :])
        if best is None:
            value[node] = -g_sum / (h_sum + reg_lambda)
            return node
        f, thr, idx_l, idx_r = best
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx_l, depth + 1)
        right[node] = grow(idx_r, depth + 1)
        return node

    grow(np.arange(x.shape[0]), 0)
    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
    )


@dataclass(frozen=True)
class GbtEnsemble:
    """Additive trees: prediction = base_score + lr * sum of routed leaves."""

    trees: tuple[RegressionTree, ...]
    base_score: float
    params: GbtParams
    train_losses: tuple[float, ...] = field(default=())
    n_features: int = -1

    def predict(self, x: np.ndarray) -> np.ndarray | float:
        arr = np.atleast_2d(np.asarray(x, dtype=float))
        scalar = np.asarray(x).ndim == 1
        if self.n_features >= 0 and arr.shape[1] != self.n_features:
            raise WidthMismatch(
                f"model expects {self.n_features} features, got {arr.shape[1]}"
            )
        out = np.full(arr.shape[0], self.base_score)
        for tree in self.trees:
            out += self.params.learning_rate * tree.predict(arr)
        return float(out[0]) if scalar else out


def goss_sample(
    gradients: np.ndarray, a: float, b: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient-based one-side sample.

    Keeps the ceil(a*n) largest |gradient| rows at weight 1 and draws
    ceil(b*n) uniformly from the rest at weight (1-a)/b, which keeps the
    weighted gradient sum an unbiased estimate of the full-sample sum.
    """
    gradients = np.asarray(gradients, dtype=float)
    n = gradients.size
    if n == 0:
        raise EmptyInput("no gradients to sample")
    GossParams(a, b)  # validates the fractions
    order = np.argsort(-np.abs(gradients), kind="stable")
    n_top = min(n, math.ceil(a * n - 1e-9))
    top = order[:n_top]
    rest = order[n_top:]
    if b <= 0.0 or rest.size == 0:
        return top, np.ones(n_top)
    n_rest = min(rest.size, math.ceil(b * n - 1e-9))
    sampled = rng.choice(rest, size=n_rest, replace=False)
    indices = np.concatenate([top, sampled])
    weights = np.concatenate([np.ones(n_top), np.full(n_rest, (1.0 - a) / b)])
    return indices, weights


def gbt_fit(dm: DesignMatrix, params: GbtParams) -> GbtEnsemble:
    """Boost squared-error trees; records the training MSE after each round.

    A constant target yields a base-score-only ensemble. Without row
    sampling the recorded per-round loss is non-increasing.
    """
    x = dm.values
    y = dm.target
    if x.shape[0] < 2:
        raise EmptyInput("need at least 2 rows")
    base = float(y.mean())
    if np.ptp(y) == 0.0:
        return GbtEnsemble(trees=(), base_score=base, params=params, n_features=x.shape[1])

    rng = np.random.default_rng(params.seed)
    pred = np.full(y.shape, base)
    trees: list[RegressionTree] = []
    losses: list[float] = []
    for _ in range(params.rounds):
        grad = pred - y
        hess = np.ones_like(grad)
        if params.goss is not None:
            idx, w = goss_sample(
                grad, params.goss.top_fraction, params.goss.rest_fraction, rng
            )
            tree = _grow_tree(
                x[idx],
                grad[idx] * w,
                hess[idx] * w,
                max_depth=params.max_depth,
                reg_lambda=params.reg_lambda,
                min_child_weight=params.min_child_weight,
            )
        else:
            tree = _grow_tree(
                x,
                grad,
                hess,
                max_depth=params.max_depth,
                reg_lambda=params.reg_lambda,
                min_child_weight=params.min_child_weight,
            )
        step = tree.predict(x)
        if np.any(step != 0.0):
            pred = pred + params.learning_rate * step
            trees.append(tree)
        losses.append(float(((y - pred) ** 2).mean()))
    return GbtEnsemble(
        trees=tuple(trees),
        base_score=base,
        params=params,
        train_losses=tuple(losses),
        n_features=x.shape[1],
    )


def predict(model: LinearModel | GbtEnsemble, x: np.ndarray) -> np.ndarray | float:
    """Apply a fitted model to raw feature rows."""
    return model.predict(x)
