"""Gradient-boosted trees with sparsity-aware (default-direction) splits.

Each split enumerates thresholds over the observed values of a feature and
tries routing the node's missing-valued records to either child, keeping
whichever direction yields the larger loss reduction. Prediction sends a
missing value down the learned default direction, so any missingness
pattern, including an all-missing record, has a defined prediction.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .data import ObservationTable
from .metrics import EvalMetrics, classification_metrics

logger = logging.getLogger(__name__)

OBJECTIVES = ("softmax_multiclass", "binary_logistic_ovr")
_EPS = 1e-16


# gains closer than this (relative) count as ties; the earlier candidate wins
TIE_TOL = 1e-9


class TrainingError(ValueError):
    """Raised when a dataset cannot be used to fit a model."""


@dataclass(frozen=True)
class LearnerParams:
    num_rounds: int = 50
    learning_rate: float = 0.3
    max_depth: int = 4
    min_leaf_count: int = 2
    lambda_regularization: float = 1.0
    objective: str | None = None  # None picks softmax for <= 5 classes
    seed: int = 0

    def __post_init__(self):
        if self.num_rounds < 1 or self.max_depth < 1 or self.min_leaf_count < 1:
            raise ValueError("num_rounds, max_depth and min_leaf_count must be positive")
        if self.learning_rate < 0 or self.lambda_regularization < 0:
            raise ValueError("learning_rate and lambda_regularization must be non-negative")
        if self.objective is not None and self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")

    def resolve_objective(self, n_classes: int) -> str:
        if self.objective is not None:
            return self.objective
        return "softmax_multiclass" if n_classes <= 5 else "binary_logistic_ovr"

    def to_dict(self) -> dict:
        return asdict(self)


class Tree:
    """A regression tree stored as flat node arrays; ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, default_left, left, right, value, gain, cover):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.default_left = np.asarray(default_left, dtype=bool)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.gain = np.asarray(gain, dtype=np.float64)
        self.cover = np.asarray(cover, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _apply(X, self.feature, self.threshold, self.default_left, self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self, feature_names: Sequence[str], node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"leaf": float(self.value[node]), "cover": float(self.cover[node])}
        return {
            "feature": feature_names[self.feature[node]],
            "threshold": float(self.threshold[node]),
            "default": "left" if self.default_left[node] else "right",
            "gain": float(self.gain[node]),
            "cover": float(self.cover[node]),
            "left": self.to_dict(feature_names, int(self.left[node])),
            "right": self.to_dict(feature_names, int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, d: dict, feature_names: Sequence[str]) -> "Tree":
        lookup = {f: k for k, f in enumerate(feature_names)}
        cols = {k: [] for k in ("feature", "threshold", "default_left", "left",
                                "right", "value", "gain", "cover")}

        def visit(n: dict) -> int:
            me = len(cols["feature"])
            for k in cols:
                cols[k].append(0)
            cols["cover"][me] = n.get("cover", 0.0)
            if "leaf" in n:
                cols["feature"][me] = -1
                cols["left"][me] = cols["right"][me] = -1
                cols["value"][me] = n["leaf"]
                return me
            cols["feature"][me] = lookup[n["feature"]]
            cols["threshold"][me] = n["threshold"]
            cols["default_left"][me] = n["default"] == "left"
            cols["gain"][me] = n.get("gain", 0.0)
            cols["left"][me] = visit(n["left"])
            cols["right"][me] = visit(n["right"])
            return me

        visit(d)
        return cls(**cols)


def best_split_reference(X, g, h, rows, lam, min_leaf):
    """Best (gain, feature, threshold, default_left) for the records ``rows``.

    Vectorised numpy formulation, kept as the reference the compiled scan
    in ``_split_scan`` is tested against.
    """
    Xn = X[rows]
    m, n_feat = Xn.shape
    gn, hn = g[rows], h[rows]
    G, H = gn.sum(), hn.sum()
    order = np.argsort(Xn, axis=0, kind="stable")  # NaN sorts last
    xs = np.take_along_axis(Xn, order, axis=0)
    cg = np.cumsum(gn[order], axis=0)
    ch = np.cumsum(hn[order], axis=0)
    n_obs = (~np.isnan(Xn)).sum(0)
    last = np.maximum(n_obs - 1, 0)
    cols = np.arange(n_feat)
    G_obs = np.where(n_obs > 0, cg[last, cols], 0.0)
    H_obs = np.where(n_obs > 0, ch[last, cols], 0.0)
    G_mis, H_mis, n_mis = G - G_obs, H - H_obs, m - n_obs

    # split after sorted position p: left = observed[:p+1]
    GL, HL = cg[:-1], ch[:-1]
    GR, HR = G_obs - GL, H_obs - HL
    nL = np.arange(1, m)[:, None]
    nR = n_obs[None, :] - nL
    valid = (nL < n_obs[None, :]) & (xs[:-1] < xs[1:])
    parent = G * G / (H + lam)
    with np.errstate(invalid="ignore"):
        # missing routed left
        gain_l = (GL + G_mis) ** 2 / (HL + H_mis + lam) + GR**2 / (HR + lam) - parent
        ok_l = valid & (nL + n_mis >= min_leaf) & (nR >= min_leaf)
        # missing routed right
        gain_r = GL**2 / (HL + lam) + (GR + G_mis) ** 2 / (HR + H_mis + lam) - parent
        ok_r = valid & (nL >= min_leaf) & (nR + n_mis >= min_leaf)
    gain_l = np.where(ok_l, 0.5 * gain_l, -np.inf)
    gain_r = np.where(ok_r, 0.5 * gain_r, -np.inf)
    # with no missing values at the node both directions tie; the heavier child
    # becomes the default
    no_mis = (n_mis == 0)[None, :]
    with np.errstate(invalid="ignore"):
        tol_lr = TIE_TOL * (1 + np.abs(gain_r))
        default_left = np.where(no_mis, HL >= HR, gain_l >= gain_r - tol_lr)
    gain = np.maximum(gain_l, gain_r)
    if gain.size == 0:
        return None
    # feature-major scan; a candidate must beat the incumbent by more than the
    # tie tolerance, so near-equal gains resolve the same way whatever the
    # summation order
    best, f, p = -np.inf, -1, -1
    for ff in range(n_feat):
        for pp in np.flatnonzero(np.isfinite(gain[:, ff])):
            if f < 0 or gain[pp, ff] > best + TIE_TOL * (1 + abs(best)):
                best, f, p = gain[pp, ff], ff, int(pp)
    if not np.isfinite(best) or best <= 1e-12:
        return None
    lo, hi = xs[p, f], xs[p + 1, f]
    thr = 0.5 * (lo + hi)
    if not lo < thr:
        thr = hi
    return float(best), int(f), float(thr), bool(default_left[p, f])


@njit(cache=True)
def _split_scan(X, g, h, order, lo, hi, lam, min_leaf):
    """Best split of the node whose rows are ``order[f, lo:hi]`` for every f.

    Each ``order[f, lo:hi]`` lists the node's rows sorted by feature f with
    missing values last.
    """
    m = hi - lo
    G = 0.0
    H = 0.0
    for k in range(lo, hi):
        r = order[0, k]
        G += g[r]
        H += h[r]
    parent = G * G / (H + lam)
    best_gain = -np.inf
    best_f = -1
    best_lo = 0.0
    best_hi = 0.0
    best_dl = True
    for f in range(X.shape[1]):
        n_obs = 0
        G_obs = 0.0
        H_obs = 0.0
        for k in range(lo, hi):
            r = order[f, k]
            if np.isnan(X[r, f]):
                break
            G_obs += g[r]
            H_obs += h[r]
            n_obs += 1
        if n_obs < 2:
            continue
        G_mis = G - G_obs
        H_mis = H - H_obs
        n_mis = m - n_obs
        GL = 0.0
        HL = 0.0
        for p in range(n_obs - 1):
            r = order[f, lo + p]
            GL += g[r]
            HL += h[r]
            a = X[r, f]
            b = X[order[f, lo + p + 1], f]
            if not a < b:
                continue
            nL = p + 1
            nR = n_obs - nL
            GR = G_obs - GL
            HR = H_obs - HL
            gain_l = -np.inf
            gain_r = -np.inf
            if nL + n_mis >= min_leaf and nR >= min_leaf:
                gain_l = 0.5 * ((GL + G_mis) ** 2 / (HL + H_mis + lam)
                                + GR ** 2 / (HR + lam) - parent)
            if nL >= min_leaf and nR + n_mis >= min_leaf:
                gain_r = 0.5 * (GL ** 2 / (HL + lam)
                                + (GR + G_mis) ** 2 / (HR + H_mis + lam) - parent)
            if n_mis == 0:
                dl = HL >= HR
            else:
                dl = gain_l >= gain_r - TIE_TOL * (1 + abs(gain_r))
            gain = max(gain_l, gain_r)
            if gain > -np.inf and (best_f < 0 or gain > best_gain + TIE_TOL * (1 + abs(best_gain))):
                best_gain = gain
                best_f = f
                best_lo = a
                best_hi = b
                best_dl = dl
    return best_gain, best_f, best_lo, best_hi, best_dl


def presort(X: np.ndarray) -> np.ndarray:
    """Per-feature row order (features x rows), ascending with missing last."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def find_split(X, g, h, rows, lam, min_leaf):
    """Compiled split search over ``rows``; same contract as the reference."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.int64)
    order = np.ascontiguousarray(rows[presort(X[rows])])
    gain, f, a, b, dleft = _split_scan(X, np.ascontiguousarray(g, dtype=np.float64),
                                       np.ascontiguousarray(h, dtype=np.float64),
                                       order, 0, len(rows), lam, min_leaf)
    if f < 0 or not gain > 1e-12:
        return None
    thr = 0.5 * (a + b)
    if not a < thr:
        thr = b
    return float(gain), int(f), float(thr), bool(dleft)


@njit(cache=True)
def _grow(X, g, h, order0, max_depth, min_leaf, lam, lr):
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    default_left = np.zeros(max_nodes, dtype=np.bool_)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    gain = np.zeros(max_nodes)
    cover = np.zeros(max_nodes)
    order = order0.copy()
    n_feat, n = order.shape
    goes_left = np.zeros(X.shape[0], dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)
    # node i owns rows order[:, lo[i]:hi[i]]
    lo = np.zeros(max_nodes, dtype=np.int64)
    hi = np.zeros(max_nodes, dtype=np.int64)
    depth = np.zeros(max_nodes, dtype=np.int64)
    stack = np.zeros(max_nodes, dtype=np.int64)
    hi[0] = n
    n_nodes = 1
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        a0 = lo[node]
        b0 = hi[node]
        G = 0.0
        H = 0.0
        for k in range(a0, b0):
            G += g[order[0, k]]
            H += h[order[0, k]]
        cover[node] = H
        split_found = False
        if depth[node] < max_depth and b0 - a0 >= 2 * min_leaf:
            best, f, a, b, dl = _split_scan(X, g, h, order, a0, b0, lam, min_leaf)
            if f >= 0 and best > 1e-12:
                split_found = True
                thr = 0.5 * (a + b)
                if not a < thr:
                    thr = b
                n_left = 0
                for k in range(a0, b0):
                    r = order[0, k]
                    v = X[r, f]
                    goes_left[r] = dl if np.isnan(v) else v < thr
                    if goes_left[r]:
                        n_left += 1
                # stable partition keeps every feature's segment sorted
                for ff in range(n_feat):
                    kl = a0
                    kr = 0
                    for k in range(a0, b0):
                        r = order[ff, k]
                        if goes_left[r]:
                            order[ff, kl] = r
                            kl += 1
                        else:
                            buf[kr] = r
                            kr += 1
                    for k in range(kr):
                        order[ff, kl + k] = buf[k]
                mid = a0 + n_left
                ln = n_nodes
                rn = n_nodes + 1
                n_nodes += 2
                feature[node] = f
                threshold[node] = thr
                default_left[node] = dl
                gain[node] = best
                left[node] = ln
                right[node] = rn
                lo[ln] = a0
                hi[ln] = mid
                lo[rn] = mid
                hi[rn] = b0
                depth[ln] = depth[node] + 1
                depth[rn] = depth[node] + 1
                stack[sp] = rn
                stack[sp + 1] = ln
                sp += 2
        if not split_found:
            value[node] = -lr * G / (H + lam)
    return (feature[:n_nodes], threshold[:n_nodes], default_left[:n_nodes], left[:n_nodes],
            right[:n_nodes], value[:n_nodes], gain[:n_nodes], cover[:n_nodes])


@njit(cache=True)
def _apply(X, feature, threshold, default_left, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            v = X[i, feature[node]]
            go_left = default_left[node] if np.isnan(v) else v < threshold[node]
            node = left[node] if go_left else right[node]
        out[i] = node
    return out


def build_tree(X, g, h, params: LearnerParams, order=None) -> Tree:
    X = np.ascontiguousarray(X, dtype=np.float64)
    order = presort(X) if order is None else order
    arrays = _grow(X, np.ascontiguousarray(g, dtype=np.float64),
                   np.ascontiguousarray(h, dtype=np.float64), order, params.max_depth,
                   params.min_leaf_count, float(params.lambda_regularization),
                   float(params.learning_rate))
    return Tree(*arrays)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class BoostedModel:
    """Trained booster. ``trees[c]`` holds the per-round trees for class c."""

    def __init__(self, classes, feature_names, params, objective, base_margin, trees,
                 loss_history=()):
        self.classes = tuple(classes)
        self.feature_names = tuple(feature_names)
        self.params = params
        self.objective = objective
        self.base_margin = np.asarray(base_margin, dtype=np.float64)
        self.trees = trees
        self.loss_history = tuple(loss_history)
        self._col = {f: k for k, f in enumerate(self.feature_names)}

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"expected {len(self.feature_names)} feature columns, got shape {X.shape}"
            )
        out = np.tile(self.base_margin, (X.shape[0], 1))
        for c, trees in enumerate(self.trees):
            for tree in trees:
                out[:, c] += tree.predict(X)
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        z = self.margin(X)
        if self.objective == "softmax_multiclass":
            return _softmax(z)
        p = _sigmoid(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.argmax(self.predict_proba(X), axis=1)
        return np.array(self.classes, dtype=object)[idx]

    def project(self, values: np.ndarray, feature_names: Sequence[str]) -> np.ndarray:
        """Re-align columns of a wider or narrower table to this model's features.

        Model features absent from ``feature_names`` become missing; extra
        columns are ignored.
        """
        values = np.asarray(values, dtype=np.float64)
        out = np.full((values.shape[0], len(self.feature_names)), np.nan)
        src = {f: k for k, f in enumerate(feature_names)}
        for k, f in enumerate(self.feature_names):
            if f in src:
                out[:, k] = values[:, src[f]]
        return out

    def feature_importance(self) -> list[tuple[str, float]]:
        total = np.zeros(len(self.feature_names))
        for trees in self.trees:
            for tree in trees:
                internal = tree.feature >= 0
                np.add.at(total, tree.feature[internal], tree.gain[internal])
        return [(f, float(v)) for f, v in zip(self.feature_names, total)]

    def to_dict(self) -> dict:
        return {
            "classes": [str(c) for c in self.classes],
            "feature_names": list(self.feature_names),
            "params": self.params.to_dict(),
            "objective": self.objective,
            "base_margin": self.base_margin.tolist(),
            "trees": [[t.to_dict(self.feature_names) for t in ts] for ts in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedModel":
        names = d["feature_names"]
        return cls(
            classes=d["classes"],
            feature_names=names,
            params=LearnerParams(**d["params"]),
            objective=d["objective"],
            base_margin=d["base_margin"],
            trees=[[Tree.from_dict(t, names) for t in ts] for ts in d["trees"]],
        )


def predict(model: BoostedModel, record: Mapping[str, float | None]):
    """Classify one record given as ``{feature: value or None}``.

    Model features missing from the record are treated as absent.
    Returns the predicted class and a ``{class: score}`` dict.
    """
    unknown = [f for f in record if f not in model._col]
    if unknown:
        raise ValueError(f"unknown feature ids: {unknown}")
    x = np.full((1, len(model.feature_names)), np.nan)
    for f, v in record.items():
        if v is not None:
            x[0, model._col[f]] = float(v)
    scores = model.predict_proba(x)[0]
    k = int(np.argmax(scores))
    return model.classes[k], {c: float(s) for c, s in zip(model.classes, scores)}


def fit_arrays(X, y, feature_names, params: LearnerParams, classes=None) -> BoostedModel:
    """Fit on a float matrix (NaN = absent) and a label vector."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[1] == 0:
        raise TrainingError("cannot train on an empty feature set")
    if X.shape[0] < 2:
        raise TrainingError("at least two records are required")
    classes = tuple(sorted(set(y.tolist()))) if classes is None else tuple(classes)
    if len(set(y.tolist())) < 2:
        raise TrainingError("training data contains a single class")
    K = len(classes)
    code = {c: k for k, c in enumerate(classes)}
    Y = np.zeros((len(y), K))
    Y[np.arange(len(y)), [code[v] for v in y.tolist()]] = 1.0
    prior = np.clip(Y.mean(0), 1e-6, 1 - 1e-6)
    objective = params.resolve_objective(K)
    if objective == "softmax_multiclass":
        base = np.log(prior)
    else:
        base = np.log(prior / (1 - prior))
    margin = np.tile(base, (len(y), 1))
    order = presort(X)
    trees = [[] for _ in range(K)]
    history = []

    def loss(z):
        if objective == "softmax_multiclass":
            p = _softmax(z)
            return float(-np.mean(np.log(np.maximum((p * Y).sum(1), _EPS))))
        p = _sigmoid(z)
        ll = Y * np.log(np.maximum(p, _EPS)) + (1 - Y) * np.log(np.maximum(1 - p, _EPS))
        return float(-ll.sum(1).mean())

    history.append(loss(margin))
    for _ in range(params.num_rounds):
        if objective == "softmax_multiclass":
            p = _softmax(margin)
            hess = np.maximum(2.0 * p * (1.0 - p), _EPS)
        else:
            p = _sigmoid(margin)
            hess = np.maximum(p * (1.0 - p), _EPS)
        grad = p - Y
        update = np.zeros_like(margin)
        for c in range(K):
            tree = build_tree(X, grad[:, c], hess[:, c], params, order)
            trees[c].append(tree)
            update[:, c] = tree.predict(X)
        margin += update
        history.append(loss(margin))
    return BoostedModel(classes, feature_names, params, objective, base, trees, history)


def train(table: ObservationTable, params: LearnerParams | None = None) -> BoostedModel:
    if table.labels is None:
        raise TrainingError("table has no labels")
    return fit_arrays(table.values, table.labels, table.feature_names, params or LearnerParams())


def stratified_folds(y, k: int, seed: int = 0) -> np.ndarray:
    """Fold id per record; each class is shuffled and dealt round-robin."""
    y = np.asarray(y)
    if k > len(y):
        raise ValueError(f"{k} folds requested for {len(y)} records")
    if k < 2:
        raise ValueError("at least two folds are required")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        fold[idx] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    return fold


def _fit_or_constant(X, y, names, params, classes):
    try:
        return fit_arrays(X, y, names, params, classes)
    except TrainingError:
        if len(set(np.asarray(y).tolist())) == 1:
            return None
        raise


def cross_validate_arrays(X, y, feature_names, params: LearnerParams,
                          scheme: str = "kfold", k: int = 10, seed: int = 0) -> EvalMetrics:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = len(y)
    if scheme == "loocv":
        fold = np.arange(n)
    elif scheme == "kfold":
        fold = stratified_folds(y, k, seed)
    else:
        raise ValueError(f"unknown CV scheme {scheme!r}")
    classes = tuple(sorted(set(y.tolist())))
    pred = np.empty(n, dtype=object)
    per_fold = []
    short = 0
    for f in np.unique(fold):
        test = fold == f
        model = _fit_or_constant(X[~test], y[~test], feature_names, params, classes)
        if model is None:
            # a training fold with one class can only predict that class
            pred[test] = y[~test][0]
        else:
            pred[test] = model.predict(X[test])
        if scheme == "kfold":
            short += bool(set(classes) - set(y[test].tolist()))
            per_fold.append(classification_metrics(y[test], pred[test]))
    if short:
        logger.warning("%d of %d folds lack a class; per-fold precision of an unpredicted "
                       "class is taken as 0", short, len(per_fold))
    overall = classification_metrics(y, pred)
    return EvalMetrics(overall.accuracy, overall.precision, overall.recall, overall.f1,
                       tuple(per_fold))


def cross_validate(table: ObservationTable, params: LearnerParams | None = None,
                   scheme: str = "kfold", k: int = 10, seed: int = 0) -> EvalMetrics:
    """Stratified k-fold or leave-one-out evaluation, macro-averaged over classes.

    Headline metrics pool the out-of-fold predictions; ``per_fold`` keeps
    each k-fold split's own metrics.
    """
    if table.labels is None:
        raise TrainingError("table has no labels")
    return cross_validate_arrays(table.values, table.labels, table.feature_names,
                                 params or LearnerParams(), scheme, k, seed)


def feature_importance(model: BoostedModel) -> list[tuple[str, float]]:
    return model.feature_importance()


def column_means(table: ObservationTable) -> np.ndarray:
    observed = table.observed
    empty = np.flatnonzero(~observed.any(axis=0))
    if empty.size:
        names = ", ".join(table.feature_names[j] for j in empty)
        raise ValueError(f"cannot impute fully missing feature(s): {names}")
    return np.nanmean(table.values, axis=0)


def mean_impute(table: ObservationTable, means: np.ndarray | None = None) -> ObservationTable:
    """Replace absent cells with the feature's observed mean.

    ``means`` lets a validation table be filled with training-set means.
    """
    means = column_means(table) if means is None else np.asarray(means, dtype=np.float64)
    values = np.where(np.isnan(table.values), means[None, :], table.values)
    return table.with_values(values)
