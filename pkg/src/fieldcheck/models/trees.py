"""CART trees on top of the compiled/fallback kernels, plus the two ensembles."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .. import kernels
from ..core import derive_seed


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):  # preorder: parents precede children
            for child in (self.left[node], self.right[node]):
                if child >= 0:
                    depth[child] = depth[node] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        return kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.asarray(doc["threshold"], dtype=np.float64),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=np.float64),
            np.asarray(doc["n_samples"], dtype=np.int64),
        )


def grow_classification_tree(
    X: np.ndarray, y: np.ndarray, max_depth: int, min_leaf: int, n_sub: int, seed: int = 0
) -> Tree:
    """Gini tree whose leaves hold the add-one smoothed positive fraction."""
    y = np.asarray(y, dtype=np.float64)
    return Tree(
        *kernels.build_tree(
            X,
            y,
            y,
            np.ones_like(y),
            criterion=kernels.GINI,
            max_depth=max_depth,
            min_leaf=min_leaf,
            n_sub=n_sub,
            seed=seed,
            prior_num=1.0,
            prior_den=2.0,
        )
    )


def grow_boosting_tree(
    X: np.ndarray, residual: np.ndarray, hessian: np.ndarray, max_depth: int, min_leaf: int
) -> Tree:
    """Least-squares tree on the residuals with Newton leaf values sum(g)/sum(h)."""
    return Tree(
        *kernels.build_tree(
            X,
            residual,
            residual,
            hessian,
            criterion=kernels.MSE,
            max_depth=max_depth,
            min_leaf=min_leaf,
            n_sub=X.shape[1],
            seed=0,
        )
    )


def _forest_member(X, y, index, seed, max_depth, min_leaf, n_sub, bootstrap) -> Tree:
    tree_seed = derive_seed(seed, "tree", index)
    if bootstrap:
        rows = np.random.default_rng(tree_seed).integers(0, len(y), len(y))
        X, y = X[rows], y[rows]
    return grow_classification_tree(X, y, max_depth, min_leaf, n_sub, tree_seed)


def fit_forest(X, y, params, seed: int, workers: int = 1) -> list[Tree]:
    n_sub = params.n_sub(X.shape[1])
    args = (params.max_depth, params.min_leaf, n_sub, params.bootstrap)

    def one(i: int) -> Tree:
        return _forest_member(X, y, i, seed, *args)

    if workers <= 1:
        return [one(i) for i in range(params.n_trees)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(params.n_trees)))


def predict_forest(trees, X: np.ndarray) -> np.ndarray:
    total = np.zeros(X.shape[0])
    for tree in trees:
        total += tree.predict(X)
    return total / len(trees)


def fit_boosting(X, y, params) -> tuple[float, list[Tree]]:
    y = np.asarray(y, dtype=np.float64)
    mean = float(y.mean())
    base = float(np.log(mean / (1.0 - mean)))
    score = np.full(len(y), base)
    trees = []
    for _ in range(params.n_rounds):
        p = expit(score)
        residual = y - p
        tree = grow_boosting_tree(X, residual, p * (1.0 - p), params.max_depth, params.min_leaf)
        score += params.shrinkage * tree.predict(X)
        trees.append(tree)
    return base, trees


def predict_boosting(base: float, shrinkage: float, trees, X: np.ndarray) -> np.ndarray:
    score = np.full(X.shape[0], base)
    for tree in trees:
        score += shrinkage * tree.predict(X)
    return expit(score)
