"""Logistic regression, random forest and gradient boosting behind one interface."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..core import FieldcheckError
from .logistic import fit_logistic, logistic_gradient, logistic_loss, predict_logistic
from .params import BoostParams, ClassifierSpec, Family, ForestParams, LogisticParams
from .trees import Tree, fit_boosting, fit_forest, grow_classification_tree, predict_boosting, predict_forest

__all__ = [
    "BoostParams",
    "ClassifierSpec",
    "Family",
    "ForestParams",
    "LogisticParams",
    "TrainedModel",
    "Tree",
    "grow_classification_tree",
    "logistic_gradient",
    "logistic_loss",
    "model_from_json",
    "model_to_json",
    "predict_proba",
    "train",
]

MODEL_FORMAT = "fieldcheck.model"
MODEL_VERSION = 1


class FeatureMismatchError(FieldcheckError, ValueError):
    pass


@dataclass(frozen=True)
class TrainedModel:
    spec: ClassifierSpec
    n_features: int
    weights: np.ndarray | None = None
    trees: tuple[Tree, ...] = ()
    base_score: float = 0.0
    # set when the training labels held a single class
    constant: float | None = None
    loss_history: tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def family(self) -> Family:
        return self.spec.family


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {X.shape}")
    if np.isnan(X).any():
        raise ValueError("feature matrix contains NaN")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains infinite values")
    return X


def train(spec: ClassifierSpec, X, y) -> TrainedModel:
    X = _check_matrix(X)
    y = np.asarray(y)
    if X.shape[0] < 1:
        raise ValueError("training needs at least one row")
    if y.shape != (X.shape[0],):
        raise ValueError(f"label vector has shape {y.shape}, expected ({X.shape[0]},)")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.float64)
    d = X.shape[1]
    p = spec.params

    if spec.family is Family.LOGISTIC:
        w, losses = fit_logistic(X, y, p.learning_rate, p.epochs, p.l2)
        return TrainedModel(spec, d, weights=w, loss_history=tuple(losses))

    if y.min() == y.max():
        return TrainedModel(spec, d, constant=float(y[0]))
    if spec.family is Family.RANDOM_FOREST:
        trees = fit_forest(X, y, p, spec.seed, spec.workers)
        return TrainedModel(spec, d, trees=tuple(trees))
    base, trees = fit_boosting(X, y, p)
    return TrainedModel(spec, d, trees=tuple(trees), base_score=base)


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    X = _check_matrix(X)
    if X.shape[1] != model.n_features:
        raise FeatureMismatchError(f"model expects {model.n_features} feature columns, got {X.shape[1]}")
    if model.constant is not None:
        return np.full(X.shape[0], model.constant)
    if model.family is Family.LOGISTIC:
        out = predict_logistic(model.weights, X)
    elif model.family is Family.RANDOM_FOREST:
        out = predict_forest(model.trees, X)
    else:
        out = predict_boosting(model.base_score, model.spec.params.shrinkage, model.trees, X)
    return np.clip(out, 0.0, 1.0)


def model_to_json(model: TrainedModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": model.spec.to_dict(),
        "n_features": model.n_features,
        "constant": model.constant,
        "base_score": model.base_score,
        "weights": None if model.weights is None else model.weights.tolist(),
        "trees": [t.to_dict() for t in model.trees],
    }
    return json.dumps(doc, sort_keys=True) + "\n"


def model_from_json(text: str) -> TrainedModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise FieldcheckError(f"not a fieldcheck model document (format={doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise FieldcheckError(f"unsupported model version {doc.get('version')!r}")
    return TrainedModel(
        spec=ClassifierSpec.from_dict(doc["spec"]),
        n_features=int(doc["n_features"]),
        weights=None if doc["weights"] is None else np.asarray(doc["weights"], dtype=np.float64),
        trees=tuple(Tree.from_dict(t) for t in doc["trees"]),
        base_score=float(doc["base_score"]),
        constant=doc["constant"],
    )
