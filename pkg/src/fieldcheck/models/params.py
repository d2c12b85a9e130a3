from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Union


class Family(str, enum.Enum):
    LOGISTIC = "logistic"
    RANDOM_FOREST = "random_forest"
    GRADIENT_BOOSTING = "gradient_boosting"


@dataclass(frozen=True)
class LogisticParams:
    learning_rate: float = 0.1
    epochs: int = 500
    l2: float = 1e-4

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    max_depth: int = 8
    min_leaf: int = 5
    feature_frac: float | None = None  # None: sqrt(n_features) / n_features
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees < 1 or self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError("n_trees >= 1, max_depth >= 0 and min_leaf >= 1 required")
        if self.feature_frac is not None and not (0.0 < self.feature_frac <= 1.0):
            raise ValueError("feature_frac must lie in (0, 1]")

    def n_sub(self, n_features: int) -> int:
        if self.feature_frac is None:
            return max(1, int(math.floor(math.sqrt(n_features))))
        return max(1, min(n_features, int(round(self.feature_frac * n_features))))


@dataclass(frozen=True)
class BoostParams:
    n_rounds: int = 200
    shrinkage: float = 0.1
    max_depth: int = 3
    min_leaf: int = 1

    def __post_init__(self) -> None:
        if self.n_rounds < 0 or self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError("n_rounds >= 0, max_depth >= 0 and min_leaf >= 1 required")
        if not (0.0 < self.shrinkage <= 1.0):
            raise ValueError("shrinkage must lie in (0, 1]")


Params = Union[LogisticParams, ForestParams, BoostParams]
_PARAM_TYPES = {
    Family.LOGISTIC: LogisticParams,
    Family.RANDOM_FOREST: ForestParams,
    Family.GRADIENT_BOOSTING: BoostParams,
}


@dataclass(frozen=True)
class ClassifierSpec:
    family: Family
    params: Params | None = None
    seed: int = 0
    workers: int = field(default=1, compare=False)

    def __post_init__(self) -> None:
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        expected = _PARAM_TYPES[fam]
        if self.params is None:
            object.__setattr__(self, "params", expected())
        elif not isinstance(self.params, expected):
            raise TypeError(f"{fam.value} expects {expected.__name__}, got {type(self.params).__name__}")

    def to_dict(self) -> dict:
        return {"family": self.family.value, "params": asdict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, doc: dict, workers: int = 1) -> "ClassifierSpec":
        fam = Family(doc["family"])
        params = _PARAM_TYPES[fam](**doc.get("params", {}))
        return cls(fam, params, int(doc.get("seed", 0)), workers)
