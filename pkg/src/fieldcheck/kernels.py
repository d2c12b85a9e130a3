"""Tree-growing kernels with a compiled fast path.

The Cython extension ``fieldcheck._kernels`` is used when it was built;
otherwise the numpy implementation in ``fieldcheck._kernels_py`` takes
over. Set ``FIELDCHECK_KERNELS=python`` to force the fallback. Both
backends produce identical trees for identical inputs.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

GINI = _kernels_py.GINI
MSE = _kernels_py.MSE

_compiled = None
if os.environ.get("FIELDCHECK_KERNELS", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _impl(backend: str | None):
    try:
        return _BACKENDS[backend or BACKEND]
    except KeyError:
        raise ValueError(f"kernel backend {backend!r} is not available; have {available_backends()}") from None


def build_tree(
    X: np.ndarray,
    target: np.ndarray,
    num: np.ndarray,
    den: np.ndarray,
    *,
    criterion: int,
    max_depth: int,
    min_leaf: int,
    n_sub: int,
    seed: int,
    prior_num: float = 0.0,
    prior_den: float = 0.0,
    backend: str | None = None,
) -> tuple[np.ndarray, ...]:
    """Grow one CART tree on the rows of ``X``.

    Splits minimise Gini impurity on ``target`` (``criterion=GINI``) or its
    squared error (``MSE``). A node's value is
    ``(sum(num) + prior_num) / (sum(den) + prior_den)`` over its rows.

    Returns ``(feature, threshold, left, right, value, n_samples)`` arrays
    indexed by node id in preorder; leaves have ``feature == -1``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("build_tree needs a non-empty 2-D matrix")
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int64)
    return _impl(backend).build_tree(
        X,
        np.ascontiguousarray(target, dtype=np.float64),
        np.ascontiguousarray(num, dtype=np.float64),
        np.ascontiguousarray(den, dtype=np.float64),
        order,
        int(criterion),
        int(max_depth),
        int(min_leaf),
        int(n_sub),
        int(seed) & ((1 << 64) - 1),
        float(prior_num),
        float(prior_den),
    )


def apply_tree(X, feature, threshold, left, right, value, *, backend: str | None = None) -> np.ndarray:
    return _impl(backend).apply_tree(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(feature, dtype=np.int64),
        np.ascontiguousarray(threshold, dtype=np.float64),
        np.ascontiguousarray(left, dtype=np.int64),
        np.ascontiguousarray(right, dtype=np.int64),
        np.ascontiguousarray(value, dtype=np.float64),
    )
