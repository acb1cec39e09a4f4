"""Shared numerical kernels: cosine, Spearman, orthogonal Procrustes, linear CKA.

All functions compute in float64 and are pure, so they are safe to call
concurrently.
"""

from __future__ import annotations

import numpy as np

from lexprobe.errors import ConstantInputError, UndefinedCkaError, ZeroVectorError


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Scale each row to unit length; all-zero rows are left untouched."""
    m = np.asarray(m, np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return m / safe


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two vectors; raises on zero-norm input."""
    u = np.asarray(u, np.float64)
    v = np.asarray(v, np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return float(u.dot(v) / (nu * nv))


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average of their positions."""
    values = np.asarray(values, np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0], np.float64)
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        ranks[order[i : j + 1]] = avg
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman's rho: Pearson correlation of average-ranked data."""
    x = np.asarray(x, np.float64)
    y = np.asarray(y, np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman expects two equal-length 1-D score lists")
    if x.shape[0] < 2:
        raise ValueError("spearman needs at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ConstantInputError("rank correlation of a constant list is undefined")
    rx = average_ranks(x)
    ry = average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    return float(dx.dot(dy) / np.sqrt(dx.dot(dx) * dy.dot(dy)))


def procrustes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Orthogonal map W minimising ||xW - y||_F for row-aligned x, y.

    W = U V^T from the SVD x^T y = U S V^T. Any valid SVD is accepted;
    callers should assert properties (orthogonality, residual), not signs.
    """
    x = np.asarray(x, np.float64)
    y = np.asarray(y, np.float64)
    if x.shape != y.shape:
        raise ValueError("procrustes expects equally shaped row-aligned matrices")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("procrustes input contains non-finite values")
    u, _, vt = np.linalg.svd(x.T @ y)
    return u @ vt


def prepare_samples(m: np.ndarray, center: str = "columns") -> np.ndarray:
    """CKA preprocessing: l2-normalize rows, then mean-center.

    `center="columns"` (default) subtracts per-feature means; `center="rows"`
    is the alternative reading and subtracts per-example means.
    """
    m = l2_normalize_rows(m)
    if center == "columns":
        return m - m.mean(axis=0, keepdims=True)
    if center == "rows":
        return m - m.mean(axis=1, keepdims=True)
    raise ValueError(f"unknown centering mode {center!r}")


def linear_cka(
    x: np.ndarray,
    y: np.ndarray,
    *,
    preprocess: bool = True,
    center: str = "columns",
) -> float:
    """Linear CKA: ||y^T x||_F^2 / (||x^T x||_F ||y^T y||_F).

    Rows are examples (one per aligned item), columns features. Invariant to
    isotropic scaling and orthogonal transforms of either side. Inputs are
    row-l2-normalized and mean-centered first unless `preprocess=False`.
    """
    x = np.asarray(x, np.float64)
    y = np.asarray(y, np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("linear_cka expects 2-D inputs with equal row counts")
    if x.shape[0] < 2:
        raise ValueError("linear_cka needs at least two examples")
    if preprocess:
        x = prepare_samples(x, center)
        y = prepare_samples(y, center)
    xtx = np.linalg.norm(x.T @ x)
    yty = np.linalg.norm(y.T @ y)
    if xtx == 0.0 or yty == 0.0:
        raise UndefinedCkaError("CKA undefined: a matrix is zero after centering")
    num = np.linalg.norm(y.T @ x) ** 2
    return float(num / (xtx * yty))
