"""Reference baseline: PCA with varimax rotation plus dual regression.

Serves as the in-repo stand-in for classical group ICA pipelines when
benchmarking recovery accuracy: a group loading matrix from pooled PCA,
rotated to sparsity by varimax, with per-subject loadings recovered by
regressing each subject's data on the group factor courses.
"""

from __future__ import annotations

import numpy as np

from .types import Dataset, ValidationError


def pca_loadings(y: np.ndarray, n_factors: int) -> np.ndarray:
    """Top principal-component loadings of an (N, T) series.

    Columns are eigenvectors of the time-sample covariance scaled by the
    square root of their eigenvalues, so ``loadings @ loadings.T``
    approximates the covariance.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n_factors > n:
        raise ValidationError("more factors than regions")
    yc = y - y.mean(axis=1, keepdims=True)
    cov = yc @ yc.T / yc.shape[1]
    vals, vecs = np.linalg.eigh(cov)
    top = np.argsort(vals)[::-1][:n_factors]
    return vecs[:, top] * np.sqrt(np.maximum(vals[top], 0.0))


def varimax(lam: np.ndarray, max_iter: int = 200, tol: float = 1e-10) -> np.ndarray:
    """Kaiser varimax rotation of a loading matrix."""
    lam = np.asarray(lam, dtype=float)
    n, k = lam.shape
    if k < 2:
        return lam.copy()
    rot = np.eye(k)
    var_old = 0.0
    for _ in range(max_iter):
        lr = lam @ rot
        grad = lam.T @ (lr ** 3 - lr @ np.diag(np.sum(lr ** 2, axis=0)) / n)
        u, s, vt = np.linalg.svd(grad)
        rot = u @ vt
        var_new = float(np.sum(s))
        if var_new <= var_old * (1.0 + tol):
            break
        var_old = var_new
    return lam @ rot


def pca_varimax_baseline(dataset: Dataset, n_factors: int) -> dict:
    """Group and per-subject loading estimates from pooled PCA.

    Pipeline: concatenate every subject and condition along time, take K
    principal-component loadings, varimax-rotate them, estimate factor
    courses per subject by projection, then re-fit subject loadings by
    least squares (dual regression).  The soft inclusion map scales each
    group column by its largest magnitude, giving values in [0, 1]
    comparable to a probability map.
    """
    subj_cat = [
        np.concatenate(
            [dataset.series[g][s] for g in range(dataset.n_conditions)], axis=1
        )
        for s in range(dataset.n_subjects)
    ]
    subj_cat = [y - y.mean(axis=1, keepdims=True) for y in subj_cat]
    pooled = np.concatenate(subj_cat, axis=1)
    group = varimax(pca_loadings(pooled, n_factors))

    pinv = np.linalg.pinv(group)
    subject_loadings = np.empty(
        (dataset.n_subjects, dataset.n_regions, n_factors)
    )
    for s, y in enumerate(subj_cat):
        courses = pinv @ y
        gram = courses @ courses.T
        subject_loadings[s] = np.linalg.solve(gram, courses @ y.T).T

    col_peak = np.abs(group).max(axis=0)
    col_peak[col_peak == 0.0] = 1.0
    incl = np.abs(group) / col_peak
    return {
        "group_loadings": group,
        "subject_loadings": subject_loadings,
        "incl_estimate": incl,
    }
