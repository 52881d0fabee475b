"""Dense linear algebra used by the estimators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .core import InputError, NumericError


class DimensionMismatch(InputError):
    pass


class SingularGram(NumericError):
    pass


class TooFewRows(InputError):
    pass


# relative eigenvalue floor below which a gram is treated as singular
_SINGULAR_RTOL = 1e-12
_RIDGE_SCALE = 1e-10
_DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class CenteredDesign:
    """Basis evaluations with a common center subtracted."""

    values: np.ndarray
    center: np.ndarray
    source: str  # "labeled-only" | "pooled" | "external-moments"


@dataclass(frozen=True)
class MarginalMoments:
    """Known moments of g(X) under the covariate distribution.

    ``gram`` is E[g0 g0^T] with g0 = g - mean_g. When it is None the labeled
    sample gram around the known mean is used instead.
    """

    mean_g: np.ndarray
    gram: np.ndarray | None = None

    def __post_init__(self):
        mean_g = np.atleast_1d(np.asarray(self.mean_g, dtype=float))
        object.__setattr__(self, "mean_g", mean_g)
        if self.gram is not None:
            gram = np.atleast_2d(np.asarray(self.gram, dtype=float))
            if gram.shape != (mean_g.size, mean_g.size):
                raise DimensionMismatch(
                    f"gram shape {gram.shape} does not match mean of length {mean_g.size}")
            if not np.allclose(gram, gram.T, atol=1e-10):
                raise InputError("gram must be symmetric")
            object.__setattr__(self, "gram", gram)


def pooled_center(g_labeled, g_unlabeled) -> tuple[CenteredDesign, CenteredDesign]:
    """Center both samples at the column mean over all n + N rows."""
    g_labeled = np.atleast_2d(np.asarray(g_labeled, dtype=float))
    g_unlabeled = np.asarray(g_unlabeled, dtype=float)
    if g_unlabeled.size == 0:
        g_unlabeled = np.empty((0, g_labeled.shape[1]))
    g_unlabeled = np.atleast_2d(g_unlabeled)
    if g_labeled.shape[1] != g_unlabeled.shape[1]:
        raise DimensionMismatch(
            f"labeled design has {g_labeled.shape[1]} columns, unlabeled has {g_unlabeled.shape[1]}")
    m = g_labeled.shape[0] + g_unlabeled.shape[0]
    center = (g_labeled.sum(axis=0) + g_unlabeled.sum(axis=0)) / m
    return (CenteredDesign(g_labeled - center, center, "pooled"),
            CenteredDesign(g_unlabeled - center, center, "pooled"))


def external_center(g, mean_g) -> CenteredDesign:
    g = np.atleast_2d(np.asarray(g, dtype=float))
    mean_g = np.asarray(mean_g, dtype=float)
    if mean_g.shape != (g.shape[1],):
        raise DimensionMismatch(f"known mean has shape {mean_g.shape}, design has {g.shape[1]} columns")
    return CenteredDesign(g - mean_g, mean_g, "external-moments")


def gram_matrix(*blocks: np.ndarray) -> np.ndarray:
    """Uncentered second moment of the stacked rows, divisor = total rows."""
    m = sum(b.shape[0] for b in blocks)
    out = sum(b.T @ b for b in blocks) / m
    return 0.5 * (out + out.T)


class OlsFit(NamedTuple):
    coef: np.ndarray        # p x d
    ridge: bool             # ridge fallback was used
    dropped: np.ndarray     # indices of degenerate design columns


def _degenerate_columns(design: np.ndarray) -> np.ndarray:
    var = design.var(axis=0)
    msq = np.mean(design ** 2, axis=0)
    return np.flatnonzero(var <= _DEGENERATE_RTOL * msq)


def solve_symmetric(gram: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, bool]:
    """Solve ``X @ gram = rhs`` for X, with the ridge fallback for near-singular grams.

    Returns ``(X, ridge_used)``.
    """
    d = gram.shape[0]
    if not np.any(gram):
        raise SingularGram("gram matrix is identically zero")
    evals = np.linalg.eigvalsh(gram)
    ridge = evals[0] <= _SINGULAR_RTOL * max(evals[-1], 0.0)
    if ridge:
        lam = _RIDGE_SCALE * np.trace(gram) / d
        gram = gram + lam * np.eye(d)
    try:
        factor = sla.cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularGram(str(exc)) from exc
    return sla.cho_solve(factor, rhs.T, check_finite=False).T, bool(ridge)


def ols_coefficients(targets, design, gram, return_info: bool = False):
    """Regression coefficients ``[n^-1 sum targets_i design_i^T] gram^-1``.

    Design columns with (near) zero in-sample variance are dropped and get
    coefficient 0. A gram that is singular to tolerance is ridge-regularised
    with ``1e-10 * trace / d``; ``return_info=True`` exposes that decision.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    design = np.atleast_2d(np.asarray(design, dtype=float))
    gram = np.atleast_2d(np.asarray(gram, dtype=float))
    if targets.shape[0] != design.shape[0]:
        raise DimensionMismatch(f"targets have {targets.shape[0]} rows, design has {design.shape[0]}")
    if gram.shape != (design.shape[1], design.shape[1]):
        raise DimensionMismatch(f"gram shape {gram.shape} does not match design width {design.shape[1]}")
    n, d = design.shape
    if n < 1:
        raise TooFewRows("regression needs at least one row")
    p = targets.shape[1]

    dropped = _degenerate_columns(design)
    keep = np.setdiff1d(np.arange(d), dropped)
    coef = np.zeros((p, d))
    ridge = False
    if keep.size:
        cross = targets.T @ design[:, keep] / n
        sub = gram[np.ix_(keep, keep)]
        coef[:, keep], ridge = solve_symmetric(0.5 * (sub + sub.T), cross)
    if return_info:
        return OlsFit(coef, ridge, dropped)
    return coef


def sample_covariance(rows) -> np.ndarray:
    """Centered second-moment matrix with divisor m (not m - 1)."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    m = rows.shape[0]
    if m < 2:
        raise TooFewRows("covariance needs at least 2 rows")
    centered = rows - rows.mean(axis=0)
    cov = centered.T @ centered / m
    return 0.5 * (cov + cov.T)


def sample_cross_covariance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    return a.T @ b / a.shape[0]
