"""Data containers, the inference-problem interface and the estimate report."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class SemisupError(Exception):
    """Base class for errors raised by this package."""


class InputError(SemisupError, ValueError):
    """Malformed or inconsistent input data."""


class NumericError(SemisupError, ArithmeticError):
    """A numerical procedure failed on otherwise valid input."""


class NonFiniteInfluence(NumericError):
    def __init__(self, row: int):
        super().__init__(f"influence value is not finite at row {row}")
        self.row = row


class PredictionUnsupported(SemisupError):
    """The problem defines no influence surrogate at predicted responses."""


class UnsupportedProblem(SemisupError):
    """The estimator cannot be applied to this kind of problem."""


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InputError(f"{name} must be a 1-d or 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr))[0, 0])
        raise InputError(f"{name} has a non-finite entry in row {bad}")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, init=False)
class LabeledData:
    """Labeled sample: covariates ``x`` (n x d) and responses ``y`` (n x q)."""

    x: np.ndarray
    y: np.ndarray

    def __init__(self, x, y):
        x = _as_matrix(x, "x")
        y = _as_matrix(y, "y")
        if x.shape[0] != y.shape[0]:
            raise InputError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] < 2:
            raise InputError("labeled data needs at least 2 rows")
        if x.shape[1] < 1 or y.shape[1] < 1:
            raise InputError("x and y need at least one column each")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def take(self, idx) -> "LabeledData":
        return LabeledData(self.x[idx], self.y[idx])


@dataclass(frozen=True, init=False)
class UnlabeledData:
    """Unlabeled covariates (N x d); N may be zero."""

    x: np.ndarray

    def __init__(self, x, d: int | None = None):
        arr = np.asarray(x, dtype=float)
        if arr.size == 0:
            if d is None:
                d = arr.shape[1] if arr.ndim == 2 else 1
            arr = np.empty((0, d))
        object.__setattr__(self, "x", _as_matrix(arr, "unlabeled x"))

    @classmethod
    def empty(cls, d: int) -> "UnlabeledData":
        return cls(np.empty((0, d)))

    @property
    def N(self) -> int:
        return self.x.shape[0]

    def check_compatible(self, labeled: LabeledData) -> None:
        if self.x.shape[1] != labeled.d:
            raise InputError(
                f"unlabeled covariates have {self.x.shape[1]} columns, labeled have {labeled.d}"
            )


class InferenceProblem(ABC):
    """A supervised estimator together with its influence function.

    Subclasses implement the vectorised ``influence_rows``; the single-row
    ``influence`` is derived from it.
    """

    name: str = "problem"
    #: M-estimation problems expose the ingredients PPI++ needs.
    m_estimation: bool = False

    @abstractmethod
    def fit(self, labeled: LabeledData) -> tuple[np.ndarray, Any]:
        """Return ``(theta_hat, nuisance)``."""

    @abstractmethod
    def influence_rows(self, eta, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Influence function evaluated at each row, shape (m, p)."""

    def influence_at_prediction_rows(self, eta, x: np.ndarray, yhat: np.ndarray) -> np.ndarray:
        raise PredictionUnsupported(f"{self.name} has no influence surrogate at predictions")

    def influence(self, eta, x_row, y_row) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x_row, dtype=float))
        y = np.atleast_2d(np.asarray(y_row, dtype=float))
        return self.influence_rows(eta, x, y)[0]

    def influence_at_prediction(self, eta, x_row, yhat_row) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x_row, dtype=float))
        yhat = np.atleast_2d(np.asarray(yhat_row, dtype=float))
        return self.influence_at_prediction_rows(eta, x, yhat)[0]

    def supports_prediction(self) -> bool:
        return type(self).influence_at_prediction_rows is not InferenceProblem.influence_at_prediction_rows

    def __repr__(self):
        return f"{type(self).__name__}()"


def _check_finite_rows(mat: np.ndarray) -> np.ndarray:
    bad = ~np.all(np.isfinite(mat), axis=1)
    if bad.any():
        raise NonFiniteInfluence(int(np.flatnonzero(bad)[0]))
    return mat


def influence_matrix(problem: InferenceProblem, eta, data: LabeledData) -> np.ndarray:
    """Stack the influence function over the rows of ``data`` (n x p)."""
    phi = np.asarray(problem.influence_rows(eta, data.x, data.y), dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    return _check_finite_rows(phi)


def prediction_influence_matrix(problem: InferenceProblem, eta, x: np.ndarray,
                                yhat: np.ndarray) -> np.ndarray:
    phi = np.asarray(problem.influence_at_prediction_rows(eta, x, yhat), dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    return _check_finite_rows(phi)


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate with its plug-in covariance and normal confidence intervals.

    ``sigma`` estimates the covariance of sqrt(n) * (theta - theta_true), so the
    standard errors are ``sqrt(diag(sigma) / n)``.
    """

    method: str
    theta: np.ndarray
    sigma: np.ndarray
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    level: float
    n: int
    N: int
    gamma_hat: float
    correction: np.ndarray
    theta_supervised: np.ndarray
    flags: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "theta": self.theta.tolist(),
            "se": self.se.tolist(),
            "ci": [[lo, hi] for lo, hi in zip(self.ci_lower.tolist(), self.ci_upper.tolist())],
            "gamma_hat": self.gamma_hat,
            "sigma": self.sigma.tolist(),
            "flags": list(self.flags),
            "level": self.level,
            "n": self.n,
            "N": self.N,
            "correction": self.correction.tolist(),
        }
        if self.extra:
            out["extra"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                            for k, v in self.extra.items()}
        return out
