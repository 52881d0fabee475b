"""Built-in inference problems: mean, Poisson GLM, variance, Kendall's tau, AIPW mean.

Each problem pairs a supervised estimator with an evaluator of its influence
function at an estimated nuisance. U-statistic problems do not check
non-degeneracy of the kernel (Var[h_1] > 0); a degenerate kernel gives an
influence function that is identically zero and confidence intervals that are
not valid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import (InferenceProblem, InputError, LabeledData, NumericError,
                   PredictionUnsupported)
from .numerics import TooFewRows


class NoConvergence(NumericError):
    pass


class RankDeficientDesign(InputError):
    pass


class NoTreatedRows(InputError):
    pass


class PropensityDegenerate(NumericError):
    pass


def _check_owner(eta, cls):
    if not isinstance(eta, cls):
        raise InputError(f"nuisance of type {type(eta).__name__} was not produced by this problem")


def _scalar_response(y: np.ndarray, name: str) -> np.ndarray:
    if y.shape[1] != 1:
        raise InputError(f"{name} expects a single response column, got {y.shape[1]}")
    return y[:, 0]


# -- mean ---------------------------------------------------------------------

@dataclass(frozen=True)
class MeanNuisance:
    theta: np.ndarray


class MeanProblem(InferenceProblem):
    """Mean of a scalar response; influence ``y - theta``."""

    name = "mean"
    m_estimation = True

    def fit(self, labeled: LabeledData):
        y = _scalar_response(labeled.y, self.name)
        theta = np.array([y.mean()])
        return theta, MeanNuisance(theta)

    def influence_rows(self, eta, x, y):
        _check_owner(eta, MeanNuisance)
        return np.asarray(y, dtype=float)[:, :1] - eta.theta

    def influence_at_prediction_rows(self, eta, x, yhat):
        _check_owner(eta, MeanNuisance)
        return np.asarray(yhat, dtype=float)[:, :1] - eta.theta


# -- Poisson GLM --------------------------------------------------------------

def newton_glm(design: np.ndarray, y: np.ndarray, family: str, tol: float = 1e-10,
               max_iter: int = 100, max_halvings: int = 30) -> np.ndarray:
    """Maximise the canonical-link log-likelihood ``mean(y * eta - b(eta))``.

    Newton steps start at zero and are halved until the objective does not
    decrease. Convergence is declared when the averaged score has norm < tol.
    """
    n, p = design.shape
    if np.linalg.matrix_rank(design) < p:
        raise RankDeficientDesign(f"design of width {p} has rank {np.linalg.matrix_rank(design)}")
    if family == "poisson":
        b, b1 = np.exp, np.exp
    elif family == "logistic":
        b, b1 = (lambda t: np.logaddexp(0.0, t)), expit
    else:
        raise ValueError(family)

    def objective(th):
        eta = design @ th
        return np.mean(y * eta - b(eta))

    theta = np.zeros(p)
    obj = objective(theta)
    for _ in range(max_iter):
        eta = design @ theta
        mu = b1(eta)
        grad = design.T @ (y - mu) / n
        if np.linalg.norm(grad) < tol:
            return theta
        w = mu if family == "poisson" else mu * (1.0 - mu)
        hess = (design * w[:, None]).T @ design / n
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular information matrix: {exc}") from exc
        if grad @ step <= 1e-12 * (abs(obj) + 1.0):
            # predicted ascent is below what the objective can resolve: the
            # line search would only see rounding noise, so take the full step
            theta = theta + step
            obj = objective(theta)
            continue
        t = 1.0
        for _ in range(max_halvings + 1):
            cand = theta + t * step
            with np.errstate(over="ignore", invalid="ignore"):
                cand_obj = objective(cand)
            if np.isfinite(cand_obj) and cand_obj >= obj:
                break
            t *= 0.5
        else:
            # no ascent possible at machine precision: accept only if the score is tiny
            if np.linalg.norm(grad) < 1e3 * tol:
                return theta
            raise NoConvergence("step halving failed to increase the log-likelihood")
        theta, obj = cand, cand_obj
    eta = design @ theta
    grad = design.T @ (y - b1(eta)) / n
    if np.linalg.norm(grad) < tol:
        return theta
    raise NoConvergence(f"no convergence after {max_iter} Newton iterations "
                        f"(score norm {np.linalg.norm(grad):.3g})")


@dataclass(frozen=True)
class GlmNuisance:
    theta: np.ndarray
    v_inv: np.ndarray  # inverse of n^-1 sum b''(x'theta) x x'


class PoissonGlmProblem(InferenceProblem):
    """Poisson regression with canonical log link.

    The target is the Kullback-Leibler projection of E[Y | X] onto the
    log-linear family; the model need not be correct. With
    ``include_intercept`` the first coefficient is the intercept.
    """

    name = "poisson_glm"
    m_estimation = True

    def __init__(self, include_intercept: bool = True, tol: float = 1e-10, max_iter: int = 100):
        self.include_intercept = include_intercept
        self.tol = tol
        self.max_iter = max_iter

    def __repr__(self):
        return f"PoissonGlmProblem(include_intercept={self.include_intercept})"

    def design(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.include_intercept:
            return np.column_stack([np.ones(x.shape[0]), x])
        return x

    def information(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        """``n^-1 sum exp(x_i' theta) x_i x_i'``."""
        X = self.design(x)
        mu = np.exp(X @ theta)
        return (X * mu[:, None]).T @ X / X.shape[0]

    def objective(self, theta: np.ndarray, labeled: LabeledData) -> float:
        X = self.design(labeled.x)
        y = labeled.y[:, 0]
        eta = X @ theta
        return float(np.mean(y * eta - np.exp(eta)))

    def fit(self, labeled: LabeledData):
        y = _scalar_response(labeled.y, self.name)
        if np.any(y < 0):
            raise InputError("Poisson responses must be non-negative")
        if not np.any(y > 0):
            # the likelihood keeps increasing as the linear predictor goes to -inf
            raise NoConvergence("all responses are zero: the Poisson MLE does not exist")
        theta = newton_glm(self.design(labeled.x), y, "poisson", self.tol, self.max_iter)
        v_inv = np.linalg.inv(self.information(theta, labeled.x))
        return theta, GlmNuisance(theta, 0.5 * (v_inv + v_inv.T))

    def _influence(self, eta, x, response):
        _check_owner(eta, GlmNuisance)
        X = self.design(x)
        resid = response - np.exp(X @ eta.theta)
        return (X * resid[:, None]) @ eta.v_inv

    def influence_rows(self, eta, x, y):
        return self._influence(eta, x, np.asarray(y, dtype=float)[:, 0])

    def influence_at_prediction_rows(self, eta, x, yhat):
        return self._influence(eta, x, np.asarray(yhat, dtype=float)[:, 0])


# -- U-statistics -------------------------------------------------------------

@dataclass(frozen=True)
class VarianceNuisance:
    theta: np.ndarray
    mean: float


class VarianceUstatProblem(InferenceProblem):
    """Variance as the order-2 U-statistic with kernel (y1 - y2)^2 / 2."""

    name = "variance"

    def fit(self, labeled: LabeledData):
        y = _scalar_response(labeled.y, self.name)
        n = y.size
        if n < 2:
            raise TooFewRows("variance needs at least 2 rows")
        ybar = y.mean()
        # sum_{i<j} (y_i - y_j)^2 = n * sum (y_i - ybar)^2
        theta = np.array([np.sum((y - ybar) ** 2) / (n - 1)])
        return theta, VarianceNuisance(theta, float(ybar))

    def influence_rows(self, eta, x, y):
        _check_owner(eta, VarianceNuisance)
        return (np.asarray(y, dtype=float)[:, :1] - eta.mean) ** 2 - eta.theta

    def influence_at_prediction_rows(self, eta, x, yhat):
        _check_owner(eta, VarianceNuisance)
        return (np.asarray(yhat, dtype=float)[:, :1] - eta.mean) ** 2 - eta.theta


@dataclass(frozen=True)
class KendallNuisance:
    theta: np.ndarray
    u: np.ndarray
    v: np.ndarray


def _concordant_fraction(u_ref, v_ref, u, v, chunk: int = 2048) -> np.ndarray:
    """For each (u_k, v_k): fraction of reference pairs with (U - u)(V - v) > 0."""
    out = np.empty(u.size)
    for start in range(0, u.size, chunk):
        sl = slice(start, start + chunk)
        prod_ = (u_ref[None, :] - u[sl, None]) * (v_ref[None, :] - v[sl, None])
        out[sl] = np.count_nonzero(prod_ > 0, axis=1) / u_ref.size
    return out


class KendallTauProblem(InferenceProblem):
    """Probability of concordance of two response columns (U, V).

    Ties (a zero product) count as non-concordant.
    """

    name = "kendall"

    def fit(self, labeled: LabeledData):
        if labeled.y.shape[1] != 2:
            raise InputError("Kendall's tau needs exactly two response columns (u, v)")
        u, v = labeled.y[:, 0], labeled.y[:, 1]
        n = u.size
        if n < 2:
            raise TooFewRows("Kendall's tau needs at least 2 rows")
        frac = _concordant_fraction(u, v, u, v)
        # the diagonal never counts, so sum_i frac_i * n = 2 * #concordant pairs
        theta = np.array([frac.sum() * n / (n * (n - 1))])
        return theta, KendallNuisance(theta, u.copy(), v.copy())

    def _influence(self, eta, pairs):
        _check_owner(eta, KendallNuisance)
        pairs = np.asarray(pairs, dtype=float)
        frac = _concordant_fraction(eta.u, eta.v, pairs[:, 0], pairs[:, 1])
        return (2.0 * frac - 2.0 * eta.theta[0])[:, None]

    def influence_rows(self, eta, x, y):
        return self._influence(eta, y)

    def influence_at_prediction_rows(self, eta, x, yhat):
        return self._influence(eta, yhat)


# -- counterfactual mean (AIPW) -----------------------------------------------

@dataclass(frozen=True)
class AteNuisance:
    theta: np.ndarray
    propensity_coef: np.ndarray | None
    outcome_coef: np.ndarray | None
    fixed_propensity: float | None
    fixed_outcome: float | None
    trim: float


class AteProblem(InferenceProblem):
    """Counterfactual mean E[Y(1)] by augmented inverse propensity weighting.

    Covariates ``x`` are the confounders U. The response matrix holds the
    treatment indicator and the outcome, at columns ``treatment_col`` and
    ``outcome_col``. The propensity is logistic in U and the treated-arm
    outcome regression linear in U; either can be replaced by a constant
    (``fixed_propensity`` / ``fixed_outcome``). Fitted propensities are
    clipped into ``[trim, 1 - trim]``.
    """

    name = "ate"

    def __init__(self, trim: float = 0.05, treatment_col: int = 0, outcome_col: int = 1,
                 fixed_propensity: float | None = None, fixed_outcome: float | None = None):
        if not 0.0 < trim < 0.5:
            raise InputError("trim must lie in (0, 0.5)")
        self.trim = trim
        self.treatment_col = treatment_col
        self.outcome_col = outcome_col
        self.fixed_propensity = fixed_propensity
        self.fixed_outcome = fixed_outcome

    def __repr__(self):
        return f"AteProblem(trim={self.trim})"

    def _split(self, y):
        y = np.asarray(y, dtype=float)
        a = y[:, self.treatment_col]
        if not np.all((a == 0) | (a == 1)):
            raise InputError("treatment column must be binary 0/1")
        return a, y[:, self.outcome_col]

    @staticmethod
    def _design(u):
        return np.column_stack([np.ones(u.shape[0]), u])

    def propensity(self, eta: AteNuisance, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if eta.fixed_propensity is not None:
            pi = np.full(u.shape[0], eta.fixed_propensity)
        else:
            pi = expit(self._design(u) @ eta.propensity_coef)
        return np.clip(pi, eta.trim, 1.0 - eta.trim)

    def outcome(self, eta: AteNuisance, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if eta.fixed_outcome is not None:
            return np.full(u.shape[0], eta.fixed_outcome)
        return self._design(u) @ eta.outcome_coef

    def fit(self, labeled: LabeledData):
        a, y = self._split(labeled.y)
        u = labeled.x
        treated = a == 1
        if not treated.any():
            raise NoTreatedRows("no treated rows to fit the outcome regression")
        prop_coef = out_coef = None
        if self.fixed_propensity is None:
            if treated.all():
                raise PropensityDegenerate("every row is treated; propensity model is not identified")
            try:
                prop_coef = newton_glm(self._design(u), a, "logistic")
            except NumericError as exc:
                raise PropensityDegenerate(f"propensity fit failed: {exc}") from exc
        if self.fixed_outcome is None:
            Dt = self._design(u[treated])
            if np.linalg.matrix_rank(Dt) < Dt.shape[1]:
                raise RankDeficientDesign("treated rows do not identify the outcome regression")
            out_coef = np.linalg.lstsq(Dt, y[treated], rcond=None)[0]
        eta = AteNuisance(np.zeros(1), prop_coef, out_coef, self.fixed_propensity,
                          self.fixed_outcome, self.trim)
        pseudo = self._pseudo_outcome(eta, u, a, y)
        theta = np.array([pseudo.mean()])
        return theta, AteNuisance(theta, prop_coef, out_coef, self.fixed_propensity,
                                   self.fixed_outcome, self.trim)

    def _pseudo_outcome(self, eta, u, a, y):
        mu = self.outcome(eta, u)
        return a / self.propensity(eta, u) * (y - mu) + mu

    def influence_rows(self, eta, x, y):
        _check_owner(eta, AteNuisance)
        a, yy = self._split(y)
        return (self._pseudo_outcome(eta, x, a, yy) - eta.theta[0])[:, None]

    def influence_at_prediction_rows(self, eta, x, yhat):
        raise PredictionUnsupported("the AIPW problem defines no influence surrogate at predictions")

    def supports_prediction(self) -> bool:
        return False


PROBLEMS = {
    "mean": MeanProblem,
    "poisson_glm": PoissonGlmProblem,
    "variance": VarianceUstatProblem,
    "kendall": KendallTauProblem,
    "ate": AteProblem,
}


def make_problem(name: str, **kwargs) -> InferenceProblem:
    try:
        return PROBLEMS[name](**kwargs)
    except KeyError:
        raise InputError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
