"""Semi-supervised corrections of a supervised estimator.

All estimators share one pipeline. The supervised fit gives ``theta_hat`` and
the influence values ``phi_i`` on the labeled rows. A centered regression
design ``g0`` is built (basis functions, or the influence function evaluated
at model predictions), ``phi`` is regressed on ``g0`` over the labeled rows,
and the labeled mean of the fitted values is subtracted:

    theta = theta_hat - B @ mean_labeled(g0)

The plug-in covariance is ``Var[phi] - gamma * C Var[g0]^-1 C^T`` where ``C``
is the labeled cross-covariance of ``phi`` and ``g0``. The subtracted term is
positive semidefinite and at most ``Var[phi]``, so the reported covariance is
never larger than the supervised one and never indefinite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .basis import BasisSpec
from .core import (EstimateReport, InferenceProblem, InputError, LabeledData, NumericError,
                   PredictionUnsupported, UnlabeledData, UnsupportedProblem,
                   influence_matrix, prediction_influence_matrix)
from .numerics import (MarginalMoments, external_center, gram_matrix, ols_coefficients,
                       pooled_center, sample_covariance, sample_cross_covariance,
                       solve_symmetric, _degenerate_columns)


class BasisTooLarge(InputError):
    pass


class NonFinitePrediction(InputError):
    pass


@dataclass(frozen=True)
class Regime:
    """``oss``: covariate law known only through the unlabeled sample.
    ``iss``: covariate law known; ``moments`` gives E[g(X)] (and optionally the gram).
    """

    kind: str = "oss"
    moments: MarginalMoments | None = None

    def __post_init__(self):
        if self.kind not in ("oss", "iss"):
            raise InputError(f"regime must be 'oss' or 'iss', got {self.kind!r}")
        if self.kind == "iss" and self.moments is None:
            raise InputError("the ISS regime needs the known mean of g(X)")

    @classmethod
    def oss(cls) -> "Regime":
        return cls("oss")

    @classmethod
    def iss(cls, mean_g, gram=None) -> "Regime":
        return cls("iss", MarginalMoments(mean_g, gram))


OSS = Regime()


@dataclass(frozen=True)
class PredictionModelSet:
    """K prediction models, stored as their predictions on the labeled and
    unlabeled rows (each entry n x q and N x q)."""

    labeled: tuple[np.ndarray, ...]
    unlabeled: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.labeled) < 1 or len(self.labeled) != len(self.unlabeled):
            raise InputError("need K >= 1 models with predictions on both samples")
        lab, unl = [], []
        for k, (pl, pu) in enumerate(zip(self.labeled, self.unlabeled)):
            pl = np.asarray(pl, dtype=float)
            pu = np.asarray(pu, dtype=float)
            pl = pl[:, None] if pl.ndim == 1 else pl
            pu = pu.reshape(-1, pl.shape[1]) if pu.size == 0 or pu.ndim == 1 else pu
            for arr, which in ((pl, "labeled"), (pu, "unlabeled")):
                if not np.all(np.isfinite(arr)):
                    raise NonFinitePrediction(f"model {k} has non-finite predictions on {which} rows")
            lab.append(pl)
            unl.append(pu)
        object.__setattr__(self, "labeled", tuple(lab))
        object.__setattr__(self, "unlabeled", tuple(unl))

    @classmethod
    def from_callables(cls, models: Sequence[Callable], labeled: LabeledData,
                       unlabeled: UnlabeledData) -> "PredictionModelSet":
        return cls(tuple(np.asarray(f(labeled.x), dtype=float) for f in models),
                   tuple(np.asarray(f(unlabeled.x), dtype=float) for f in models))

    @property
    def K(self) -> int:
        return len(self.labeled)


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise InputError(f"level must be in (0, 1), got {level}")


def make_report(method, theta, sigma, n, N, level, correction, theta_sup, flags=(),
                extra=None) -> EstimateReport:
    theta = np.asarray(theta, dtype=float)
    sigma = 0.5 * (sigma + sigma.T)
    se = np.sqrt(np.clip(np.diag(sigma), 0.0, None) / n)
    z = norm.ppf(0.5 + level / 2.0)
    return EstimateReport(
        method=method, theta=theta, sigma=sigma, se=se,
        ci_lower=theta - z * se, ci_upper=theta + z * se, level=level,
        n=n, N=N, gamma_hat=N / (n + N), correction=np.asarray(correction, dtype=float),
        theta_supervised=np.asarray(theta_sup, dtype=float), flags=tuple(flags),
        extra=extra or {})


def explained_covariance(phi: np.ndarray, design: np.ndarray) -> tuple[np.ndarray, bool]:
    """``C Var[g]^-1 C^T`` from the labeled sample, C = Cov[phi, g].

    This is the covariance of the best linear predictor of phi from g; it is
    PSD and bounded by Var[phi].
    """
    p = phi.shape[1]
    keep = np.setdiff1d(np.arange(design.shape[1]), _degenerate_columns(design))
    if keep.size == 0:
        return np.zeros((p, p)), False
    g = design[:, keep]
    cross = sample_cross_covariance(phi, g)
    b, ridge = solve_symmetric(sample_covariance(g), cross)
    out = b @ cross.T
    return 0.5 * (out + out.T), ridge


@dataclass
class _Supervised:
    theta: np.ndarray
    eta: object
    phi: np.ndarray


def _fit_supervised(problem: InferenceProblem, labeled: LabeledData) -> _Supervised:
    theta, eta = problem.fit(labeled)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return _Supervised(theta, eta, influence_matrix(problem, eta, labeled))


def _project(method: str, sup: _Supervised, g_lab: np.ndarray, g_unl: np.ndarray,
             regime: Regime, n: int, N: int, level: float, flags: list,
             extra: dict | None = None) -> EstimateReport:
    """Regress the influence values on a basis and subtract the fitted mean."""
    if regime.kind == "oss" and N == 0:
        # pooled centering makes the labeled design mean zero: nothing to correct
        p = sup.theta.size
        return make_report(method, sup.theta, sample_covariance(sup.phi), n, N, level,
                           np.zeros(p), sup.theta, flags, extra)
    if regime.kind == "oss":
        lab, unl = pooled_center(g_lab, g_unl)
        d_lab = lab.values
        gram = gram_matrix(lab.values, unl.values)
        gamma_var = N / (n + N)
    else:
        mom = regime.moments
        d_lab = external_center(g_lab, mom.mean_g).values
        gram = mom.gram if mom.gram is not None else gram_matrix(d_lab)
        gamma_var = 1.0
    fit = ols_coefficients(sup.phi, d_lab, gram, return_info=True)
    if fit.ridge:
        flags.append("ridge")
    if fit.dropped.size:
        flags.append(f"dropped_columns:{','.join(map(str, fit.dropped.tolist()))}")
    correction = fit.coef @ d_lab.mean(axis=0)
    explained, ridge_v = explained_covariance(sup.phi, d_lab)
    if ridge_v and "ridge" not in flags:
        flags.append("ridge")
    sigma = sample_covariance(sup.phi) - gamma_var * explained
    extra = dict(extra or {})
    extra["coefficients"] = fit.coef
    return make_report(method, sup.theta - correction, sigma, n, N, level, correction,
                       sup.theta, flags, extra)


def _prepare(labeled, unlabeled, level):
    _check_level(level)
    if unlabeled is None:
        unlabeled = UnlabeledData.empty(labeled.d)
    unlabeled.check_compatible(labeled)
    return unlabeled


def supervised_estimate(problem: InferenceProblem, labeled: LabeledData,
                        level: float = 0.95, unlabeled: UnlabeledData | None = None) -> EstimateReport:
    """The supervised estimator with plug-in variance Var[phi]."""
    unlabeled = _prepare(labeled, unlabeled, level)
    sup = _fit_supervised(problem, labeled)
    p = sup.theta.size
    return make_report("supervised", sup.theta, sample_covariance(sup.phi), labeled.n,
                       unlabeled.N, level, np.zeros(p), sup.theta)


def _basis_designs(basis: BasisSpec, labeled, unlabeled):
    fitted = basis if basis.fitted else basis.fit(np.vstack([labeled.x, unlabeled.x]))
    return fitted, fitted.transform(labeled.x), fitted.transform(unlabeled.x)


def safe_estimate(problem: InferenceProblem, labeled: LabeledData,
                  unlabeled: UnlabeledData | None = None, basis: BasisSpec | None = None,
                  regime: Regime = OSS, level: float = 0.95) -> EstimateReport:
    """Safe estimator: project the influence function on a fixed basis g(x).

    Under ``Regime.oss()`` the basis is centered at the pooled mean; under
    ``Regime.iss(mean_g, gram)`` at the known mean, with the known (or labeled
    empirical) gram.
    """
    unlabeled = _prepare(labeled, unlabeled, level)
    basis = basis or BasisSpec.identity()
    sup = _fit_supervised(problem, labeled)
    fitted, g_lab, g_unl = _basis_designs(basis, labeled, unlabeled)
    return _project(f"safe[{regime.kind}]" if regime.kind == "iss" else "safe", sup, g_lab,
                    g_unl, regime, labeled.n, unlabeled.N, level, [], {"basis_dim": fitted.dim})


def efficient_estimate(problem: InferenceProblem, labeled: LabeledData,
                       unlabeled: UnlabeledData | None = None, spline_df: int = 3,
                       regime: Regime = OSS, level: float = 0.95) -> EstimateReport:
    """Efficient estimator: the safe construction on a tensor natural-spline basis
    with ``spline_df ** d`` functions."""
    unlabeled = _prepare(labeled, unlabeled, level)
    if spline_df < 2:
        raise InputError("spline_df must be at least 2")
    K = spline_df ** labeled.d
    if K >= labeled.n / 2:
        raise BasisTooLarge(f"basis dimension {K} is not below n/2 = {labeled.n / 2}")
    sup = _fit_supervised(problem, labeled)
    fitted, g_lab, g_unl = _basis_designs(BasisSpec.spline(spline_df), labeled, unlabeled)
    method = f"efficient:{spline_df}" + ("[iss]" if regime.kind == "iss" else "")
    return _project(method, sup, g_lab, g_unl, regime, labeled.n, unlabeled.N, level, [],
                    {"basis_dim": K, "knots": fitted.knots})


def _prediction_design(problem, eta, labeled, unlabeled, models: PredictionModelSet):
    if not problem.supports_prediction():
        raise PredictionUnsupported(f"{problem.name} does not support prediction-based designs")
    lab_cols, unl_cols = [], []
    for pl, pu in zip(models.labeled, models.unlabeled):
        if pl.shape[0] != labeled.n or pu.shape[0] != unlabeled.N:
            raise InputError("prediction rows do not align with the data")
        lab_cols.append(prediction_influence_matrix(problem, eta, labeled.x, pl))
        unl_cols.append(prediction_influence_matrix(problem, eta, unlabeled.x, pu)
                        if unlabeled.N else np.empty((0, lab_cols[-1].shape[1])))
    return np.hstack(lab_cols), np.hstack(unl_cols)


def ppi_estimate(problem: InferenceProblem, labeled: LabeledData, unlabeled: UnlabeledData | None,
                 models: PredictionModelSet, level: float = 0.95) -> EstimateReport:
    """Safe prediction-powered estimator.

    The design stacks the influence function evaluated at each model's
    predictions, ``[phi(x, f_1(x)), ..., phi(x, f_K(x))]``.
    """
    unlabeled = _prepare(labeled, unlabeled, level)
    sup = _fit_supervised(problem, labeled)
    g_lab, g_unl = _prediction_design(problem, sup.eta, labeled, unlabeled, models)
    return _project("ppi", sup, g_lab, g_unl, OSS, labeled.n, unlabeled.N, level, [],
                    {"models": models.K})


def ppi_plus_plus_baseline(problem: InferenceProblem, labeled: LabeledData,
                           unlabeled: UnlabeledData | None, model: PredictionModelSet,
                           level: float = 0.95) -> EstimateReport:
    """PPI++ with the scalar power-tuning weight that minimises the trace of the
    asymptotic covariance.

    Implemented in its one-step (linearised) form around the supervised
    M-estimate: with ``psi_f = phi(x, f(x))``,

        theta = theta_hat - w * (mean_labeled psi_f - mean_unlabeled psi_f),
        w = gamma * tr Cov[phi, psi_f] / tr Var[psi_f].
    """
    unlabeled = _prepare(labeled, unlabeled, level)
    if not problem.m_estimation:
        raise UnsupportedProblem(f"PPI++ applies to M-estimation problems, not {problem.name}")
    if model.K != 1:
        raise InputError("PPI++ takes exactly one prediction model")
    sup = _fit_supervised(problem, labeled)
    n, N = labeled.n, unlabeled.N
    p = sup.theta.size
    if N == 0:
        return make_report("ppi++", sup.theta, sample_covariance(sup.phi), n, N, level,
                           np.zeros(p), sup.theta, extra={"omega": 0.0})
    f_lab, f_unl = _prediction_design(problem, sup.eta, labeled, unlabeled, model)
    gamma = N / (n + N)
    cross = sample_cross_covariance(sup.phi, f_lab)
    var_f = sample_covariance(np.vstack([f_lab, f_unl]))
    denom = np.trace(var_f)
    omega = gamma * np.trace(cross) / denom if denom > 0 else 0.0
    correction = omega * (f_lab.mean(axis=0) - f_unl.mean(axis=0))
    sigma = (sample_covariance(sup.phi - omega * f_lab)
             + (n / N) * omega ** 2 * sample_covariance(f_unl if N > 1 else f_lab))
    return make_report("ppi++", sup.theta - correction, sigma, n, N, level, correction,
                       sup.theta, extra={"omega": float(omega)})
