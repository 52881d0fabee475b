"""Data-generating processes, builtin prediction models, efficiency-bound
oracles and the Monte Carlo replication runner.

Covariates are two i.i.d. Uniform(0, 1) coordinates. Every conditional mean
is ``link(sum_k c_k x1^a_k x2^b_k)``, which keeps population quantities
available in closed form or by tensor Gauss-Legendre quadrature.
"""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .basis import BasisSpec
from .core import InputError, LabeledData, SemisupError, UnlabeledData
from .estimators import (PredictionModelSet, efficient_estimate, ppi_estimate,
                         ppi_plus_plus_baseline, safe_estimate, supervised_estimate)
from .numerics import sample_covariance
from .problems import make_problem

LINEAR_TERMS = ((1.05, (0, 0)), (4.76, (1, 0)), (-6.2, (0, 1)))
NONLINEAR_TERMS = ((-1.70, (1, 1)), (-6.94, (1, 2)), (-1.35, (2, 1)), (2.28, (2, 2)))

MAX_UNLABELED = 1_000_000


class OracleUnavailable(SemisupError):
    """No closed-form conditional influence for this (dgp, problem) pair."""


@dataclass(frozen=True)
class DgpSpec:
    """Polynomial conditional-mean model on [0, 1]^2.

    ``terms`` are ``(coef, (a, b))`` pairs for ``coef * x1**a * x2**b``.
    ``response="pair"`` draws (U, V) with a shared mean and independent noise.
    """

    name: str
    terms: tuple = ()
    link: str = "identity"        # identity | exp
    noise: str = "normal"         # normal | poisson
    response: str = "scalar"      # scalar | pair
    problem: str = "mean"
    d: int = 2

    def __post_init__(self):
        if self.link not in ("identity", "exp"):
            raise InputError(f"unknown link {self.link!r}")
        if self.noise not in ("normal", "poisson"):
            raise InputError(f"unknown noise law {self.noise!r}")
        if self.response not in ("scalar", "pair"):
            raise InputError(f"unknown response kind {self.response!r}")
        if self.noise == "poisson" and self.link != "exp":
            raise InputError("poisson noise needs the exp link (a positive mean)")
        if self.d != 2:
            raise InputError("builtin DGPs use d = 2 covariates")
        object.__setattr__(self, "terms", tuple((float(c), (int(a), int(b)))
                                                for c, (a, b) in self.terms))

    def linear_predictor(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for c, (a, b) in self.terms:
            out += c * x[:, 0] ** a * x[:, 1] ** b
        return out

    def conditional_mean(self, x) -> np.ndarray:
        eta = self.linear_predictor(x)
        return np.exp(eta) if self.link == "exp" else eta

    @property
    def q(self) -> int:
        return 2 if self.response == "pair" else 1


FAMILIES = {
    "mean_linear": DgpSpec("mean_linear", LINEAR_TERMS),
    "mean_nonlinear": DgpSpec("mean_nonlinear", NONLINEAR_TERMS),
    "mean_null": DgpSpec("mean_null"),
    "poisson_nonlinear": DgpSpec("poisson_nonlinear", NONLINEAR_TERMS, "exp", "poisson",
                                 problem="poisson_glm"),
    "poisson_well_specified": DgpSpec("poisson_well_specified", LINEAR_TERMS, "exp", "poisson",
                                      problem="poisson_glm"),
    "variance_nonlinear": DgpSpec("variance_nonlinear", NONLINEAR_TERMS, problem="variance"),
    "variance_null": DgpSpec("variance_null", problem="variance"),
    "kendall_nonlinear": DgpSpec("kendall_nonlinear", NONLINEAR_TERMS, response="pair",
                                 problem="kendall"),
    "kendall_null": DgpSpec("kendall_null", response="pair", problem="kendall"),
}


def get_dgp(name: str) -> DgpSpec:
    try:
        return FAMILIES[name]
    except KeyError:
        raise InputError(f"unknown DGP {name!r}; choose from {sorted(FAMILIES)}") from None


def n_unlabeled(n: int, gamma: float) -> int:
    if not 0.0 <= gamma < 1.0:
        raise InputError(f"gamma must be in [0, 1), got {gamma}")
    return min(int(round(n * gamma / (1.0 - gamma))), MAX_UNLABELED)


def _draw_response(dgp: DgpSpec, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mu = dgp.conditional_mean(x)
    if dgp.noise == "poisson":
        cols = [rng.poisson(mu).astype(float) for _ in range(dgp.q)]
        return np.column_stack(cols)
    return mu[:, None] + rng.standard_normal((x.shape[0], dgp.q))


def generate(dgp: DgpSpec, n: int, N: int, seed) -> tuple[LabeledData, UnlabeledData]:
    """Draw ``n`` labeled rows, then ``N`` unlabeled covariate rows, from one stream."""
    if n < 2:
        raise InputError("need n >= 2 labeled rows")
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, dgp.d))
    y = _draw_response(dgp, x, rng)
    xu = rng.uniform(size=(N, dgp.d))
    return LabeledData(x, y), UnlabeledData(xu, d=dgp.d)


# ---------------------------------------------------------------- predictions

@dataclass(frozen=True)
class NoisyOracle:
    """Conditional mean plus independent N(0, sigma^2) noise."""

    sigma: float = 1.0
    name = "noisy_oracle"


@dataclass(frozen=True)
class PureNoise:
    """N(0, sigma^2) draws carrying no information about the response."""

    sigma: float = 1.0
    seed: int | None = None
    name = "pure_noise"


@dataclass(frozen=True)
class FromMatrix:
    values: np.ndarray
    name = "matrix"


BUILTIN_MODELS = {"noisy_oracle": NoisyOracle, "pure_noise": PureNoise}


def builtin_predictions(model, dgp: DgpSpec, x_rows, seed=None) -> np.ndarray:
    """Predictions of a builtin model at ``x_rows`` (m x q)."""
    x_rows = np.atleast_2d(np.asarray(x_rows, dtype=float))
    m = x_rows.shape[0]
    if isinstance(model, FromMatrix):
        vals = np.asarray(model.values, dtype=float)
        return vals[:, None] if vals.ndim == 1 else vals
    if isinstance(model, PureNoise) and model.seed is not None and seed is None:
        seed = model.seed
    rng = np.random.default_rng(seed)
    noise = model.sigma * rng.standard_normal((m, dgp.q))
    if isinstance(model, NoisyOracle):
        return dgp.conditional_mean(x_rows)[:, None] + noise
    if isinstance(model, PureNoise):
        return noise
    raise InputError(f"unknown prediction model {model!r}")


def _prediction_stream(seed: int, model_index: int) -> np.random.SeedSequence:
    # independent of the data stream, which uses the plain integer seed
    return np.random.SeedSequence(seed, spawn_key=(1, model_index))


def model_set(model, dgp, labeled, unlabeled, seed, model_index=0) -> PredictionModelSet:
    """Evaluate a builtin on labeled rows then unlabeled rows from one stream."""
    x = np.vstack([labeled.x, unlabeled.x])
    preds = builtin_predictions(model, dgp, x, _prediction_stream(seed, model_index))
    return PredictionModelSet((preds[:labeled.n],), (preds[labeled.n:],))


# ------------------------------------------------------------ population oracles

@lru_cache(maxsize=None)
def _gauss_legendre_square(order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    x1, x2 = np.meshgrid(t, t, indexing="ij")
    ww = np.outer(w, w).ravel()
    return np.column_stack([x1.ravel(), x2.ravel()]), ww


def _poly_moment(terms, power: int = 1) -> float:
    """E[(sum c x1^a x2^b)^power] under Uniform(0,1)^2 for power 1 or 2."""
    if power == 1:
        return sum(c / ((a + 1) * (b + 1)) for c, (a, b) in terms)
    return sum(c1 * c2 / ((a1 + a2 + 1) * (b1 + b2 + 1))
               for c1, (a1, b1) in terms for c2, (a2, b2) in terms)


def _glm_design(x):
    return np.column_stack([np.ones(x.shape[0]), x])


def _poisson_population(dgp: DgpSpec, order: int = 48):
    """Population Poisson-GLM coefficient and information matrix V."""
    nodes, w = _gauss_legendre_square(order)
    mu = dgp.conditional_mean(nodes)
    X = _glm_design(nodes)
    theta = np.zeros(3)
    for _ in range(100):
        lam = np.exp(X @ theta)
        grad = X.T @ (w * (mu - lam))
        info = (X * (w * lam)[:, None]).T @ X
        step = np.linalg.solve(info, grad)
        theta = theta + step
        if np.max(np.abs(step)) < 1e-14:
            break
    info = (X * (w * np.exp(X @ theta))[:, None]).T @ X
    return theta, info


def _kendall_pair_probability(h_left, h_right, scale):
    """P(concordant) for pairs with mean difference ``h_left - h_right``."""
    dd = (h_left - h_right) / scale
    return ndtr(dd) ** 2 + ndtr(-dd) ** 2


def true_theta(dgp: DgpSpec, problem: str | None = None) -> np.ndarray:
    """Population target of ``problem`` (default ``dgp.problem``) under ``dgp``."""
    problem = problem or dgp.problem
    if problem == "mean" and dgp.response == "scalar":
        if dgp.link == "identity":
            return np.array([_poly_moment(dgp.terms)])
        nodes, w = _gauss_legendre_square(48)
        return np.array([w @ dgp.conditional_mean(nodes)])
    if problem == "variance" and dgp.response == "scalar" and dgp.noise == "normal" \
            and dgp.link == "identity":
        m1 = _poly_moment(dgp.terms)
        return np.array([_poly_moment(dgp.terms, 2) - m1 ** 2 + 1.0])
    if problem == "poisson_glm" and dgp.response == "scalar":
        return _poisson_population(dgp)[0]
    if problem == "kendall" and dgp.response == "pair" and dgp.noise == "normal":
        nodes, w = _gauss_legendre_square(40)
        h = dgp.conditional_mean(nodes)
        conc = _kendall_pair_probability(h[:, None], h[None, :], np.sqrt(2.0))
        return np.array([w @ conc @ w])
    raise OracleUnavailable(f"no population oracle for problem {problem!r} under {dgp.name}")


# ---------------------------------------------------------------- bounds

@dataclass
class BoundsResult:
    """Efficiency bounds for one (dgp, problem).

    ``var_resid`` = Var[psi* - phi*] and ``var_phi`` = Var[phi*] are the two
    sample covariances everything else is built from; see ``oss_forms``.
    """

    theta: np.ndarray
    var_resid: np.ndarray
    var_phi: np.ndarray
    var_psi_naive: np.ndarray
    gammas: tuple
    sample_size: int
    method: str = "closed_form"
    flags: tuple = ()

    @property
    def iss_bound(self) -> np.ndarray:
        return self.var_resid

    @property
    def var_psi(self) -> np.ndarray:
        # psi* - phi* has conditional mean zero given X, so it is uncorrelated with phi*
        return self.var_resid + self.var_phi

    def oss_bound(self, gamma: float) -> np.ndarray:
        return self.var_psi - gamma * self.var_phi

    def oss_forms(self, gamma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The three algebraic expressions of the OSS bound.

        Each variance of a combination ``a (psi - phi) + b phi`` is expanded
        as ``a^2 Var[psi - phi] + b^2 Var[phi]``.
        """
        vr, vp = self.var_resid, self.var_phi
        first = (vr + (1 - gamma) ** 2 * vp) + gamma * (1 - gamma) * vp
        second = (vr + vp) - gamma * vp
        third = vr + (1 - gamma) * vp
        return first, second, third

    def oss_bound_naive(self, gamma: float) -> np.ndarray:
        """Var[psi*] - gamma Var[phi*] with the raw sample Var[psi*]."""
        return self.var_psi_naive - gamma * self.var_phi


def population_influences(dgp: DgpSpec, problem: str, x: np.ndarray, y: np.ndarray,
                          quad_order: int = 20):
    """Closed-form (psi*, phi*) evaluated on a sample; both m x p."""
    theta = true_theta(dgp, problem)
    mu = dgp.conditional_mean(x)
    if problem == "mean" and dgp.response == "scalar":
        return y[:, :1] - theta, (mu - theta)[:, None], theta
    if problem == "poisson_glm" and dgp.response == "scalar":
        theta, info = _poisson_population(dgp)
        X = _glm_design(x)
        lam = np.exp(X @ theta)
        v_inv = np.linalg.inv(info)
        return (X * (y[:, 0] - lam)[:, None]) @ v_inv, (X * (mu - lam)[:, None]) @ v_inv, theta
    if problem == "variance" and dgp.response == "scalar" and dgp.noise == "normal" \
            and dgp.link == "identity":
        ey = _poly_moment(dgp.terms)
        psi = (y[:, 0] - ey) ** 2 - theta[0]
        phi = (mu - ey) ** 2 + 1.0 - theta[0]
        return psi[:, None], phi[:, None], theta
    if problem == "kendall" and dgp.response == "pair" and dgp.noise == "normal":
        nodes, w = _gauss_legendre_square(quad_order)
        h_nodes = dgp.conditional_mean(nodes)
        psi = np.empty(x.shape[0])
        phi = np.empty(x.shape[0])
        for lo in range(0, x.shape[0], 4096):
            sl = slice(lo, lo + 4096)
            u, v = y[sl, :1], y[sl, 1:2]
            hn = h_nodes[None, :]
            p = ndtr(hn - u) * ndtr(hn - v) + ndtr(u - hn) * ndtr(v - hn)
            psi[sl] = 2.0 * (p @ w) - 2.0 * theta[0]
            pc = _kendall_pair_probability(mu[sl, None], hn, np.sqrt(2.0))
            phi[sl] = 2.0 * (pc @ w) - 2.0 * theta[0]
        return psi[:, None], phi[:, None], theta
    raise OracleUnavailable(f"no closed-form influence for {problem!r} under {dgp.name}")


def _nested_influences(dgp, problem_name, labeled, seed, inner_draws):
    problem = make_problem(problem_name)
    theta, eta = problem.fit(labeled)
    psi = np.asarray(problem.influence_rows(eta, labeled.x, labeled.y))
    psi = psi[:, None] if psi.ndim == 1 else psi
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    phi = np.zeros_like(psi)
    for _ in range(inner_draws):
        y_inner = _draw_response(dgp, labeled.x, rng)
        out = np.asarray(problem.influence_rows(eta, labeled.x, y_inner))
        phi += out[:, None] if out.ndim == 1 else out
    return psi, phi / inner_draws, np.atleast_1d(theta)


def estimate_bounds(dgp: DgpSpec, problem: str | None = None, gammas=(0.1, 0.3, 0.5, 0.7, 0.9),
                    sample_size: int = 100_000, seed: int = 0, method: str = "auto",
                    inner_draws: int = 200) -> BoundsResult:
    """ISS and OSS efficiency bounds from one large simulated sample.

    ``method="auto"`` uses the closed-form population influences when they
    exist and otherwise falls back to a nested Monte Carlo over Y | X
    (``inner_draws`` per row, around a fit on the same sample); the fallback
    is recorded in ``flags``.
    """
    problem = problem or dgp.problem
    labeled, _ = generate(dgp, sample_size, 0, seed)
    flags = ()
    used = "closed_form"
    if method not in ("auto", "closed_form", "nested_mc"):
        raise InputError(f"unknown bound method {method!r}")
    if method == "nested_mc":
        psi, phi, theta = _nested_influences(dgp, problem, labeled, seed, inner_draws)
        used, flags = "nested_mc", ("nested_mc",)
    else:
        try:
            psi, phi, theta = population_influences(dgp, problem, labeled.x, labeled.y)
        except OracleUnavailable:
            if method == "closed_form":
                raise
            psi, phi, theta = _nested_influences(dgp, problem, labeled, seed, inner_draws)
            used, flags = "nested_mc", ("nested_mc",)
    return BoundsResult(theta=np.asarray(theta, dtype=float),
                        var_resid=sample_covariance(psi - phi), var_phi=sample_covariance(phi),
                        var_psi_naive=sample_covariance(psi), gammas=tuple(gammas),
                        sample_size=sample_size, method=used, flags=flags)


def bounds_table(result: BoundsResult) -> str:
    """CSV text: one row per gamma plus a gamma = 1 row holding the ISS bound."""
    p = result.var_phi.shape[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["gamma", "kind"] + [f"bound_{j}" for j in range(p)] + ["method"])
    for g in result.gammas:
        diag = np.diag(result.oss_bound(g))
        w.writerow([_fmt(g), "oss"] + [_fmt(v) for v in diag] + [result.method])
    w.writerow([_fmt(1.0), "iss"] + [_fmt(v) for v in np.diag(result.iss_bound)] + [result.method])
    return buf.getvalue()


# ---------------------------------------------------------------- Monte Carlo

ESTIMATOR_NAMES = ("supervised", "safe", "efficient:2", "efficient:3", "efficient:4",
                   "ppi:noisy_oracle", "ppi:pure_noise", "ppi++:noisy_oracle", "ppi++:pure_noise")


def parse_estimator(label: str) -> tuple[str, str | None]:
    kind, _, arg = label.partition(":")
    if kind == "supervised" and not arg:
        return kind, None
    if kind == "safe":
        BasisSpec.parse(arg or "identity")
        return kind, arg or "identity"
    if kind == "efficient":
        if not arg.isdigit() or int(arg) < 2:
            raise InputError(f"efficient estimator needs a spline df >= 2, got {label!r}")
        return kind, arg
    if kind in ("ppi", "ppi++") and arg in BUILTIN_MODELS:
        return kind, arg
    raise InputError(f"unknown estimator {label!r}")


@dataclass(frozen=True)
class McConfig:
    dgp: DgpSpec
    n: int = 1000
    gammas: tuple = (0.1, 0.5, 0.9)
    replications: int = 1000
    base_seed: int = 0
    estimators: tuple = ESTIMATOR_NAMES
    level: float = 0.95
    problem: str | None = None
    prediction_sigma: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise InputError("n must be at least 2")
        if self.replications < 1:
            raise InputError("need at least one replication")
        for g in self.gammas:
            if not 0.0 <= g < 1.0:
                raise InputError(f"gamma must be in [0, 1), got {g}")
        for e in self.estimators:
            parse_estimator(e)
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "estimators", tuple(self.estimators))

    @property
    def problem_name(self) -> str:
        return self.problem or self.dgp.problem


def run_estimator(label: str, problem, labeled, unlabeled, dgp, seed, level=0.95, sigma=1.0):
    """Run one menu entry on one dataset; ``seed`` feeds the prediction streams."""
    kind, arg = parse_estimator(label)
    if kind == "supervised":
        return supervised_estimate(problem, labeled, level, unlabeled)
    if kind == "safe":
        return safe_estimate(problem, labeled, unlabeled, BasisSpec.parse(arg), level=level)
    if kind == "efficient":
        return efficient_estimate(problem, labeled, unlabeled, int(arg), level=level)
    model = BUILTIN_MODELS[arg](sigma=sigma)
    models = model_set(model, dgp, labeled, unlabeled, seed, list(BUILTIN_MODELS).index(arg))
    if kind == "ppi":
        return ppi_estimate(problem, labeled, unlabeled, models, level)
    return ppi_plus_plus_baseline(problem, labeled, unlabeled, models, level)


def _replicate(args):
    config, r = args
    seed = config.base_seed + r
    problem = make_problem(config.problem_name)
    out = []
    for g in config.gammas:
        labeled, unlabeled = generate(config.dgp, config.n, n_unlabeled(config.n, g), seed)
        for label in config.estimators:
            t0 = time.perf_counter()
            try:
                rep = run_estimator(label, problem, labeled, unlabeled, config.dgp, seed,
                                    config.level, config.prediction_sigma)
                res = (rep.theta, rep.se, rep.ci_lower, rep.ci_upper, None)
            except SemisupError as exc:
                res = (None, None, None, None, type(exc).__name__)
            out.append((g, label, res, time.perf_counter() - t0))
    return out


@dataclass
class CellResult:
    """Per-replication output of one (estimator, gamma) cell; failed rows are NaN."""

    estimator: str
    gamma: float
    n: int
    N: int
    theta: np.ndarray
    se: np.ndarray
    covered: np.ndarray
    failures: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def ok(self) -> np.ndarray:
        return ~np.isnan(self.theta[:, 0])

    @property
    def fail_count(self) -> int:
        return int(sum(self.failures.values()))

    @property
    def emp_se(self) -> np.ndarray:
        t = self.theta[self.ok]
        return t.std(axis=0, ddof=1) if t.shape[0] > 1 else np.full(t.shape[1], np.nan)

    def _ok_mean(self, values) -> np.ndarray:
        if not self.ok.any():
            return np.full(values.shape[1], np.nan)
        return values[self.ok].mean(axis=0)

    @property
    def mean_se(self) -> np.ndarray:
        return self._ok_mean(self.se)

    @property
    def coverage(self) -> np.ndarray:
        return self._ok_mean(self.covered)


@dataclass
class McResult:
    config: McConfig
    truth: np.ndarray
    cells: dict

    def cell(self, estimator: str, gamma: float) -> CellResult:
        return self.cells[(estimator, float(gamma))]

    def bootstrap_se(self, estimator, gamma, other=None, component=0, B=2000, seed=0):
        """Bootstrap standard error of an empirical SE, or of a difference of two
        empirical SEs computed on the same replications."""
        a = self.cell(estimator, gamma)
        keep = a.ok.copy()
        if other is not None:
            b = self.cell(other, gamma)
            keep &= b.ok
        ta = a.theta[keep, component]
        tb = self.cell(other, gamma).theta[keep, component] if other is not None else None
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, ta.size, size=(B, ta.size))
        stat = ta[idx].std(axis=1, ddof=1)
        if tb is not None:
            stat = stat - tb[idx].std(axis=1, ddof=1)
        return float(stat.std(ddof=1))

    def to_csv(self) -> str:
        p = self.truth.size
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "gamma", "n", "N", "reps"]
                   + [f"emp_se_{j}" for j in range(p)] + [f"mean_se_{j}" for j in range(p)]
                   + [f"coverage_{j}" for j in range(p)] + ["fail_count"])
        for label in self.config.estimators:
            for g in self.config.gammas:
                c = self.cell(label, g)
                w.writerow([label, _fmt(g), c.n, c.N, self.config.replications]
                           + [_fmt(v) for v in c.emp_se] + [_fmt(v) for v in c.mean_se]
                           + [_fmt(v) for v in c.coverage] + [c.fail_count])
        return buf.getvalue()


def worker_count() -> int:
    raw = os.environ.get("SEMISUP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"SEMISUP_THREADS must be an integer, got {raw!r}") from None


def run_monte_carlo(config: McConfig, workers: int | None = None) -> McResult:
    """Replicate every (estimator, gamma) cell; replication r uses seed base_seed + r.

    Work is split by replication over ``workers`` processes (default from
    SEMISUP_THREADS); results are assembled by replication index so the
    output does not depend on the schedule.
    """
    workers = workers or worker_count()
    truth = true_theta(config.dgp, config.problem_name)
    tasks = [(config, r) for r in range(config.replications)]
    if workers == 1:
        rows = [_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_replicate, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    p = truth.size
    R = config.replications
    cells = {}
    for g in config.gammas:
        for label in config.estimators:
            cells[(label, g)] = CellResult(label, g, config.n, n_unlabeled(config.n, g),
                                           np.full((R, p), np.nan), np.full((R, p), np.nan),
                                           np.zeros((R, p), dtype=bool))
    for r, rep_rows in enumerate(rows):
        for g, label, (theta, se, lo, hi, err), dt in rep_rows:
            c = cells[(label, g)]
            c.runtime += dt / R
            if err is not None:
                c.failures[err] = c.failures.get(err, 0) + 1
                continue
            c.theta[r] = theta
            c.se[r] = se
            c.covered[r] = (lo <= truth) & (truth <= hi)
    return McResult(config, truth, cells)


def _fmt(v) -> str:
    return "nan" if v != v else format(float(v), ".12g")
