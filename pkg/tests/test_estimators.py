import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from semisup.basis import BasisSpec
from semisup.core import LabeledData, PredictionUnsupported, UnlabeledData, UnsupportedProblem
from semisup.estimators import (BasisTooLarge, NonFinitePrediction, PredictionModelSet, Regime,
                                efficient_estimate, ppi_estimate, ppi_plus_plus_baseline,
                                safe_estimate, supervised_estimate)
from semisup.problems import (AteProblem, KendallTauProblem, MeanProblem, PoissonGlmProblem,
                              VarianceUstatProblem)


def _data(seed, n=40, N=60, d=2, nonlinear=True):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n + N, d))
    m = 1 + 2 * x[:, 0] - x[:, -1] + (3 * x[:, 0] * x[:, -1] if nonlinear else 0)
    y = m + rng.normal(size=n + N)
    return LabeledData(x[:n], y[:n]), UnlabeledData(x[n:]), m


# ---- hand examples

def test_supervised_mean_example():
    rep = supervised_estimate(MeanProblem(), LabeledData([0.0, 1.0, 2.0], [1.0, 2.0, 3.0]))
    assert rep.theta.tolist() == [2.0]
    np.testing.assert_allclose(rep.sigma, [[2 / 3]])
    np.testing.assert_allclose(rep.se, [np.sqrt(2 / 9)])
    assert rep.ci_lower[0] < 2.0 < rep.ci_upper[0]


def test_supervised_other_problems():
    lab = LabeledData(np.ones((3, 1)), [1.0, 2.0, 3.0])
    rep = supervised_estimate(PoissonGlmProblem(include_intercept=False), lab)
    assert abs(rep.theta[0] - np.log(2)) < 1e-10
    assert supervised_estimate(VarianceUstatProblem(), lab).theta.tolist() == [1.0]


def test_safe_symmetric_hand_example():
    rep = safe_estimate(MeanProblem(), LabeledData([[0.0], [1.0]], [0.0, 2.0]),
                        UnlabeledData([[0.5], [0.5]]))
    assert rep.theta.tolist() == [1.0]
    assert rep.gamma_hat == 0.5


def test_safe_constant_response_is_unchanged():
    lab, unl, _ = _data(1)
    const = LabeledData(lab.x, np.full(lab.n, 3.0))
    rep = safe_estimate(MeanProblem(), const, unl)
    assert rep.theta.tolist() == [3.0]
    assert not rep.correction.any()


def test_ci_uses_normal_quantile():
    lab, unl, _ = _data(2)
    rep = safe_estimate(MeanProblem(), lab, unl, level=0.9)
    np.testing.assert_allclose((rep.ci_upper - rep.theta) / rep.se, 1.6448536269514722)
    with pytest.raises(ValueError):
        safe_estimate(MeanProblem(), lab, unl, level=1.0)


# ---- brute-force oracle on tiny instances

def _tiny(rng, n_min=2):
    n = int(rng.integers(n_min, 11))
    N = int(rng.integers(1, 11))
    d = int(rng.integers(1, 3))
    x = rng.uniform(size=(n + N, d))
    return n, N, d, x


@pytest.mark.parametrize("seed", range(200))
def test_safe_mean_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n, N, d, x = _tiny(rng)
    y = x.sum(axis=1) ** 2 + rng.normal(size=n + N)
    lab, unl = LabeledData(x[:n], y[:n]), UnlabeledData(x[n:])
    basis = BasisSpec.polynomial(2) if seed % 2 else BasisSpec.identity()
    rep = safe_estimate(MeanProblem(), lab, unl, basis)
    theta, phi = oracles.mean_fit(list(y[:n]))
    g = np.column_stack([x ** k for k in ((1, 2) if seed % 2 else (1,))]) if d == 1 else \
        (np.column_stack([x[:, [0]], x[:, [0]] ** 2, x[:, [1]], x[:, [1]] ** 2]) if seed % 2 else x)
    corr = oracles.projection_correction(phi, g[:n], g[n:])
    assert abs(rep.theta[0] - (theta[0] - corr[0])) < 1e-8


def test_safe_iss_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, N, d, x = _tiny(rng, n_min=4)
        y = 2 * x[:, 0] + rng.normal(size=n + N)
        lab = LabeledData(x[:n], y[:n])
        mean_g = np.full(d, 0.5)
        gram = np.eye(d) / 12
        _, phi = oracles.mean_fit(list(y[:n]))
        for regime, ref_gram in ((Regime.iss(mean_g, gram), gram), (Regime.iss(mean_g), None)):
            rep = safe_estimate(MeanProblem(), lab, None, regime=regime)
            corr = oracles.projection_correction(phi, x[:n], None, mean_g, ref_gram)
            assert abs(rep.theta[0] - (y[:n].mean() - corr[0])) < 1e-8


def test_safe_u_statistics_and_ate_match_oracle():
    rng = np.random.default_rng(1)
    for _ in range(60):
        n, N, d, x = _tiny(rng, n_min=3)
        yy = rng.normal(size=(n, 2)) + x[:n, :1]
        lab_k = LabeledData(x[:n], yy)
        rep = safe_estimate(KendallTauProblem(), lab_k, UnlabeledData(x[n:]))
        theta, phi = oracles.kendall_fit(list(yy[:, 0]), list(yy[:, 1]))
        corr = oracles.projection_correction(phi, x[:n], x[n:])
        assert abs(rep.theta[0] - (theta[0] - corr[0])) < 1e-8

        rep = safe_estimate(VarianceUstatProblem(), LabeledData(x[:n], yy[:, 0]), UnlabeledData(x[n:]))
        theta, phi, _ = oracles.variance_fit(list(yy[:, 0]))
        corr = oracles.projection_correction(phi, x[:n], x[n:])
        assert abs(rep.theta[0] - (theta[0] - corr[0])) < 1e-8

    # AIPW with forced nuisances: influence is 2 a y - theta
    for _ in range(40):
        n, N, d, x = _tiny(rng, n_min=3)
        a = (rng.uniform(size=n) < 0.5).astype(float)
        a[0] = 1.0
        yv = rng.normal(size=n)
        lab = LabeledData(x[:n], np.column_stack([a, yv]))
        rep = safe_estimate(AteProblem(fixed_propensity=0.5, fixed_outcome=0.0), lab,
                            UnlabeledData(x[n:]))
        pseudo = 2 * a * yv
        theta = pseudo.mean()
        corr = oracles.projection_correction((pseudo - theta)[:, None], x[:n], x[n:])
        assert abs(rep.theta[0] - (theta - corr[0])) < 1e-8


def test_safe_glm_matches_oracle():
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 40:
        n, N, d, x = _tiny(rng, n_min=6)
        y = rng.poisson(np.exp(0.5 + x[:n, 0])).astype(float)
        X = np.column_stack([np.ones(n), x[:n]])
        if y.sum() == 0 or np.linalg.matrix_rank(X) < X.shape[1] or np.all(y[y > 0] == y.max()) and (y > 0).sum() < 2:
            continue
        try:
            rep = safe_estimate(PoissonGlmProblem(), LabeledData(x[:n], y), UnlabeledData(x[n:]))
        except ArithmeticError:
            continue  # separation on a tiny sample: no finite MLE
        b, phi, _ = oracles.poisson_fit(X, y)
        corr = oracles.projection_correction(phi, x[:n], x[n:])
        np.testing.assert_allclose(rep.theta, b - corr, atol=1e-8)
        checked += 1


def test_efficient_matches_cardinal_spline_oracle():
    rng = np.random.default_rng(3)
    for _ in range(60):
        d = int(rng.integers(1, 3))
        df = int(rng.integers(2, 4)) if d == 1 else 2
        n = int(rng.integers(2 * df ** d + 1, 11))
        N = int(rng.integers(1, 11))
        x = rng.uniform(size=(n + N, d))
        y = np.sin(4 * x[:, 0]) + rng.normal(size=n + N)
        rep = efficient_estimate(MeanProblem(), LabeledData(x[:n], y[:n]), UnlabeledData(x[n:]), df)
        g = oracles.spline_design(x, x, df)
        _, phi = oracles.mean_fit(list(y[:n]))
        corr = oracles.projection_correction(phi, g[:n], g[n:])
        assert abs(rep.theta[0] - (y[:n].mean() - corr[0])) < 1e-8


def test_ppi_matches_oracle():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n, N, d, x = _tiny(rng, n_min=3)
        y = x[:, 0] + rng.normal(size=n + N)
        K = int(rng.integers(1, 3))
        preds = [x[:, 0] + rng.normal(scale=0.5, size=n + N) for _ in range(K)]
        models = PredictionModelSet(tuple(p[:n] for p in preds), tuple(p[n:] for p in preds))
        rep = ppi_estimate(MeanProblem(), LabeledData(x[:n], y[:n]), UnlabeledData(x[n:]), models)
        theta, phi = oracles.mean_fit(list(y[:n]))
        g = np.column_stack([p - theta[0] for p in preds])
        corr = oracles.projection_correction(phi, g[:n], g[n:])
        assert abs(rep.theta[0] - (theta[0] - corr[0])) < 1e-8


def test_ppi_glm_matches_oracle():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 30:
        n, N, d, x = _tiny(rng, n_min=7)
        y = rng.poisson(np.exp(0.5 + x[:n, 0])).astype(float)
        X = np.column_stack([np.ones(n + N), x])
        if np.linalg.matrix_rank(X[:n]) < X.shape[1] or len(set(y)) < 2:
            continue
        f = rng.normal(size=n + N)
        models = PredictionModelSet((f[:n],), (f[n:],))
        try:
            rep = ppi_estimate(PoissonGlmProblem(), LabeledData(x[:n], y), UnlabeledData(x[n:]), models)
        except ArithmeticError:
            continue
        b, phi, Vinv = oracles.poisson_fit(X[:n], y)
        g = oracles.poisson_prediction_influence(b, Vinv, X, f)
        corr = oracles.projection_correction(phi, g[:n], g[n:])
        np.testing.assert_allclose(rep.theta, b - corr, atol=1e-8)
        checked += 1


def test_ppi_plus_plus_matches_oracle():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n, N, d, x = _tiny(rng, n_min=3)
        N = max(N, 2)
        x = rng.uniform(size=(n + N, d))
        y = x[:, 0] + rng.normal(size=n + N)
        f = x[:, 0] + rng.normal(scale=0.3, size=n + N)
        models = PredictionModelSet((f[:n],), (f[n:],))
        rep = ppi_plus_plus_baseline(MeanProblem(), LabeledData(x[:n], y[:n]), UnlabeledData(x[n:]),
                                     models)
        theta, phi = oracles.mean_fit(list(y[:n]))
        corr, omega = oracles.ppi_plus_plus(phi, (f[:n] - theta[0])[:, None], (f[n:] - theta[0])[:, None])
        assert abs(rep.theta[0] - (theta[0] - corr[0])) < 1e-8
        assert abs(rep.extra["omega"] - omega) < 1e-8


# ---- exact reductions and invariances

PROBLEM_DATA = {
    "mean": lambda lab: (MeanProblem(), lab),
    "variance": lambda lab: (VarianceUstatProblem(), lab),
    "kendall": lambda lab: (KendallTauProblem(),
                            LabeledData(lab.x, np.column_stack([lab.y[:, 0], lab.x[:, 0] + lab.y[:, 0]]))),
    "glm": lambda lab: (PoissonGlmProblem(),
                        LabeledData(lab.x, np.round(np.abs(lab.y[:, 0])))),
}


@pytest.mark.parametrize("name", sorted(PROBLEM_DATA))
def test_no_unlabeled_reduces_to_supervised(name):
    lab0, _, _ = _data(7, n=60)
    prob, lab = PROBLEM_DATA[name](lab0)
    sup = supervised_estimate(prob, lab)
    empty = UnlabeledData.empty(lab.d)
    preds = PredictionModelSet((lab.y[:, :prob_q(prob)] + 0.1,), (np.empty((0, prob_q(prob))),))
    reports = [safe_estimate(prob, lab, empty), safe_estimate(prob, lab, None, BasisSpec.polynomial(2)),
               efficient_estimate(prob, lab, empty, 3), ppi_estimate(prob, lab, empty, preds)]
    if prob.m_estimation:
        reports.append(ppi_plus_plus_baseline(prob, lab, empty, preds))
    for rep in reports:
        np.testing.assert_array_equal(rep.theta, sup.theta)
        np.testing.assert_allclose(rep.sigma, sup.sigma, atol=1e-12)
        assert rep.gamma_hat == 0.0


def prob_q(prob):
    return 2 if isinstance(prob, KendallTauProblem) else 1


def test_efficient_projection_idempotence():
    # targets equal to a basis column are reproduced exactly; with N = 0 the
    # correction is their labeled mean after centering, i.e. 0
    rng = np.random.default_rng(8)
    x = rng.uniform(size=(30, 1))
    y = BasisSpec.spline(2).fit(x).transform(x)[:, 1]
    rep = efficient_estimate(MeanProblem(), LabeledData(x, y), None, 2)
    assert abs(rep.correction[0]) < 1e-12


@given(st.integers(0, 10_000))
def test_affine_invariance_of_basis(seed):
    rng = np.random.default_rng(seed)
    lab, unl, _ = _data(seed, n=30, N=25)
    A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    b = rng.normal(size=2)
    base = safe_estimate(MeanProblem(), lab, unl)
    lab2 = LabeledData(lab.x @ A.T + b, lab.y)
    unl2 = UnlabeledData(unl.x @ A.T + b)
    moved = safe_estimate(MeanProblem(), lab2, unl2)
    assert abs(base.theta[0] - moved.theta[0]) < 1e-8


@given(st.integers(0, 10_000))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    lab, unl, _ = _data(seed, n=25, N=20)
    base = safe_estimate(MeanProblem(), lab, unl, BasisSpec.polynomial(2))
    p1, p2 = rng.permutation(lab.n), rng.permutation(unl.N)
    perm = safe_estimate(MeanProblem(), lab.take(p1), UnlabeledData(unl.x[p2]), BasisSpec.polynomial(2))
    np.testing.assert_allclose(perm.theta, base.theta, atol=1e-12)
    np.testing.assert_allclose(perm.sigma, base.sigma, atol=1e-12)


@given(st.integers(0, 10_000), st.sampled_from(["identity", "poly:3", "spline:3"]))
def test_variance_dominance_and_psd(seed, basis):
    lab, unl, _ = _data(seed, n=60, N=int(seed % 90))
    for prob, data in (PROBLEM_DATA["mean"](lab), PROBLEM_DATA["glm"](lab), PROBLEM_DATA["kendall"](lab)):
        sup = supervised_estimate(prob, data)
        rep = safe_estimate(prob, data, unl, BasisSpec.parse(basis))
        assert np.all(np.diag(rep.sigma) <= np.diag(sup.sigma) + 1e-10)
        assert np.linalg.eigvalsh(rep.sigma).min() >= -1e-8 * np.trace(rep.sigma)
        assert np.all(rep.ci_lower <= rep.theta) and np.all(rep.theta <= rep.ci_upper)


def test_report_invariants():
    lab, unl, _ = _data(9)
    rep = safe_estimate(PoissonGlmProblem(), LabeledData(lab.x, np.round(np.abs(lab.y[:, 0]))), unl)
    np.testing.assert_array_equal(rep.sigma, rep.sigma.T)
    assert rep.gamma_hat == unl.N / (lab.n + unl.N)
    np.testing.assert_allclose(rep.se, np.sqrt(np.diag(rep.sigma) / lab.n))
    np.testing.assert_allclose(rep.theta_supervised - rep.correction, rep.theta)


# ---- PPI details

def test_ppi_constant_model_is_supervised():
    lab, unl, _ = _data(10)
    models = PredictionModelSet((np.full(lab.n, 2.0),), (np.full(unl.N, 2.0),))
    rep = ppi_estimate(MeanProblem(), lab, unl, models)
    assert rep.theta[0] == lab.y.mean()
    assert any(f.startswith("dropped_columns") for f in rep.flags)


def test_ppi_duplicate_model_triggers_ridge():
    lab, unl, m = _data(11)
    rng = np.random.default_rng(11)
    f = m + rng.normal(scale=0.5, size=m.size)
    one = PredictionModelSet((f[:lab.n],), (f[lab.n:],))
    two = PredictionModelSet((f[:lab.n], f[:lab.n]), (f[lab.n:], f[lab.n:]))
    r1 = ppi_estimate(MeanProblem(), lab, unl, one)
    r2 = ppi_estimate(MeanProblem(), lab, unl, two)
    assert "ridge" in r2.flags
    assert abs(r1.theta[0] - r2.theta[0]) < 1e-6


def test_ppi_with_perfect_predictions_matches_oracle():
    rng = np.random.default_rng(12)
    x = rng.uniform(size=(10, 1))
    y = rng.normal(size=10)
    f = np.concatenate([y[:6], rng.normal(size=4)])
    rep = ppi_estimate(MeanProblem(), LabeledData(x[:6], y[:6]), UnlabeledData(x[6:]),
                       PredictionModelSet((f[:6],), (f[6:],)))
    theta, phi = oracles.mean_fit(list(y[:6]))
    g = (f - theta[0])[:, None]
    assert abs(rep.theta[0] - (theta[0] - oracles.projection_correction(phi, g[:6], g[6:])[0])) < 1e-12


def test_ppi_errors():
    lab, unl, _ = _data(13)
    y2 = LabeledData(lab.x, np.column_stack([np.ones(lab.n), lab.y[:, 0]]))
    f = PredictionModelSet((np.zeros(lab.n),), (np.zeros(unl.N),))
    with pytest.raises(PredictionUnsupported):
        ppi_estimate(AteProblem(fixed_propensity=0.5, fixed_outcome=0.0), y2, unl, f)
    with pytest.raises(UnsupportedProblem):
        ppi_plus_plus_baseline(VarianceUstatProblem(), lab, unl, f)
    with pytest.raises(NonFinitePrediction):
        PredictionModelSet((np.array([np.nan] * lab.n),), (np.zeros(unl.N),))


def test_ppi_plus_plus_invariant_to_duplicating_rows():
    lab, unl, m = _data(14)
    f = m + np.random.default_rng(14).normal(size=m.size)
    models = PredictionModelSet((f[:lab.n],), (f[lab.n:],))
    r1 = ppi_plus_plus_baseline(MeanProblem(), lab, unl, models)
    lab2 = LabeledData(np.vstack([lab.x, lab.x]), np.vstack([lab.y, lab.y]))
    unl2 = UnlabeledData(np.vstack([unl.x, unl.x]))
    models2 = PredictionModelSet((np.tile(f[:lab.n], 2),), (np.tile(f[lab.n:], 2),))
    r2 = ppi_plus_plus_baseline(MeanProblem(), lab2, unl2, models2)
    np.testing.assert_allclose(r2.theta, r1.theta, atol=1e-12)
    assert abs(r2.extra["omega"] - r1.extra["omega"]) < 1e-12


def test_ppi_plus_plus_close_to_ppi_for_scalar_mean():
    lab, unl, m = _data(15, n=500, N=1500)
    f = m + np.random.default_rng(15).normal(size=m.size)
    models = PredictionModelSet((f[:lab.n],), (f[lab.n:],))
    a = ppi_plus_plus_baseline(MeanProblem(), lab, unl, models)
    b = ppi_estimate(MeanProblem(), lab, unl, models)
    assert abs(a.theta[0] - b.theta[0]) < 5 * b.se[0]


def test_ppi_plus_plus_weight_near_zero_for_noise_model():
    omegas = []
    for seed in range(200):
        lab, unl, _ = _data(seed, n=100, N=100)
        rng = np.random.default_rng(10_000 + seed)
        models = PredictionModelSet((rng.normal(size=lab.n),), (rng.normal(size=unl.N),))
        omegas.append(ppi_plus_plus_baseline(MeanProblem(), lab, unl, models).extra["omega"])
    omegas = np.array(omegas)
    assert abs(omegas.mean()) < 3 * omegas.std(ddof=1) / np.sqrt(omegas.size)


# ---- guards

def test_efficient_basis_too_large():
    lab, unl, _ = _data(16, n=30)
    with pytest.raises(BasisTooLarge):
        efficient_estimate(MeanProblem(), lab, unl, 4)   # 16 >= 15
    efficient_estimate(MeanProblem(), lab, unl, 3)


def test_regime_validation():
    with pytest.raises(ValueError):
        Regime("iss")
    with pytest.raises(ValueError):
        Regime("semi")
