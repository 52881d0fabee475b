import numpy as np
import pytest

from semisup.core import (EstimateReport, InferenceProblem, InputError, LabeledData,
                          NonFiniteInfluence, PredictionUnsupported, UnlabeledData,
                          influence_matrix)
from semisup.problems import MeanProblem, VarianceUstatProblem


def test_labeled_data_shapes_and_immutability():
    lab = LabeledData([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert lab.x.shape == (3, 1) and lab.y.shape == (3, 1)
    assert (lab.n, lab.d) == (3, 1)
    with pytest.raises(ValueError):
        lab.x[0, 0] = 9.0


@pytest.mark.parametrize("x, y", [
    ([[1.0]], [1.0]),                      # n < 2
    ([1.0, np.nan], [1.0, 2.0]),           # non-finite
    ([1.0, 2.0, 3.0], [1.0, 2.0]),         # row mismatch
])
def test_labeled_data_rejects_bad_input(x, y):
    with pytest.raises(InputError):
        LabeledData(x, y)


def test_nonfinite_error_names_row():
    with pytest.raises(InputError, match="row 2"):
        LabeledData([[0.0], [1.0], [np.inf]], [1.0, 2.0, 3.0])


def test_unlabeled_may_be_empty_and_checks_width():
    lab = LabeledData(np.zeros((3, 2)) + np.arange(3)[:, None], [1.0, 2.0, 3.0])
    empty = UnlabeledData.empty(2)
    assert empty.N == 0
    empty.check_compatible(lab)
    with pytest.raises(InputError):
        UnlabeledData(np.zeros((4, 3))).check_compatible(lab)


def test_influence_matrix_mean_rows():
    prob = MeanProblem()
    lab = LabeledData([0.0, 0.0, 0.0], [1.0, 2.0, 3.0])
    theta, eta = prob.fit(lab)
    np.testing.assert_array_equal(influence_matrix(prob, eta, lab), [[-1.0], [0.0], [1.0]])


def test_influence_matrix_variance_rows():
    # theta = 1, ybar = 2: ((1-2)^2 - 1, 0 - 1 + 1, (3-2)^2 - 1)
    prob = VarianceUstatProblem()
    lab = LabeledData([0.0, 0.0, 0.0], [1.0, 2.0, 3.0])
    theta, eta = prob.fit(lab)
    np.testing.assert_allclose(influence_matrix(prob, eta, lab), [[0.0], [-1.0], [0.0]])


def test_influence_matrix_permutation_equivariant():
    rng = np.random.default_rng(3)
    lab = LabeledData(rng.uniform(size=(12, 2)), rng.normal(size=12))
    prob = VarianceUstatProblem()
    _, eta = prob.fit(lab)
    perm = rng.permutation(12)
    np.testing.assert_allclose(influence_matrix(prob, eta, lab.take(perm)),
                               influence_matrix(prob, eta, lab)[perm])


class _Broken(InferenceProblem):
    name = "broken"

    def fit(self, labeled):
        return np.zeros(1), None

    def influence_rows(self, eta, x, y):
        out = np.zeros((x.shape[0], 1))
        out[1] = np.nan
        return out


def test_nonfinite_influence_reports_row():
    lab = LabeledData([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
    with pytest.raises(NonFiniteInfluence) as err:
        influence_matrix(_Broken(), None, lab)
    assert err.value.row == 1


def test_prediction_unsupported_by_default():
    prob = _Broken()
    assert not prob.supports_prediction()
    with pytest.raises(PredictionUnsupported):
        prob.influence_at_prediction(None, [0.0], [0.0])
    assert MeanProblem().supports_prediction()


def test_report_to_dict_round_trip():
    rep = EstimateReport(method="safe", theta=np.array([1.0]), sigma=np.array([[4.0]]),
                         se=np.array([0.2]), ci_lower=np.array([0.6]), ci_upper=np.array([1.4]),
                         level=0.95, n=100, N=300, gamma_hat=0.75, correction=np.array([0.1]),
                         theta_supervised=np.array([1.1]))
    d = rep.to_dict()
    assert d["ci"] == [[0.6, 1.4]]
    assert d["gamma_hat"] == 0.75 and d["sigma"] == [[4.0]]
    assert rep.p == 1
