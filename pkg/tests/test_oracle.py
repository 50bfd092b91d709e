import numpy as np
import pytest

from krpsgd import oracle
from krpsgd.errors import OracleCapError
from krpsgd.sampling import SampleBatch, skr_product, LEVERAGE
from krpsgd.solver import stochastic_gradient
from krpsgd.tensor import DenseTensor, KruskalModel
from krpsgd.verify import exhaustive_batch, run_checks, tiny_problem


def test_ordered_tuples_first_entry_fastest():
    assert list(oracle.ordered_tuples([2, 3])) == [(1, 1), (2, 1), (1, 2), (2, 2), (1, 3), (2, 3)]


def test_explicit_krp_of_identities():
    np.testing.assert_array_equal(
        oracle.explicit_krp([np.eye(2), np.eye(2)]),
        [[1, 0], [0, 0], [0, 0], [0, 1]],
    )


def test_explicit_krp_cap():
    with pytest.raises(OracleCapError):
        oracle.explicit_krp([np.ones((50, 1)), np.ones((50, 1))], cap=100)


def test_unfold_by_definition_example(cube_1_to_8):
    np.testing.assert_array_equal(
        oracle.unfold_by_definition(cube_1_to_8, 1), [[1, 3, 5, 7], [2, 4, 6, 8]]
    )
    np.testing.assert_array_equal(
        oracle.unfold_by_definition(cube_1_to_8, 3), [[1, 2, 3, 4], [5, 6, 7, 8]]
    )


def test_exact_krp_leverage_of_identities():
    np.testing.assert_allclose(oracle.exact_krp_leverage([np.eye(2), np.eye(2)]), [1, 0, 0, 1], atol=1e-14)


def test_full_gradient_of_exact_model_is_zero(rng):
    model = KruskalModel(tuple(rng.standard_normal((d, 2)) for d in (2, 3, 2)))
    X = DenseTensor.from_array(np.einsum("ir,jr,kr->ijk", *model.factors))
    for mode in (1, 2, 3):
        np.testing.assert_allclose(oracle.full_gradient(X, model, mode), 0.0, atol=1e-12)


def test_monte_carlo_single_trial_equals_estimate():
    X, model = tiny_problem()
    batch = exhaustive_batch(X, model, 1)
    mean, stderr = oracle.monte_carlo_mean_gradient(
        X, model, 1, lambda g: batch, stochastic_gradient, 1, np.random.default_rng(0)
    )
    np.testing.assert_array_equal(mean, stochastic_gradient(model, X, batch))
    assert not stderr.any()


def test_monte_carlo_deterministic_draw_has_zero_stderr():
    X, model = tiny_problem()
    idx = np.array([[1, 2], [3, 1]])
    batch = SampleBatch(1, LEVERAGE, idx, skr_product(idx, model.other_factors(1)), row_probs=np.full(2, 0.1))
    _, stderr = oracle.monte_carlo_mean_gradient(
        X, model, 1, lambda g: batch, stochastic_gradient, 10, np.random.default_rng(0)
    )
    np.testing.assert_allclose(stderr, 0.0, atol=1e-12)


def test_relative_frobenius_example():
    assert oracle.relative_frobenius(np.array([3.0, 4.0]), np.array([3.0, 0.0])) == pytest.approx(4 / 3)


def test_cheap_checks_pass():
    report = run_checks(["index_bijection", "skr_fidelity", "leverage_bound",
                         "exhaustive_batch", "finite_difference", "noise_identity"])
    assert report.passed, report.to_text()


def test_tampered_estimator_fails_verification():
    flipped = lambda m, x, b: -stochastic_gradient(m, x, b)
    report = run_checks(["unbiasedness", "exhaustive_batch"], trials=500, gradient=flipped)
    assert [c.passed for c in report.checks] == [False, False]


def test_unknown_check_is_rejected():
    with pytest.raises(ValueError):
        run_checks(["nope"])
