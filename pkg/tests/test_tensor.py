import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krpsgd import oracle
from krpsgd.cpt import read_model, read_tensor, write_model, write_tensor
from krpsgd.errors import FormatError, IndexRangeError, ShapeError, UndefinedMeasureError
from krpsgd.tensor import (
    DenseTensor,
    KruskalModel,
    extract_fibers,
    fiber_count,
    khatri_rao,
    linear_index,
    linear_indices,
    objective,
    reconstruct,
    relative_error,
)

from tests.conftest import small_model


@st.composite
def shape_and_mode(draw, min_ndim=3, max_ndim=4, max_dim=5):
    dims = tuple(draw(st.lists(st.integers(1, max_dim), min_size=min_ndim, max_size=max_ndim)))
    mode = draw(st.integers(1, len(dims)))
    return dims, mode


# index map

@pytest.mark.parametrize(
    "mode, entries, expected",
    [(1, (1, 1), 1), (1, (3, 4), 12), (2, (2, 1), 2), (3, (2, 3), 6), (2, (1, 2), 3)],
)
def test_linear_index_examples(mode, entries, expected):
    assert linear_index(mode, entries, (2, 3, 4)) == expected


@pytest.mark.parametrize("entries", [(0, 1), (4, 1), (1, 5)])
def test_linear_index_rejects_out_of_range(entries):
    with pytest.raises(IndexRangeError):
        linear_index(1, entries, (2, 3, 4))


def test_linear_index_rejects_bad_mode():
    with pytest.raises(IndexRangeError):
        linear_index(4, (1, 1), (2, 3, 4))


def test_linear_index_rejects_wrong_tuple_length():
    with pytest.raises(IndexRangeError):
        linear_indices(1, np.ones((2, 3), dtype=int), (2, 3, 4))


@given(shape_and_mode())
@settings(max_examples=60, deadline=None)
def test_linear_index_enumeration_order(case):
    dims, mode = case
    others = [d for k, d in enumerate(dims, start=1) if k != mode]
    tuples = np.array(list(oracle.ordered_tuples(others)))
    j = linear_indices(mode, tuples, dims)
    # first entry fastest: enumeration position equals the index
    assert np.array_equal(j, np.arange(1, fiber_count(dims, mode) + 1))


# fibers

def test_extract_fiber_first_mode(cube_1_to_8):
    np.testing.assert_array_equal(extract_fibers(cube_1_to_8, 1, [[1, 1]])[:, 0], [1.0, 2.0])


def test_extract_fibers_other_modes(cube_1_to_8):
    np.testing.assert_array_equal(extract_fibers(cube_1_to_8, 2, [[2, 1]])[:, 0], [2.0, 4.0])
    np.testing.assert_array_equal(extract_fibers(cube_1_to_8, 3, [[1, 2]])[:, 0], [3.0, 7.0])


def test_extract_fibers_of_zero_tensor():
    X = DenseTensor.zeros((3, 2, 2))
    assert not extract_fibers(X, 2, [[1, 2], [3, 1]]).any()


@given(shape_and_mode())
@settings(max_examples=60, deadline=None)
def test_extract_all_fibers_is_the_unfolding(case):
    dims, mode = case
    X = DenseTensor(dims, np.arange(float(np.prod(dims))))
    others = [d for k, d in enumerate(dims, start=1) if k != mode]
    tuples = np.array(list(oracle.ordered_tuples(others)))
    np.testing.assert_array_equal(extract_fibers(X, mode, tuples), oracle.unfold_by_definition(X, mode))


# reconstruction and measures

def test_reconstruct_rank_one():
    model = KruskalModel((np.array([[1.0], [2.0]]), np.array([[1.0], [1.0]]), np.array([[1.0], [0.0]])))
    expected = np.einsum("i,j,k->ijk", [1.0, 2.0], [1.0, 1.0], [1.0, 0.0])
    np.testing.assert_array_equal(reconstruct(model).to_array(), expected)


def test_reconstruct_zero_factor():
    model = KruskalModel((np.zeros((2, 2)), np.ones((3, 2)), np.ones((2, 2))))
    assert not reconstruct(model).values.any()


def test_reconstruct_matches_einsum(rng):
    model = small_model(rng, dims=(3, 4, 2, 2), rank=3)
    expected = np.einsum("ir,jr,kr,lr->ijkl", *model.factors)
    np.testing.assert_allclose(reconstruct(model).to_array(), expected, rtol=1e-13, atol=1e-14)


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_reconstruct_is_linear_in_each_factor(alpha, beta, seed):
    rng = np.random.default_rng(seed)
    model = small_model(rng)
    U = rng.standard_normal(model.factor(2).shape)
    V = rng.standard_normal(model.factor(2).shape)
    lhs = reconstruct(model.replace_factor(2, alpha * U + beta * V)).values
    rhs = alpha * reconstruct(model.replace_factor(2, U)).values + beta * reconstruct(model.replace_factor(2, V)).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_objective_examples():
    ones = DenseTensor((2, 2, 2), np.ones(8))
    assert objective(ones, KruskalModel.zeros((2, 2, 2), 1)) == 4.0
    exact = KruskalModel((np.ones((2, 1)), np.ones((2, 1)), np.ones((2, 1))))
    assert objective(ones, exact) == 0.0


def test_objective_matches_naive_oracle(rng):
    for _ in range(5):
        model = small_model(rng, dims=(4, 3, 4), rank=3)
        X = DenseTensor.from_array(rng.standard_normal((4, 3, 4)))
        assert objective(X, model) == pytest.approx(oracle.naive_objective(X, model), rel=1e-12)


def test_relative_error_examples():
    ones = DenseTensor((2, 2, 2), np.ones(8))
    half = KruskalModel((np.full((2, 1), 0.5), np.ones((2, 1)), np.ones((2, 1))))
    assert relative_error(ones, half) == pytest.approx(0.5, abs=1e-15)
    assert relative_error(ones, KruskalModel.zeros((2, 2, 2), 1)) == 1.0


def test_relative_error_undefined_for_zero_tensor():
    with pytest.raises(UndefinedMeasureError):
        relative_error(DenseTensor.zeros((2, 2, 2)), KruskalModel.zeros((2, 2, 2), 1))


def test_shape_mismatch_is_rejected():
    with pytest.raises(ShapeError):
        objective(DenseTensor.zeros((2, 2, 2)), KruskalModel.zeros((2, 2, 3), 1))
    with pytest.raises(ShapeError):
        DenseTensor((2, 2), np.zeros(3))
    with pytest.raises(ShapeError):
        KruskalModel((np.zeros((2, 2)), np.zeros((2, 3))))


def test_khatri_rao_row_order(rng):
    A, B = rng.standard_normal((3, 2)), rng.standard_normal((4, 2))
    np.testing.assert_array_equal(khatri_rao([A, B]), oracle.explicit_krp([A, B]))
    # first factor fastest: row (i, j) sits at i + 3 j
    np.testing.assert_array_equal(khatri_rao([A, B])[1 + 3 * 2], A[1] * B[2])


def test_values_are_read_only(cube_1_to_8):
    with pytest.raises(ValueError):
        cube_1_to_8.values[0] = 5.0


# CPT1 files

def test_tensor_round_trip(tmp_path, rng):
    X = DenseTensor.from_array(rng.standard_normal((3, 1, 4, 2)))
    write_tensor(tmp_path / "x.cpt", X)
    Y = read_tensor(tmp_path / "x.cpt")
    assert Y.dims == X.dims
    assert np.array_equal(Y.values, X.values)


def test_model_round_trip(tmp_path, rng):
    model = small_model(rng)
    write_model(tmp_path / "m.cpt", model)
    back = read_model(tmp_path / "m.cpt")
    for A, B in zip(model.factors, back.factors):
        assert np.array_equal(A, B)


def test_tensor_header_is_text(tmp_path):
    write_tensor(tmp_path / "x.cpt", DenseTensor((2, 3), np.arange(6.0)))
    raw = (tmp_path / "x.cpt").read_bytes()
    assert raw.startswith(b"CPT1 2 2 3\n")
    assert np.array_equal(np.frombuffer(raw[len(b"CPT1 2 2 3\n"):], dtype="<f8"), np.arange(6.0))


@pytest.mark.parametrize(
    "payload",
    [
        b"CPT2 1 2\n" + np.zeros(2).tobytes(),
        b"CPT1 1 3\n" + np.zeros(2, dtype="<f8").tobytes(),
        b"CPT1 1 2\n" + np.zeros(3, dtype="<f8").tobytes(),
        b"CPT1 x 2\n",
        b"",
    ],
)
def test_malformed_files_are_rejected(tmp_path, payload):
    path = tmp_path / "bad.cpt"
    path.write_bytes(payload)
    with pytest.raises(FormatError):
        read_tensor(path)
