import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tgv.errors import (
    ConstantAttribute,
    InsufficientData,
    LambdaOutOfRange,
    NonFiniteValue,
    ShapeMismatch,
    UnknownCategory,
    UnknownShape,
)
from tgv.tabular import (
    AttributeSchema,
    TabularBatch,
    batch_similarity,
    categorical_similarity,
    combine_similarity,
    continuous_similarity,
    encode_batch,
    fit_schema,
)


def naive_continuous(a):
    """Double-loop oracle for the distance-to-similarity mapping."""
    n = a.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            d[i, j] = np.sqrt(sum((a[i, k] - a[j, k]) ** 2 for k in range(a.shape[1])))
    return 1.0 - 2.0 * d / (d.max() + 1e-12)


def naive_cosine(a):
    n = a.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = a[i] @ a[j] / (np.linalg.norm(a[i]) * np.linalg.norm(a[j]))
    return out


class TestFitSchema:
    def test_two_point_population_stats(self):
        schema = fit_schema([{"height": 160.0}, {"height": 180.0}], continuous=["height"])
        assert schema.continuous_stats == [(170.0, 10.0)]

    def test_single_record_rejected(self):
        with pytest.raises(InsufficientData):
            fit_schema([{"height": 160.0}], continuous=["height"])

    def test_constant_attribute_rejected(self):
        with pytest.raises(ConstantAttribute):
            fit_schema([{"h": 1.0}, {"h": 1.0}], continuous=["h"])

    def test_vocabulary_is_union_in_first_appearance_order(self):
        records = [{"c": "A"}, {"c": "B"}, {"c": "B"}, {"c": "C"}]
        schema = fit_schema(records, continuous=[], categorical=["c"])
        assert schema.categorical_specs == [("c", ("A", "B", "C"))]

    def test_declared_vocabulary_kept(self):
        schema = fit_schema([{"s": "f"}, {"s": "m"}], continuous=[], categorical={"s": ["m", "f"]})
        assert schema.categorical_specs == [("s", ("m", "f"))]

    def test_value_outside_declared_vocabulary(self):
        with pytest.raises(UnknownCategory):
            fit_schema([{"s": "f"}, {"s": "x"}], continuous=[], categorical={"s": ["m", "f"]})

    def test_inconsistent_keys(self):
        with pytest.raises(UnknownShape):
            fit_schema([{"a": 1.0}, {"b": 2.0}])

    def test_roles_inferred_from_types(self):
        schema = fit_schema([{"a": 1.0, "s": "x"}, {"a": 2.0, "s": "y"}])
        assert schema.continuous_names == ["a"]
        assert schema.categorical_names == ["s"]

    def test_round_trip_dict(self):
        schema = fit_schema([{"a": 1.0, "s": "x"}, {"a": 3.0, "s": "y"}])
        assert AttributeSchema.from_dict(schema.to_dict()) == schema

    def test_without_drops_attribute(self):
        schema = fit_schema([{"a": 1.0, "b": 0.0, "s": "x"}, {"a": 3.0, "b": 1.0, "s": "y"}])
        reduced = schema.without(["a", "s"])
        assert reduced.continuous_names == ["b"]
        assert reduced.categorical_specs == []
        assert reduced.continuous_stats == [(0.5, 0.5)]


class TestEncodeBatch:
    def test_binary_first_category_is_plus_one(self):
        schema = AttributeSchema([], [("sex", ("male", "female"))])
        batch = encode_batch([{"sex": "male"}, {"sex": "female"}], schema)
        np.testing.assert_array_equal(batch.a_cat, [[1.0], [-1.0]])

    def test_three_way_bipolar(self):
        schema = AttributeSchema([], [("smoking", ("never", "former", "current"))])
        batch = encode_batch([{"smoking": "never"}], schema)
        np.testing.assert_array_equal(batch.a_cat, [[1.0, -1.0, -1.0]])

    def test_z_score(self):
        schema = AttributeSchema(["height"], [], [(170.0, 10.0)])
        batch = encode_batch([{"height": 180.0}], schema)
        np.testing.assert_allclose(batch.a_con, [[1.0]])

    def test_unknown_category(self):
        schema = AttributeSchema([], [("sex", ("male", "female"))])
        with pytest.raises(UnknownCategory):
            encode_batch([{"sex": "other"}], schema)

    def test_non_finite_continuous(self):
        schema = AttributeSchema(["h"], [], [(0.0, 1.0)])
        with pytest.raises(NonFiniteValue):
            encode_batch([{"h": float("nan")}], schema)

    def test_mixed_widths(self):
        schema = AttributeSchema(["h"], [("b", ("y", "n")), ("t", ("a", "b", "c"))], [(0.0, 2.0)])
        batch = encode_batch([{"h": 4.0, "b": "n", "t": "c"}], schema)
        assert (batch.N, batch.M, batch.B) == (1, 1, 4)
        np.testing.assert_array_equal(batch.a_cat, [[-1.0, -1.0, -1.0, 1.0]])
        np.testing.assert_allclose(batch.a_con, [[2.0]])


class TestCategoricalSimilarity:
    def test_identical_rows(self):
        s = categorical_similarity([[1, -1, 1], [1, -1, 1]])
        np.testing.assert_array_equal(s.values, np.ones((2, 2)))
        assert s.kind == "categorical"

    def test_antipodal_rows(self):
        s = categorical_similarity([[1, -1], [-1, 1]])
        assert s.values[0, 1] == -1.0

    def test_one_third(self):
        s = categorical_similarity([[1, -1, 1], [1, -1, -1]])
        np.testing.assert_allclose(s.values[0, 1], 1.0 / 3.0, atol=1e-15)

    def test_rejects_non_bipolar(self):
        with pytest.raises(NonFiniteValue):
            categorical_similarity([[1, 0], [1, 1]])

    def test_rejects_single_row(self):
        with pytest.raises(ShapeMismatch):
            categorical_similarity([[1, 1]])

    @given(hnp.arrays(np.int8, st.tuples(st.integers(2, 12), st.integers(1, 8)), elements=st.sampled_from([-1, 1])))
    def test_matches_cosine_oracle(self, a):
        np.testing.assert_allclose(categorical_similarity(a).values, naive_cosine(a.astype(float)), atol=1e-12)


class TestContinuousSimilarity:
    def test_identical_rows(self):
        s = continuous_similarity(np.ones((3, 2)))
        np.testing.assert_array_equal(s.values, np.ones((3, 3)))

    def test_three_points_on_a_line(self):
        s = continuous_similarity([[0.0], [1.0], [2.0]])
        np.testing.assert_allclose(s.values[0, 1], 0.0, atol=1e-12)
        np.testing.assert_allclose(s.values[0, 2], -1.0, atol=1e-12)
        np.testing.assert_array_equal(np.diag(s.values), np.ones(3))

    def test_rejects_nan(self):
        with pytest.raises(NonFiniteValue):
            continuous_similarity([[0.0], [np.nan]])

    @settings(max_examples=50)
    @given(
        hnp.arrays(np.float64, st.tuples(st.integers(2, 10), st.integers(1, 5)), elements=st.floats(-100, 100)),
        hnp.arrays(np.float64, 5, elements=st.floats(-50, 50)),
    )
    def test_oracle_and_translation_invariance(self, a, shift):
        s = continuous_similarity(a).values
        np.testing.assert_allclose(s, naive_continuous(a), atol=1e-9)
        moved = continuous_similarity(a + shift[: a.shape[1]]).values
        np.testing.assert_allclose(moved, s, atol=1e-6)


class TestCombine:
    def test_lambda_extremes(self):
        con = continuous_similarity([[0.0], [1.0], [3.0]])
        cat = categorical_similarity([[1, 1], [1, -1], [-1, -1]])
        np.testing.assert_array_equal(combine_similarity(con, cat, 1.0).values, con.values)
        np.testing.assert_array_equal(combine_similarity(con, cat, 0.0).values, cat.values)

    def test_scalar_arithmetic(self):
        s = combine_similarity(np.full((2, 2), 0.6), np.full((2, 2), 0.2), 0.5)
        np.testing.assert_allclose(s.values, 0.4, atol=1e-15)
        assert s.kind == "combined"

    @pytest.mark.parametrize("lam", [-0.1, 1.5])
    def test_lambda_range(self, lam):
        with pytest.raises(LambdaOutOfRange):
            combine_similarity(np.eye(2), np.eye(2), lam)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            combine_similarity(np.eye(2), np.eye(3), 0.5)


class TestBatchSimilarity:
    def test_no_continuous_uses_categorical(self):
        batch = TabularBatch(np.array([[1.0], [-1.0]]), np.zeros((2, 0)))
        np.testing.assert_array_equal(batch_similarity(batch, 0.7).values, [[1, -1], [-1, 1]])

    def test_no_categorical_uses_continuous(self):
        batch = TabularBatch(np.zeros((3, 0)), np.array([[0.0], [1.0], [2.0]]))
        np.testing.assert_allclose(batch_similarity(batch, 0.2).values, naive_continuous(batch.a_con))

    @settings(max_examples=50)
    @given(st.integers(0, 2**31 - 1), st.floats(0, 1))
    def test_symmetric_unit_diagonal_bounded(self, seed, lam):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 20))
        batch = TabularBatch(rng.choice([-1.0, 1.0], size=(n, 4)), rng.normal(size=(n, 3)))
        s = batch_similarity(batch, lam).values
        np.testing.assert_array_equal(s, s.T)
        np.testing.assert_allclose(np.diag(s), 1.0, atol=1e-12)
        assert s.min() >= -1.0 - 1e-9 and s.max() <= 1.0 + 1e-9
