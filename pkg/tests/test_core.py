import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neonlab.core import (
    Checkpoint,
    ResultTable,
    RngState,
    as_param_vector,
    dot_p,
    lin_comb,
    pnorm,
)

finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


def vectors(dim):
    return st.lists(finite_floats, min_size=dim, max_size=dim).map(np.array)


class TestLinComb:
    def test_identity(self):
        assert np.array_equal(lin_comb(1, [1, 2], 0, [9, 9]), [1, 2])

    def test_hand_arithmetic(self):
        assert np.array_equal(lin_comb(2, [1, 2], -1, [1, 1]), [1, 3])

    def test_zero_case(self):
        assert np.array_equal(lin_comb(0.5, [0, 0], 0.5, [0, 0]), [0, 0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            lin_comb(1, [1, 2], 1, [1, 2, 3])

    def test_inputs_unmodified(self):
        x = np.array([1.0, 2.0])
        y = np.array([3.0, 4.0])
        lin_comb(2, x, 3, y)
        assert np.array_equal(x, [1, 2]) and np.array_equal(y, [3, 4])

    @given(a=finite_floats, b=finite_floats, c=finite_floats, d=finite_floats,
           x=vectors(3), y=vectors(3))
    @settings(max_examples=100)
    def test_linearity(self, a, b, c, d, x, y):
        lhs = lin_comb(a, x, b, y) + lin_comb(c, x, d, y)
        rhs = lin_comb(a + c, x, b + d, y)
        scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1.0)
        assert np.all(np.abs(lhs - rhs) <= 1e-12 * scale)


class TestDotP:
    def test_orthogonality(self):
        assert dot_p([1, 0], [0, 1], [1, 1]) == 0

    def test_hand_arithmetic(self):
        assert dot_p([1, 2], [3, 4], [1, 1]) == 11

    def test_preconditioned(self):
        assert dot_p([1, 1], [1, 1], [2, 3]) == 5

    def test_nonpositive_precond_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            dot_p([1, 1], [1, 1], [1, 0])

    @given(x=vectors(4), y=vectors(4))
    @settings(max_examples=100)
    def test_symmetry_and_positivity(self, x, y):
        p = np.array([1.0, 2.0, 0.5, 3.0])
        # symmetric up to rounding: (x*p).y and (y*p).x round differently
        assert dot_p(x, y, p) == pytest.approx(dot_p(y, x, p), rel=1e-12, abs=0.0)
        assert dot_p(x, x, p) >= 0

    def test_zero_norm_iff_zero(self):
        p = np.array([1.0, 2.0])
        assert pnorm([0, 0], p) == 0
        assert pnorm([1e-8, 0], p) > 0


class TestRng:
    def test_same_label_same_stream(self):
        a = RngState(1).fork("a").generator().standard_normal(8)
        b = RngState(1).fork("a").generator().standard_normal(8)
        assert np.array_equal(a, b)

    def test_labels_distinct(self):
        root = RngState(5)
        firsts = {
            float(root.fork(f"lbl{i}").generator().standard_normal())
            for i in range(1000)
        }
        assert len(firsts) == 1000

    def test_nested_fork_reproducible(self):
        a = RngState(2).fork("a").fork("b").generator().standard_normal(4)
        b = RngState(2).fork("a").fork("b").generator().standard_normal(4)
        assert np.array_equal(a, b)

    def test_sibling_order_independent(self):
        root = RngState(9)
        _ = root.fork("first").generator().standard_normal()
        via_second = root.fork("second").generator().standard_normal(4)
        fresh = RngState(9).fork("second").generator().standard_normal(4)
        assert np.array_equal(via_second, fresh)

    def test_seed_matters(self):
        a = RngState(1).generator().standard_normal(4)
        b = RngState(2).generator().standard_normal(4)
        assert not np.array_equal(a, b)


class TestResultTable:
    def test_row_width_enforced(self):
        t = ResultTable(columns=["a", "b"])
        with pytest.raises(ValueError, match="cells"):
            t.add_row(1.0)

    def test_csv_round_trip(self, tmp_path):
        t = ResultTable(columns=["w", "risk"])
        t.add_row(0.05, 1.2345678901234567)
        t.add_row(-1.0, float("nan"))
        path = tmp_path / "t.csv"
        t.write_csv(path)
        back = ResultTable.read_csv(path)
        assert back.columns == ["w", "risk"]
        assert back.rows[0][1] == 1.2345678901234567  # 17 sig digits survive
        assert np.isnan(back.rows[1][1])

    def test_csv_format(self, tmp_path):
        t = ResultTable(columns=["x"])
        t.add_row(float("nan"))
        path = tmp_path / "t.csv"
        t.write_csv(path)
        text = path.read_bytes().decode("utf-8")
        assert text == "x\nnan\n"


class TestCheckpoint:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Checkpoint(params=[1.0, float("inf")], model_kind="gaussian")

    def test_rejects_negative_budget(self):
        with pytest.raises(ValueError):
            Checkpoint(params=[1.0], model_kind="gaussian", budget_images=-1)

    def test_with_params_merges_meta(self):
        c = Checkpoint(params=[1.0], model_kind="ddpm", meta=(("a", "1"),))
        c2 = c.with_params([2.0], b="2")
        assert dict(c2.meta) == {"a": "1", "b": "2"}
        assert c2.params[0] == 2.0


def test_as_param_vector_rejects_matrix():
    with pytest.raises(ValueError, match="1-D"):
        as_param_vector(np.zeros((2, 2)))
