import numpy as np
import pytest

from avfusion import linalg
from avfusion.errors import NumericError, ShapeError

from naive_oracle import loop_matmul


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(linalg.matmul(a, np.eye(2)), a)

    def test_hand_computed_1x1(self):
        out = linalg.matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
        assert np.array_equal(out, np.array([[11.0]]))

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 2))
        np.testing.assert_allclose(linalg.matmul(a, b), loop_matmul(a, b), atol=1e-15)

    def test_bitwise_equals_loop_in_fixed_order_mode(self):
        # summation runs over the inner index ascending, so every entry is
        # the exact float sequence a triple loop produces
        rng = np.random.default_rng(11)
        for _ in range(50):
            m, kk, n = rng.integers(1, 9, size=3)
            scale = float(10.0 ** rng.integers(-3, 4))
            a = rng.standard_normal((m, kk)) * scale
            b = rng.standard_normal((kk, n))
            assert np.array_equal(linalg.matmul(a, b), loop_matmul(a, b))

    def test_associativity_within_tolerance(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.standard_normal((3, 4))
            b = rng.standard_normal((4, 5))
            c = rng.standard_normal((5, 2))
            left = linalg.matmul(linalg.matmul(a, b), c)
            right = linalg.matmul(a, linalg.matmul(b, c))
            np.testing.assert_allclose(left, right, rtol=1e-10, atol=1e-12)

    def test_shape_mismatch_names_both_operands(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            linalg.matmul(np.zeros((2, 3)), np.zeros((2, 2)))


class TestTranspose:
    def test_small(self):
        out = linalg.transpose(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert np.array_equal(out, np.array([[1.0, 3.0], [2.0, 4.0]]))

    def test_involution_bitwise(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 7))
        assert np.array_equal(linalg.transpose(linalg.transpose(a)), a)

    def test_row_to_column(self):
        out = linalg.transpose(np.array([[1.0, 2.0, 3.0]]))
        assert out.shape == (3, 1)


class TestElementwise:
    def test_tanh_zeros(self):
        assert np.array_equal(linalg.ew_tanh(np.zeros((2, 3))), np.zeros((2, 3)))

    def test_tanh_scalar_oracle(self):
        # math.tanh(0.5), frozen from the scalar math library
        out = linalg.ew_tanh(np.array([[0.5]]))
        np.testing.assert_allclose(out[0, 0], 0.46211715726000974, atol=1e-15)

    def test_relu(self):
        out = linalg.ew_relu(np.array([[-1.0, 2.0]]))
        assert np.array_equal(out, np.array([[0.0, 2.0]]))

    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeError):
            linalg.add(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_scale_rejects_nonfinite(self):
        with pytest.raises(NumericError):
            linalg.scale(np.ones((1, 1)), float("nan"))


class TestConcat:
    def test_widths(self):
        out = linalg.concat_cols(np.zeros((4, 2)), np.ones((4, 3)))
        assert out.shape == (4, 5)

    def test_zero_width_right_block(self):
        a = np.arange(6.0).reshape(3, 2)
        out = linalg.concat_cols(a, np.zeros((3, 0)))
        assert np.array_equal(out, a)

    def test_columns_interleave(self):
        out = linalg.concat_cols(np.array([[1.0], [2.0]]), np.array([[3.0], [4.0]]))
        assert np.array_equal(out, np.array([[1.0, 3.0], [2.0, 4.0]]))

    def test_left_block_preserved_bitwise(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((6, 3))
        b = rng.standard_normal((6, 4))
        out = linalg.concat_cols(a, b)
        assert np.array_equal(out[:, :3], a)

    def test_row_mismatch(self):
        with pytest.raises(ShapeError):
            linalg.concat_cols(np.zeros((2, 1)), np.zeros((3, 1)))

    def test_concat_rows(self):
        out = linalg.concat_rows([np.ones((2, 3)), np.zeros((1, 3))])
        assert out.shape == (3, 3)
        with pytest.raises(ShapeError):
            linalg.concat_rows([np.ones((2, 3)), np.zeros((1, 2))])


class TestValidation:
    def test_as_matrix_rejects_1d(self):
        with pytest.raises(ShapeError):
            linalg.as_matrix(np.zeros(3))

    def test_as_matrix_rejects_nan(self):
        with pytest.raises(NumericError):
            linalg.as_matrix([[1.0, float("nan")]])

    def test_outputs_are_frozen(self):
        out = linalg.add(np.ones((2, 2)), np.ones((2, 2)))
        with pytest.raises(ValueError):
            out[0, 0] = 5.0
