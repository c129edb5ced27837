"""Tests for coefficient expressions."""

import numpy as np
import pytest

from gle_homog.expressions import (
    ExpressionField,
    ScalarExpression,
    matrix_entries,
    parse_expression,
    state_symbols,
    vector_entries,
)
from gle_homog.utils import errors


class TestScalarExpression:
    """Test scalar expressions and their derivatives."""

    def test_builtin_profile(self):
        """Test that a named profile expands to its expression."""
        expr = ScalarExpression("sqrt-two-plus-sin")
        x = np.linspace(-3.0, 3.0, 7)

        np.testing.assert_allclose(expr(x), np.sqrt(2.0 + np.sin(x)))
        np.testing.assert_allclose(expr.derivative(x), np.cos(x) / (2.0 * np.sqrt(2.0 + np.sin(x))))

    def test_constant_broadcasts(self):
        """Test that a constant evaluates to an array of the input shape."""
        expr = ScalarExpression("2")
        assert expr(np.zeros(4)).shape == (4,)
        assert expr.is_constant
        np.testing.assert_array_equal(expr.derivative(np.zeros(4)), np.zeros(4))

    def test_compose(self):
        """Test composition of a law in T with a profile in x."""
        viscosity = ScalarExpression("exp(-T)", variable="T")
        temperature = ScalarExpression("1 + x/2")

        composed = viscosity.compose(temperature)

        assert composed(np.array([2.0]))[0] == pytest.approx(np.exp(-2.0))
        assert composed.derivative(np.array([0.0]))[0] == pytest.approx(-0.5 * np.exp(-1.0))

    def test_unknown_symbol_raises(self):
        """Test that free symbols other than the state are rejected."""
        with pytest.raises(errors.ConfigParseError, match="unknown symbol"):
            ScalarExpression("x + y")

    def test_unknown_function_raises(self):
        """Test that undefined function names are rejected."""
        with pytest.raises(errors.ConfigParseError, match="unknown function"):
            ScalarExpression("foo(x)")

    def test_malformed_text_raises(self):
        """Test that syntax errors surface as ConfigParseError."""
        with pytest.raises(errors.ConfigParseError):
            ScalarExpression("sin(")


class TestExpressionField:
    """Test vector and matrix fields over R^d."""

    def test_state_symbols(self):
        """Test naming of state components."""
        assert [s.name for s in state_symbols(1)] == ["x"]
        assert [s.name for s in state_symbols(3)] == ["x1", "x2", "x3"]
        with pytest.raises(errors.DimensionMismatchError):
            state_symbols(0)

    def test_matrix_field_values_and_jacobian(self):
        """Test a 2x2 field and its exact Jacobian."""
        field = ExpressionField([["x1*x2", "1"], ["0", "x2**2"]], dimension=2)
        states = np.array([[1.0, 2.0], [3.0, -1.0]])

        values = field(states)
        jac = field.jacobian(states)

        assert values.shape == (2, 2, 2)
        assert jac.shape == (2, 2, 2, 2)
        np.testing.assert_allclose(values[1], [[-3.0, 1.0], [0.0, 1.0]])
        np.testing.assert_allclose(jac[0, 0, 0], [2.0, 1.0])
        np.testing.assert_allclose(jac[0, 1, 1], [0.0, 4.0])

    def test_wrong_state_dimension_raises(self):
        """Test that states must match the field dimension."""
        field = ExpressionField(["x1", "x2"], dimension=2)
        with pytest.raises(errors.DimensionMismatchError):
            field(np.zeros((3, 3)))

    def test_sources_keep_shape(self):
        """Test that sources mirror the entry layout."""
        field = ExpressionField([["x", "2"]], dimension=1)
        assert field.sources() == [["x", "2"]]
        assert not field.is_constant

    def test_parse_accepts_numbers(self):
        """Test that numeric entries parse to constants."""
        assert float(parse_expression(1.5, state_symbols(1))) == 1.5


class TestEntryNormalization:
    """Test scalar shorthands for fields."""

    def test_scalar_shorthand(self):
        """Test that a scalar fills a 1x1 field."""
        assert matrix_entries("x", 1, 1) == [["x"]]
        assert vector_entries(0, 1) == [0]

    def test_scalar_for_matrix_edge(self):
        """Test that a scalar cannot fill a larger field."""
        with pytest.raises(errors.DimensionMismatchError):
            matrix_entries("x", 2, 2)
        with pytest.raises(errors.DimensionMismatchError):
            vector_entries("x", 2)

    def test_shape_mismatch_raises(self):
        """Test that nested lists must have the expected shape."""
        with pytest.raises(errors.DimensionMismatchError):
            matrix_entries([["1", "2"]], 2, 1)
