import numpy as np
import pytest

from rlcc.stats import (InvalidLevelError, RegressionRow, SingularDesignError,
                        code_level, make_interaction_design, ols_fit,
                        render_table, student_t_two_sided_p)


def ols_oracle(X, y):
    """Independent fit via explicit normal equations: beta, SE, t."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, p = X.shape
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ X.T @ y
    resid = y - X @ beta
    s2 = float(resid @ resid) / (n - p)
    se = np.sqrt(s2 * np.diag(xtx_inv))
    return beta, se, beta / se


def t_p_oracle(t, df):
    """Two-sided Student-t tail via arbitrary-precision integration."""
    import mpmath
    t = mpmath.mpf(abs(t))
    df_ = mpmath.mpf(df)
    pdf = lambda x: (mpmath.gamma((df_ + 1) / 2)
                     / (mpmath.sqrt(df_ * mpmath.pi) * mpmath.gamma(df_ / 2))
                     * (1 + x * x / df_) ** (-(df_ + 1) / 2))
    return float(2 * mpmath.quad(pdf, [t, mpmath.inf]))


class TestCoding:
    @pytest.mark.parametrize("factor,raw,coded", [
        ("error_rate", 0.0, -1.0),
        ("error_rate", 0.2, 1.0),
        ("learning_rate", 0.001, -1.0),
        ("learning_rate", 0.01, 1.0),
        ("layers", 2, -1.0),
        ("layers", 4, 0.0),
        ("layers", 8, 1.0),
    ])
    def test_levels(self, factor, raw, coded):
        assert code_level(factor, raw) == coded

    def test_unknown_factor(self):
        with pytest.raises(InvalidLevelError):
            code_level("dropout", 0.5)

    def test_unknown_level(self):
        with pytest.raises(InvalidLevelError):
            code_level("layers", 3)


class TestStudentT:
    @pytest.mark.parametrize("t,df", [
        (0.0, 5), (1.0, 1), (2.776, 4), (2.0, 10), (78.41, 36), (-3.5, 7),
    ])
    def test_matches_numeric_integration(self, t, df):
        assert student_t_two_sided_p(t, df) == pytest.approx(
            t_p_oracle(t, df), rel=1e-8, abs=1e-12)

    def test_textbook_critical_value(self):
        # t = 2.776 is the classic 5% two-sided critical value for df = 4
        assert student_t_two_sided_p(2.776, 4) == pytest.approx(0.05, abs=1e-3)

    def test_symmetry_and_range(self):
        for t in (0.5, 1.7, 9.0):
            p = student_t_two_sided_p(t, 8)
            assert p == student_t_two_sided_p(-t, 8)
            assert 0.0 < p < 1.0

    def test_df_validation(self):
        with pytest.raises(ValueError):
            student_t_two_sided_p(1.0, 0)


class TestDesign:
    def test_interaction_design_columns(self):
        a = np.array([-1.0, -1.0, 1.0, 1.0])
        b = np.array([-1.0, 1.0, -1.0, 1.0])
        X, names = make_interaction_design(a, b, "error_rate", "layers")
        assert names == ["constant", "error_rate", "layers",
                         "error_rate*layers"]
        np.testing.assert_array_equal(X[:, 0], 1.0)
        np.testing.assert_array_equal(X[:, 1], a)
        np.testing.assert_array_equal(X[:, 2], b)
        np.testing.assert_array_equal(X[:, 3], a * b)


class TestOlsFit:
    def full_factorial(self, reps, rng=None):
        a, b = [], []
        for ca in (-1.0, 1.0):
            for cb in (-1.0, 0.0, 1.0):
                a += [ca] * reps
                b += [cb] * reps
        return make_interaction_design(np.array(a), np.array(b), "A", "B")

    def test_matches_normal_equation_oracle(self):
        rng = np.random.default_rng(0)
        X, names = self.full_factorial(reps=6)
        y = 80_000 - 9000 * X[:, 1] + 3000 * X[:, 2] \
            + 500 * X[:, 3] + rng.normal(0, 1000, size=X.shape[0])
        rows = ols_fit(X, names, y)
        beta, se, t = ols_oracle(X, y)
        for j, row in enumerate(rows):
            assert row.coefficient == pytest.approx(beta[j], rel=1e-10)
            assert row.std_error == pytest.approx(se[j], rel=1e-10)
            assert row.t_value == pytest.approx(t[j], rel=1e-10)
            assert row.p_value == pytest.approx(
                t_p_oracle(t[j], X.shape[0] - 4), rel=1e-6, abs=1e-12)

    def test_influence_is_twice_coefficient(self):
        rng = np.random.default_rng(1)
        X, names = self.full_factorial(reps=4)
        y = rng.normal(size=X.shape[0])
        rows = ols_fit(X, names, y)
        assert rows[0].influence is None
        for row in rows[1:]:
            assert row.influence == pytest.approx(2.0 * row.coefficient)

    def test_exact_effect_recovery_balanced_design(self):
        # symmetric +-delta noise cancels exactly in a balanced design, so
        # the fitted coefficient equals the planted half-effect
        X, names = self.full_factorial(reps=2)
        y = 84_320.0 - 8585.0 * X[:, 1]
        noise = np.tile([250.0, -250.0], X.shape[0] // 2)
        rows = ols_fit(X, names, y + noise)
        assert rows[1].coefficient == pytest.approx(-8585.0)
        assert rows[1].influence == pytest.approx(-17_170.0)
        assert rows[0].coefficient == pytest.approx(84_320.0)

    def test_perfect_fit_flags(self):
        X = np.column_stack([np.ones(4), np.array([-1.0, 1.0, -1.0, 1.0])])
        y = np.array([1.0, 3.0, 1.0, 3.0])  # exactly 2 + x
        rows = ols_fit(X, ["constant", "x"], y)
        for row in rows:
            assert row.std_error == 0.0
            assert row.t_value is None
            assert row.p_value is None
        assert rows[0].coefficient == pytest.approx(2.0)
        assert rows[1].coefficient == pytest.approx(1.0)

    def test_singular_design_names_column(self):
        a = np.array([-1.0, -1.0, 1.0, 1.0, -1.0, 1.0])
        X, names = make_interaction_design(a, a, "A", "A2")
        with pytest.raises(SingularDesignError) as exc:
            ols_fit(X, names, np.arange(6.0))
        assert exc.value.column in names

    def test_shape_validation(self):
        X, names = self.full_factorial(reps=1)
        with pytest.raises(ValueError):
            ols_fit(X, names, np.zeros(5))
        with pytest.raises(ValueError):
            ols_fit(X[:4], names, np.zeros(4))  # df would be zero
        with pytest.raises(ValueError):
            ols_fit(X, names[:-1], np.zeros(X.shape[0]))


class TestRenderTable:
    def test_layout(self):
        rows = [
            RegressionRow("constant", None, 84_320.0, 1075.0, 78.41, 0.0),
            RegressionRow("error_rate", -17_170.0, -8585.0, 1075.0, -7.98,
                          0.000001),
        ]
        text = render_table(rows)
        lines = text.splitlines()
        assert lines[0].split() == ["Term", "Influence", "Coefficient",
                                    "Standard", "Error", "T-Value", "P-Value"]
        assert "constant" in lines[2]
        assert "78.41" in lines[2]
        assert "-17170.0" in lines[3]
        # all rows equally wide
        assert len({len(l) for l in (lines[0], lines[1])} ) == 1

    def test_none_rendered_blank(self):
        rows = [RegressionRow("x", 2.0, 1.0, 0.0, None, None)]
        text = render_table(rows)
        assert text.splitlines()[-1].rstrip().endswith("0.0")
