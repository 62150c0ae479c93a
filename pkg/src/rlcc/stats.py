"""Ordinary least squares on coded experiment factors.

Factors are coded to {-1, 0, +1} so a coefficient reads as a half-effect and
the reported influence is twice the coefficient.  The fit uses a QR
decomposition rather than an explicit normal-equation inverse, and p-values
come from the two-sided Student-t tail via the regularized incomplete beta
function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc


class InvalidLevelError(ValueError):
    pass


class SingularDesignError(ValueError):
    """Design matrix is rank deficient; names the dependent column."""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"design matrix is rank deficient at column {column!r}")


#: Two-level factors code low -> -1, high -> +1; the three-level layer count
#: codes by centered log2 so one numeric term covers 2/4/8.
_CODINGS = {
    "error_rate": {0.0: -1.0, 0.2: 1.0},
    "learning_rate": {0.001: -1.0, 0.01: 1.0},
    "layers": {2: -1.0, 4: 0.0, 8: 1.0},
}


def code_level(factor: str, raw) -> float:
    try:
        levels = _CODINGS[factor]
    except KeyError:
        raise InvalidLevelError(f"unknown factor {factor!r}") from None
    for level, coded in levels.items():
        if raw == level:
            return coded
    raise InvalidLevelError(f"{raw!r} is not a declared level of {factor!r}")


@dataclass(frozen=True)
class RegressionRow:
    term: str
    influence: float | None   # 2 * coefficient; None for the intercept
    coefficient: float
    std_error: float
    t_value: float | None     # None flags a perfect fit (SE = 0)
    p_value: float | None


def student_t_two_sided_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for T ~ Student-t with df degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    t = float(t)
    if not np.isfinite(t):
        return 0.0
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def make_interaction_design(coded_a: np.ndarray, coded_b: np.ndarray,
                            name_a: str, name_b: str):
    """Intercept + two coded mains + their product, with term names."""
    coded_a = np.asarray(coded_a, dtype=np.float64)
    coded_b = np.asarray(coded_b, dtype=np.float64)
    X = np.column_stack([np.ones_like(coded_a), coded_a, coded_b,
                         coded_a * coded_b])
    names = ["constant", name_a, name_b, f"{name_a}*{name_b}"]
    return X, names


def ols_fit(X: np.ndarray, names: list[str], y: np.ndarray,
            perfect_fit_rtol: float = 1e-12) -> list[RegressionRow]:
    """Least-squares fit with coefficient/SE/t/p per term.

    Terms other than the first (intercept) also report influence = 2 * beta.
    A residual sum of squares that vanishes relative to ||y||^2 is flagged
    as a perfect fit: SE 0, t and p undefined.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if len(names) != p:
        raise ValueError("one name per design column required")
    if y.shape != (n,):
        raise ValueError("response length must match design rows")
    if n <= p:
        raise ValueError("need more rows than columns (residual df > 0)")

    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    tiny = diag < np.finfo(float).eps * max(n, p) * (diag.max() or 1.0)
    if tiny.any():
        raise SingularDesignError(names[int(np.flatnonzero(tiny)[0])])
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    df = n - p
    r_inv = np.linalg.solve(r, np.eye(p))
    xtx_inv_diag = (r_inv * r_inv).sum(axis=1)

    perfect = rss <= perfect_fit_rtol * max(float(y @ y), 1.0)
    s2 = 0.0 if perfect else rss / df
    rows = []
    for j, name in enumerate(names):
        se = float(np.sqrt(s2 * xtx_inv_diag[j]))
        if perfect or se == 0.0:
            t_val, p_val = None, None
            se = 0.0
        else:
            t_val = float(beta[j] / se)
            p_val = student_t_two_sided_p(t_val, df)
        rows.append(RegressionRow(
            term=name,
            influence=None if j == 0 else 2.0 * float(beta[j]),
            coefficient=float(beta[j]),
            std_error=se,
            t_value=t_val,
            p_value=p_val,
        ))
    return rows


def render_table(rows: list[RegressionRow]) -> str:
    """Aligned text table: term, influence, coefficient, SE, t, p."""
    header = ["Term", "Influence", "Coefficient", "Standard Error",
              "T-Value", "P-Value"]

    def _fmt(value, digits):
        if value is None:
            return ""
        return f"{value:.{digits}f}"

    body = [[row.term,
             _fmt(row.influence, 1),
             _fmt(row.coefficient, 1),
             _fmt(row.std_error, 1),
             _fmt(row.t_value, 2),
             _fmt(row.p_value, 3)] for row in rows]
    widths = [max(len(header[i]), *(len(r[i]) for r in body))
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)
