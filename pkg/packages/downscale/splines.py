"""
KDEXP - Spline Bases
B-spline (scikit-learn) and natural cubic (truncated-power) bases with knots at
quantiles of the input points.
"""

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from sklearn.preprocessing import SplineTransformer

from packages.shared.exceptions import BasisError

SplineKind = Literal["bspline_polynomial", "natural_cubic"]


def _natural_cubic_columns(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """x followed by d_k - d_{K-1} for k = 1..K-2"""
    last = knots[-1]

    def d(k: int) -> np.ndarray:
        return (np.maximum(x - knots[k], 0.0) ** 3 - np.maximum(x - last, 0.0) ** 3) / (last - knots[k])

    d_penultimate = d(len(knots) - 2)
    columns = [x] + [d(k) - d_penultimate for k in range(len(knots) - 2)]
    return np.column_stack(columns)


@dataclass
class SplineBasis:
    knots: np.ndarray
    degree: int
    basis_matrix: np.ndarray
    kind: SplineKind
    include_intercept: bool = False
    _transformer: Optional[SplineTransformer] = field(default=None, repr=False)

    @property
    def df(self) -> int:
        return self.basis_matrix.shape[1]

    def evaluate(self, points) -> np.ndarray:
        """Basis at new points with the fitted knots"""
        x = np.asarray(points, dtype=float).ravel()
        if self.kind == "bspline_polynomial":
            return self._transformer.transform(x[:, None])
        return _natural_cubic_columns(x, self.knots)


def build_spline_basis(
    points,
    df: int,
    kind: SplineKind = "bspline_polynomial",
    degree: int = 3,
    include_intercept: bool = False,
) -> SplineBasis:
    """df-column basis; with include_intercept the B-spline basis is the full one (rows sum to 1)"""
    x = np.asarray(points, dtype=float).ravel()
    if x.size < 2 or not np.all(np.isfinite(x)) or np.ptp(x) == 0.0:
        raise BasisError("spline points must be finite and non-constant")

    if kind == "natural_cubic":
        if df < 2:
            raise BasisError(f"natural cubic spline needs df >= 2, got {df}")
        knots = np.quantile(x, np.linspace(0.0, 1.0, df + 1))
        if np.any(np.diff(knots) <= 0.0):
            raise BasisError("quantile knots are not distinct; reduce df")
        return SplineBasis(knots=knots, degree=3, basis_matrix=_natural_cubic_columns(x, knots), kind=kind)

    if kind != "bspline_polynomial":
        raise BasisError(f"unknown spline kind: {kind}")
    min_df = degree + 1 if include_intercept else degree
    if df < min_df:
        raise BasisError(f"B-spline of degree {degree} needs df >= {min_df}, got {df}")
    n_knots = df - degree + (1 if include_intercept else 2)
    transformer = SplineTransformer(
        n_knots=n_knots, degree=degree, knots="quantile", include_bias=include_intercept
    )
    try:
        matrix = transformer.fit_transform(x[:, None])
    except ValueError as exc:
        raise BasisError(f"cannot place B-spline knots: {exc}") from exc
    return SplineBasis(
        knots=transformer.bsplines_[0].t,
        degree=degree,
        basis_matrix=matrix,
        kind=kind,
        include_intercept=include_intercept,
        _transformer=transformer,
    )
