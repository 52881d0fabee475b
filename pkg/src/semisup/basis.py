"""Regression bases g(x): raw columns, polynomials and tensor natural cubic splines.

The spline variant uses the truncated-power natural cubic spline basis with
``df`` knots per coordinate (boundary knots at the pooled min/max, interior
knots at equally spaced pooled quantiles). Per coordinate the basis is
``1, t, N_3(t), ..., N_df(t)``; the tensor product over coordinates therefore
has ``df ** d`` columns, one of which is the constant. The constant column is
identically zero after centering and the regression drops it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import prod

import numpy as np

from .core import InputError


class NotFitted(InputError):
    pass


class DegenerateCoordinate(InputError):
    pass


_KINDS = ("identity", "polynomial", "spline", "custom")


@dataclass(frozen=True)
class BasisSpec:
    kind: str
    degree: int | None = None
    df: int | None = None
    columns: tuple[int, ...] | None = None
    knots: tuple[tuple[float, ...], ...] | None = None
    d: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown basis kind {self.kind!r}")
        if self.kind == "polynomial" and (self.degree is None or self.degree < 1):
            raise InputError("polynomial basis needs degree >= 1")
        if self.kind == "spline" and (self.df is None or self.df < 2):
            raise InputError("spline basis needs df >= 2")
        if self.kind == "custom" and not self.columns:
            raise InputError("custom basis needs at least one column index")

    @classmethod
    def identity(cls) -> "BasisSpec":
        return cls("identity")

    @classmethod
    def polynomial(cls, degree: int) -> "BasisSpec":
        return cls("polynomial", degree=int(degree))

    @classmethod
    def spline(cls, df: int) -> "BasisSpec":
        return cls("spline", df=int(df))

    @classmethod
    def custom(cls, columns) -> "BasisSpec":
        return cls("custom", columns=tuple(int(c) for c in columns))

    @classmethod
    def parse(cls, text: str) -> "BasisSpec":
        """Parse ``identity``, ``poly:R`` or ``spline:DF``."""
        head, _, arg = text.partition(":")
        try:
            if head == "identity" and not arg:
                return cls.identity()
            if head in ("poly", "polynomial"):
                return cls.polynomial(int(arg))
            if head == "spline":
                return cls.spline(int(arg))
            if head == "custom":
                return cls.custom(int(c) for c in arg.split(","))
        except ValueError:
            pass
        raise InputError(f"cannot parse basis {text!r}; expected identity, poly:R or spline:DF")

    @property
    def fitted(self) -> bool:
        return self.d is not None

    @property
    def dim(self) -> int:
        if not self.fitted:
            raise NotFitted("basis is not fitted")
        if self.kind == "identity":
            return self.d
        if self.kind == "polynomial":
            return self.d * self.degree
        if self.kind == "custom":
            return len(self.columns)
        return prod(len(k) for k in self.knots)

    def fit(self, pooled_x) -> "BasisSpec":
        return fit_basis(self, pooled_x)

    def transform(self, x) -> np.ndarray:
        """Evaluate the basis on every row of ``x`` (m x d) -> (m x K)."""
        if not self.fitted:
            raise NotFitted("basis is not fitted")
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.d:
            raise InputError(f"basis was fitted on {self.d} coordinates, got {x.shape[1]}")
        if self.kind == "identity":
            return x.copy()
        if self.kind == "custom":
            return x[:, list(self.columns)].copy()
        if self.kind == "polynomial":
            powers = np.arange(1, self.degree + 1)
            return np.concatenate([x[:, [j]] ** powers for j in range(self.d)], axis=1)
        per_coord = [natural_spline_basis(x[:, j], np.asarray(k), intercept=True)
                     for j, k in enumerate(self.knots)]
        return tensor_product(per_coord)


def fit_basis(spec: BasisSpec, pooled_x) -> BasisSpec:
    pooled_x = np.asarray(pooled_x, dtype=float)
    if pooled_x.ndim == 1:
        pooled_x = pooled_x[:, None]
    if pooled_x.shape[0] == 0:
        raise InputError("cannot fit a basis on an empty sample")
    d = pooled_x.shape[1]
    if spec.kind == "custom" and max(spec.columns) >= d:
        raise InputError(f"custom basis column {max(spec.columns)} out of range for d={d}")
    if spec.kind != "spline":
        return replace(spec, d=d)
    knots = []
    for j in range(d):
        col = pooled_x[:, j]
        lo, hi = col.min(), col.max()
        if not hi > lo:
            raise DegenerateCoordinate(f"coordinate {j} is constant; spline knots undefined")
        levels = np.linspace(0.0, 1.0, spec.df)[1:-1]
        inner = np.quantile(col, levels) if levels.size else np.empty(0)
        k = np.concatenate([[lo], inner, [hi]])
        if np.any(np.diff(k) <= 0):
            raise DegenerateCoordinate(f"coordinate {j} has tied quantile knots {k.tolist()}")
        knots.append(tuple(float(v) for v in k))
    return replace(spec, knots=tuple(knots), d=d)


def evaluate_basis(spec: BasisSpec, x_row) -> np.ndarray:
    return spec.transform(np.atleast_2d(np.asarray(x_row, dtype=float)))[0]


def natural_spline_basis(t, knots, intercept: bool = False) -> np.ndarray:
    """Truncated-power natural cubic spline basis at points ``t``.

    With K knots this returns ``t, N_3, ..., N_K`` (K - 1 columns), preceded
    by a column of ones when ``intercept`` is set. Every column is linear
    outside the boundary knots.
    """
    t = np.asarray(t, dtype=float)
    knots = np.asarray(knots, dtype=float)
    K = knots.size
    cols = [np.ones_like(t)] if intercept else []
    cols.append(t)
    if K > 2:
        last = knots[-1]

        def dk(k):
            return (np.maximum(t - knots[k], 0.0) ** 3
                    - np.maximum(t - last, 0.0) ** 3) / (last - knots[k])

        d_penult = dk(K - 2)
        cols.extend(dk(k) - d_penult for k in range(K - 2))
    return np.column_stack(cols)


def tensor_product(blocks: list[np.ndarray]) -> np.ndarray:
    """Row-wise Kronecker product: (a, b) x (c, d) -> (ac, ad, bc, bd)."""
    out = blocks[0]
    for b in blocks[1:]:
        out = (out[:, :, None] * b[:, None, :]).reshape(out.shape[0], out.shape[1] * b.shape[1])
    return out
