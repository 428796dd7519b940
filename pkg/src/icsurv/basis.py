"""Calendar-time basis functions used inside the linear predictors."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError


class BasisKind(str, Enum):
    NONE = "none"
    LINEAR = "linear"
    NATURAL_SPLINE = "ns"


@dataclass(frozen=True)
class BasisSpec:
    """A vector-valued function of the time index.

    ``knots`` holds every knot of a natural cubic spline including the two
    boundary knots, so ``df == len(knots) - 1`` (no intercept column).
    """

    kind: BasisKind = BasisKind.LINEAR
    knots: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))
        if self.kind is BasisKind.NATURAL_SPLINE:
            k = np.asarray(self.knots, dtype=float)
            if k.size < 2:
                raise InvalidInputError("natural spline needs at least two knots")
            if np.any(np.diff(k) <= 0):
                raise InvalidInputError("spline knots must be strictly increasing")
            object.__setattr__(self, "knots", tuple(float(v) for v in k))
        elif self.knots:
            raise InvalidInputError(f"knots are only meaningful for a spline basis, not {self.kind.value}")

    @property
    def size(self) -> int:
        if self.kind is BasisKind.NONE:
            return 0
        if self.kind is BasisKind.LINEAR:
            return 1
        return len(self.knots) - 1

    @property
    def df(self) -> int:
        return self.size

    @classmethod
    def none(cls) -> "BasisSpec":
        return cls(BasisKind.NONE)

    @classmethod
    def linear(cls) -> "BasisSpec":
        return cls(BasisKind.LINEAR)

    @classmethod
    def natural_spline(cls, df: int, values=None, lower=None, upper=None) -> "BasisSpec":
        """Spline with ``df`` columns; knots at quantiles of ``values``.

        Boundary knots default to the extremes of ``values``; interior knots
        sit at equally spaced quantiles.
        """
        if df < 1:
            raise InvalidInputError("df must be a positive integer")
        if values is None:
            if lower is None or upper is None:
                raise InvalidInputError("need either data values or explicit lower/upper bounds")
            values = np.arange(lower, upper + 1, dtype=float)
        values = np.asarray(values, dtype=float)
        lo = float(values.min()) if lower is None else float(lower)
        hi = float(values.max()) if upper is None else float(upper)
        probs = np.linspace(0, 1, df + 1)[1:-1]
        interior = np.quantile(values[(values > lo) & (values < hi)], probs) if df > 1 else []
        return cls(BasisKind.NATURAL_SPLINE, (lo, *interior, hi))

    def to_config(self) -> str:
        if self.kind is BasisKind.NATURAL_SPLINE:
            return "ns(" + ", ".join(repr(k) for k in self.knots) + ")"
        return self.kind.value


def _natural_spline_columns(x: np.ndarray, knots: tuple[float, ...]) -> np.ndarray:
    # truncated-power natural spline basis, evaluated on the unit-rescaled axis
    k = np.asarray(knots)
    width = k[-1] - k[0]
    u = (x - k[0]) / width
    ku = (k - k[0]) / width
    n_knots = len(ku)
    cols = [u]
    if n_knots > 2:

        def d(i):
            return (np.maximum(u - ku[i], 0) ** 3 - np.maximum(u - ku[-1], 0) ** 3) / (ku[-1] - ku[i])

        last = d(n_knots - 2)
        for i in range(n_knots - 2):
            cols.append(d(i) - last)
    return np.stack(cols, axis=-1)


def basis_matrix(spec: BasisSpec, j, n_intervals: int | None = None) -> np.ndarray:
    """Evaluate the basis at an array of time indices; returns shape (len(j), size)."""
    j = np.asarray(j, dtype=float)
    if j.ndim == 0:
        j = j[None]
    if not np.all(np.isfinite(j)) or np.any(j < 1) or (n_intervals is not None and np.any(j > n_intervals)):
        raise InvalidInputError(f"time index outside the grid 1..{n_intervals}")
    if spec.kind is BasisKind.NONE:
        return np.zeros(j.shape + (0,))
    if spec.kind is BasisKind.LINEAR:
        return j[..., None].copy()
    return _natural_spline_columns(j, spec.knots)


def basis_eval(spec: BasisSpec, j, n_intervals: int | None = None) -> np.ndarray:
    """Basis vector at a single time index."""
    if np.ndim(j) != 0:
        raise InvalidInputError("basis_eval takes a scalar time index; use basis_matrix for arrays")
    return basis_matrix(spec, j, n_intervals)[0]
