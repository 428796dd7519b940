"""Plot-ready fitted curves with pointwise delta-method intervals."""

from __future__ import annotations

import csv
import io

import numpy as np
from scipy import stats

from .basis import basis_matrix
from .inference import FitResult
from .model import LinkFunction, ModelSpec

CURVE_HEADER = ("quantity", "axis", "sex", "age", "j", "status", "estimate", "lower", "upper")
DEFAULT_AGES = (20.0, 35.0, 50.0)


def design_row(comp: str, spec: ModelSpec, sex: float, age: float, j: int, x: int = 0) -> np.ndarray:
    """Gradient of the component's linear predictor with respect to theta."""
    block = spec.layout[comp]
    a = np.zeros(spec.n_params)
    a[block["alpha"]] = 1.0
    a[block["gamma"]] = spec.covariate_vector(sex, age)
    if spec.bases[comp].size:
        a[block["tau"]] = basis_matrix(spec.bases[comp], np.array([j]), spec.n_intervals)[0]
    if "beta" in block:
        a[block["beta"]] = x
    return a


def _interval(a, result: FitResult, z):
    eta = float(a @ result.theta)
    se = float(np.sqrt(a @ result.vcov @ a)) if result.positive_definite else float("nan")
    return eta, eta - z * se, eta + z * se


def curve_rows(result: FitResult, spec: ModelSpec, ages=DEFAULT_AGES, times=None):
    """Rows of death hazard (by HIV status), seroconversion hazard and the
    status effect on the outcome, along calendar time and along age."""
    J = spec.n_intervals
    times = tuple(times) if times is not None else tuple(sorted({1, (J + 1) // 2, J}))
    z = stats.norm.ppf(0.5 + result.level / 2)
    age_grid = np.arange(np.floor(spec.age_offset), np.floor(spec.age_offset + spec.age_scale) + 1)
    points = [("calendar", s, a, j) for s in (0, 1) for a in ages for j in range(1, J + 1)]
    points += [("age", s, float(a), j) for s in (0, 1) for j in times for a in age_grid]

    ratio_name = "hazard_ratio" if spec.links["y"] is LinkFunction.CLOGLOG else "odds_ratio"
    beta_idx = spec.layout["y"]["beta"].start
    b = result.theta[beta_idx]
    b_se = np.sqrt(result.vcov[beta_idx, beta_idx]) if result.positive_definite else np.nan

    rows = []
    for axis, sex, age, j in points:
        for x in (0, 1):
            eta, lo, hi = _interval(design_row("y", spec, sex, age, j, x), result, z)
            inv = spec.links["y"].inverse
            rows.append(("death_hazard", axis, sex, age, j, x, *(float(inv(v)) for v in (eta, lo, hi))))
        eta, lo, hi = _interval(design_row("x", spec, sex, age, j), result, z)
        inv = spec.links["x"].inverse
        rows.append(("seroconversion_hazard", axis, sex, age, j, "", *(float(inv(v)) for v in (eta, lo, hi))))
        rows.append((ratio_name, axis, sex, age, j, "", float(np.exp(b)), float(np.exp(b - z * b_se)), float(np.exp(b + z * b_se))))
    return rows


def curves_csv(result: FitResult, spec: ModelSpec, **kw) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for q, axis, sex, age, j, x, est, lo, hi in curve_rows(result, spec, **kw):
        w.writerow([q, axis, sex, repr(float(age)), j, x, repr(est), repr(lo), repr(hi)])
    return buf.getvalue()
