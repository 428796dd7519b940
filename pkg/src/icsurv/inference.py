"""Maximum likelihood fitting with finite-difference derivatives."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize, stats

from .errors import (
    InitializationError,
    InvalidInputError,
    NumericalFailureError,
    SingularInformationError,
)
from .likelihood import Panel, _as_panel
from .model import ModelSpec, ParameterVector

log = logging.getLogger(__name__)

MACHEPS = np.finfo(float).eps
GRAD_STEP = MACHEPS ** (1 / 3)
HESS_STEP = MACHEPS ** (1 / 4)
OPTIMIZERS = ("quasi-newton-fd", "nelder-mead")
BOUNDARY = 20.0


@dataclass(frozen=True)
class FitOptions:
    optimizer: str = "quasi-newton-fd"
    max_iterations: int = 1000
    grad_tol: float = 1e-6
    f_tol: float = 1e-12
    grad_step: float = GRAD_STEP
    hess_step: float = HESS_STEP
    initial: Optional[tuple[float, ...]] = None
    level: float = 0.95
    threads: int = 1

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise InvalidInputError(f"optimizer must be one of {OPTIMIZERS}")
        if min(self.grad_tol, self.f_tol, self.grad_step, self.hess_step) <= 0:
            raise InvalidInputError("tolerances and step sizes must be positive")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if not 0 < self.level < 1:
            raise InvalidInputError("level must lie in (0, 1)")


@dataclass
class FitResult:
    names: tuple[str, ...]
    theta: np.ndarray
    omega_hat: ParameterVector
    vcov: np.ndarray
    loglik_at_max: float
    converged: bool
    positive_definite: bool
    n_evaluations: int
    n_iterations: int
    max_rel_gradient: float
    wald_intervals: np.ndarray
    level: float
    message: str = ""
    boundary: tuple[str, ...] = ()
    hessian: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def se(self) -> np.ndarray:
        if not self.positive_definite:
            return np.full(len(self.names), np.nan)
        return np.sqrt(np.diag(self.vcov))

    def to_dict(self) -> dict:
        se = self.se
        return {
            "converged": self.converged,
            "positive_definite": self.positive_definite,
            "loglik": self.loglik_at_max,
            "n_evaluations": self.n_evaluations,
            "n_iterations": self.n_iterations,
            "max_rel_gradient": self.max_rel_gradient,
            "boundary_parameters": list(self.boundary),
            "message": self.message,
            "level": self.level,
            "parameters": [
                {
                    "name": n,
                    "estimate": float(self.theta[i]),
                    "se": _num(se[i]),
                    "lower": _num(self.wald_intervals[i, 0]),
                    "upper": _num(self.wald_intervals[i, 1]),
                }
                for i, n in enumerate(self.names)
            ],
            "vcov": [[_num(v) for v in row] for row in self.vcov],
        }


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def fd_gradient(f: Callable, theta, step: float = GRAD_STEP) -> np.ndarray:
    """Central-difference gradient with per-coordinate step step * max(1, |theta_i|)."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        h = step * max(1.0, abs(theta[i]))
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        h = tp[i] - tm[i]
        g[i] = (f(tp) - f(tm)) / h
    return g


def fd_hessian(f: Callable, theta, step: float = HESS_STEP) -> np.ndarray:
    """Central-difference Hessian, symmetrized."""
    theta = np.asarray(theta, dtype=float)
    p = theta.size
    h = step * np.maximum(1.0, np.abs(theta))
    f0 = f(theta)

    def shifted(*moves):
        t = theta.copy()
        for i, d in moves:
            t[i] += d
        return f(t)

    H = np.empty((p, p))
    for i in range(p):
        H[i, i] = (shifted((i, h[i])) - 2 * f0 + shifted((i, -h[i]))) / h[i] ** 2
        for k in range(i):
            fpp = shifted((i, h[i]), (k, h[k]))
            fpm = shifted((i, h[i]), (k, -h[k]))
            fmp = shifted((i, -h[i]), (k, h[k]))
            fmm = shifted((i, -h[i]), (k, -h[k]))
            H[i, k] = H[k, i] = (fpp - fpm - fmp + fmm) / (4 * h[i] * h[k])
    H = 0.5 * (H + H.T)
    bad = np.argwhere(~np.isfinite(H))
    if bad.size:
        coords = sorted({tuple(int(v) for v in b) for b in bad})
        raise NumericalFailureError(f"non-finite Hessian entries at {coords[:10]}")
    return H


def hessian_fd(data, spec: ModelSpec, omega, step: float = HESS_STEP, threads: int = 1) -> np.ndarray:
    """Hessian of the total observed-data log-likelihood at ``omega``."""
    panel = _as_panel(data, spec)
    theta = omega.flatten(spec) if isinstance(omega, ParameterVector) else np.asarray(omega, dtype=float)
    return fd_hessian(lambda t: float(np.sum(panel.person_logliks(t, threads))), theta, step)


def vcov_from_hessian(H) -> np.ndarray:
    """Inverse observed information (-H)^-1 via Cholesky; raises when -H is not positive definite."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidInputError("Hessian must be square")
    info = -0.5 * (H + H.T)
    try:
        c = linalg.cho_factor(info, lower=True)
    except linalg.LinAlgError:
        raise SingularInformationError("observed information is not positive definite", _cond(info)) from None
    V = linalg.cho_solve(c, np.eye(H.shape[0]))
    V = 0.5 * (V + V.T)
    if not np.all(np.isfinite(V)) or np.any(np.diag(V) <= 0):
        raise SingularInformationError("observed information is numerically singular", _cond(info))
    return V


def _cond(A):
    try:
        return float(np.linalg.cond(A))
    except np.linalg.LinAlgError:
        return float("inf")


def wald_interval(estimate: float, se: float, level: float = 0.95) -> tuple[float, float]:
    if not 0 < level < 1:
        raise InvalidInputError(f"level must lie in (0, 1), got {level}")
    if se < 0:
        raise InvalidInputError("standard error must be non-negative")
    z = stats.norm.ppf(0.5 + level / 2)
    return estimate - z * se, estimate + z * se


def default_initial(panel: Panel) -> np.ndarray:
    """Intercepts from marginal frequencies through each link; everything else zero."""
    spec = panel.spec
    theta = np.zeros(spec.n_params)
    py = max(int(panel.valid.sum()), 1)

    def rate(num, den):
        return float(np.clip(num / max(den, 1), 1e-4, 0.5))

    known_pos_entry = int(np.sum(panel.hi == 1))
    known_neg_entry = int(np.sum(panel.lo > 1))
    p_init = rate(known_pos_entry, known_pos_entry + known_neg_entry) if known_pos_entry + known_neg_entry else 0.25
    # seroconversions bracketed by a negative then a positive test, per known-negative year
    bracketed = int(np.sum((panel.lo > 1) & (panel.hi <= panel.k)))
    at_risk = int(np.sum(panel.lo - 1))
    freqs = {
        "y": rate(panel.y.sum(), py),
        "d": rate(panel.dstar.sum(), py),
        "s": p_init,
        "x": rate(bracketed, at_risk),
    }
    for comp, p in freqs.items():
        theta[spec.layout[comp]["alpha"]] = float(spec.links[comp](p))
    return theta


def _relative_gradient(g, theta, fval):
    return float(np.max(np.abs(g) * np.maximum(np.abs(theta), 1.0)) / max(abs(fval), 1.0)) if g.size else 0.0


def fit(data, spec: ModelSpec, options: FitOptions = FitOptions()) -> FitResult:
    """Maximize the observed-data log-likelihood and attach Wald inference."""
    panel = _as_panel(data, spec)
    if panel.n == 0:
        raise InvalidInputError("cannot fit an empty dataset")
    n = panel.n
    evals = [0]

    def objective(t):
        evals[0] += 1
        val = -float(np.sum(panel.person_logliks(t, options.threads))) / n
        return val if np.isfinite(val) else np.inf

    def gradient(t):
        return fd_gradient(objective, t, options.grad_step)

    theta0 = np.asarray(options.initial, dtype=float) if options.initial is not None else default_initial(panel)
    if theta0.shape != (spec.n_params,):
        raise InitializationError(f"initial vector has length {theta0.size}, expected {spec.n_params}")
    f0 = objective(theta0)
    if not np.isfinite(f0):
        raise InitializationError("log-likelihood is not finite at the initial values")

    theta, iterations, message = theta0, 0, ""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if options.optimizer == "nelder-mead":
            res = optimize.minimize(
                objective, theta, method="Nelder-Mead",
                options={"maxiter": options.max_iterations, "xatol": 1e-8, "fatol": options.f_tol, "adaptive": True},
            )
            theta, iterations, message = res.x, res.nit, str(res.message)
        else:
            # one restart resets the inverse-Hessian approximation after a line-search stall
            for _ in range(2):
                res = optimize.minimize(
                    objective, theta, jac=gradient, method="BFGS",
                    options={"maxiter": options.max_iterations - iterations, "gtol": options.grad_tol * 0.1},
                )
                theta, iterations, message = res.x, iterations + res.nit, str(res.message)
                fval = objective(theta)
                if _relative_gradient(gradient(theta), theta, fval) <= options.grad_tol:
                    break
                if iterations >= options.max_iterations:
                    break

    fval = objective(theta)
    rel_grad = _relative_gradient(gradient(theta), theta, fval)
    converged = bool(np.isfinite(fval) and rel_grad <= options.grad_tol and iterations < options.max_iterations)
    boundary = tuple(name for name, v in zip(spec.names, theta) if abs(v) > BOUNDARY)

    H = None
    try:
        H = fd_hessian(lambda t: -n * objective(t), theta, options.hess_step)
        vcov = vcov_from_hessian(H)
        pd = True
    except (SingularInformationError, NumericalFailureError) as exc:
        log.warning("variance estimation failed: %s", exc)
        message = f"{message}; {exc}"
        vcov = np.full((spec.n_params, spec.n_params), np.nan)
        pd = False

    z = stats.norm.ppf(0.5 + options.level / 2)
    se = np.sqrt(np.diag(vcov)) if pd else np.full(spec.n_params, np.nan)
    intervals = np.column_stack([theta - z * se, theta + z * se])
    if not converged:
        log.warning("fit did not converge: relative gradient %.3g, %s", rel_grad, message)
    return FitResult(
        names=spec.names,
        theta=theta,
        omega_hat=ParameterVector.unflatten(theta, spec),
        vcov=vcov,
        loglik_at_max=float(np.sum(panel.person_logliks(theta, options.threads))),
        converged=converged,
        positive_definite=pd,
        n_evaluations=evals[0],
        n_iterations=int(iterations),
        max_rel_gradient=rel_grad,
        wald_intervals=intervals,
        level=options.level,
        message=message,
        boundary=boundary,
        hessian=H,
    )
