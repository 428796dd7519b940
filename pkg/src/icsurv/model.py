"""Link functions, model specification, parameter layout and the three
conditional probability models (outcome hazard, secondary-event status,
testing).

Components are keyed by short suffixes used in parameter names:
``y`` outcome hazard, ``s`` initial status, ``x`` secondary-event hazard,
``d`` testing probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from .basis import BasisSpec, basis_matrix
from .errors import InvalidInputError, SpecError

EPS = 1e-12
COMPONENTS = ("y", "s", "x", "d")
COMPONENT_NAMES = {"y": "outcome", "s": "initial", "x": "sero", "d": "testing"}
KNOWN_COVARIATES = ("sex", "age")


class LinkFunction(str, Enum):
    CLOGLOG = "cloglog"
    LOGIT = "logit"

    def inverse(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self is LinkFunction.CLOGLOG:
            p = -np.expm1(-np.exp(eta))
        else:
            p = expit(eta)
        return np.clip(p, EPS, 1.0 - EPS)

    @property
    def eta_bounds(self) -> tuple[float, float]:
        """Linear-predictor range whose image is [EPS, 1 - EPS]."""
        return _ETA_BOUNDS[self]

    def log_probs(self, eta):
        """(log p, log(1 - p)) with the same clamping as ``inverse``, computed in log space."""
        lo, hi = self.eta_bounds
        eta = np.clip(eta, lo, hi)
        if self is LinkFunction.CLOGLOG:
            e = np.exp(eta)
            return np.log(-np.expm1(-e)), -e
        return -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta)

    def __call__(self, p):
        p = np.clip(np.asarray(p, dtype=float), EPS, 1.0 - EPS)
        if self is LinkFunction.CLOGLOG:
            return np.log(-np.log1p(-p))
        return np.log(p) - np.log1p(-p)


_ETA_BOUNDS = {link: (float(link(EPS)), float(link(1.0 - EPS))) for link in LinkFunction}


def link_inverse(link, eta) -> float:
    """Inverse link, clamped to [EPS, 1 - EPS]."""
    if not np.isfinite(eta):
        raise InvalidInputError(f"linear predictor must be finite, got {eta}")
    return float(LinkFunction(link).inverse(eta))


@dataclass(frozen=True)
class ModelSpec:
    """Everything that fixes the parameter layout and the linear predictors.

    Age enters the predictors as ``(age - age_offset) / age_scale``.
    """

    covariates: tuple[str, ...] = ("sex", "age")
    n_intervals: int = 20
    links: dict = field(default_factory=lambda: {c: LinkFunction.CLOGLOG for c in COMPONENTS})
    bases: dict = field(
        default_factory=lambda: {
            "y": BasisSpec.linear(),
            "s": BasisSpec.linear(),
            "x": BasisSpec.linear(),
            "d": BasisSpec.none(),
        }
    )
    age_offset: float = 13.0
    age_scale: float = 47.0

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        for c in self.covariates:
            if c not in KNOWN_COVARIATES:
                raise SpecError(f"unknown covariate {c!r}; expected one of {KNOWN_COVARIATES}")
        if len(set(self.covariates)) != len(self.covariates):
            raise SpecError("duplicate covariate names")
        if self.n_intervals < 1:
            raise SpecError("n_intervals must be >= 1")
        if self.age_scale <= 0:
            raise SpecError("age_scale must be positive")
        links = {c: LinkFunction(self.links.get(c, LinkFunction.CLOGLOG)) for c in COMPONENTS}
        bases = dict(self.bases)
        missing = set(COMPONENTS) - set(bases)
        if missing:
            raise SpecError(f"missing basis for components {sorted(missing)}")
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "bases", {c: bases[c] for c in COMPONENTS})
        object.__setattr__(self, "_layout", self._build_layout())

    def _build_layout(self):
        layout = {}
        names = []
        pos = 0
        p = len(self.covariates)
        for comp in COMPONENTS:
            block = {"alpha": slice(pos, pos + 1)}
            names.append(f"alpha_{comp}")
            pos += 1
            if comp == "y":
                block["beta"] = slice(pos, pos + 1)
                names.append("beta")
                pos += 1
            block["gamma"] = slice(pos, pos + p)
            names += [f"gamma_{comp}[{i + 1}]" for i in range(p)]
            pos += p
            q = self.bases[comp].size
            block["tau"] = slice(pos, pos + q)
            names += [f"tau_{comp}[{i + 1}]" for i in range(q)]
            pos += q
            layout[comp] = block
        return layout, tuple(names)

    @property
    def layout(self) -> dict:
        return self._layout[0]

    @property
    def names(self) -> tuple[str, ...]:
        return self._layout[1]

    @property
    def n_params(self) -> int:
        return len(self.names)

    def scale_age(self, age):
        return (np.asarray(age, dtype=float) - self.age_offset) / self.age_scale

    def covariate_vector(self, sex, age) -> np.ndarray:
        """Map raw (sex, age in years) to the predictor-scale z vector."""
        values = {"sex": float(sex), "age": float(self.scale_age(age))}
        return np.array([values[c] for c in self.covariates])

    def covariate_matrix(self, sex, age) -> np.ndarray:
        sex = np.asarray(sex, dtype=float)
        cols = {"sex": sex, "age": self.scale_age(age) + 0 * sex}
        return np.stack([cols[c] for c in self.covariates], axis=-1) if self.covariates else np.zeros(sex.shape + (0,))


@dataclass
class ParameterVector:
    """Coefficient blocks of the four model components.

    ``gamma_*`` and ``tau_*`` are 1-d arrays whose lengths are fixed by the
    ModelSpec (covariate count and basis size respectively).
    """

    alpha_y: float
    beta: float
    gamma_y: np.ndarray
    tau_y: np.ndarray
    alpha_s: float
    gamma_s: np.ndarray
    tau_s: np.ndarray
    alpha_x: float
    gamma_x: np.ndarray
    tau_x: np.ndarray
    alpha_d: float
    gamma_d: np.ndarray
    tau_d: np.ndarray

    def __post_init__(self):
        for comp in COMPONENTS:
            for part in ("gamma", "tau"):
                name = f"{part}_{comp}"
                setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))

    def flatten(self, spec: ModelSpec) -> np.ndarray:
        theta = np.empty(spec.n_params)
        for comp, block in spec.layout.items():
            gamma = getattr(self, f"gamma_{comp}")
            tau = getattr(self, f"tau_{comp}")
            if gamma.size != block["gamma"].stop - block["gamma"].start:
                raise SpecError(f"gamma_{comp} has length {gamma.size}, spec expects {len(spec.covariates)}")
            if tau.size != block["tau"].stop - block["tau"].start:
                raise SpecError(f"tau_{comp} has length {tau.size}, spec expects {spec.bases[comp].size}")
            theta[block["alpha"]] = getattr(self, f"alpha_{comp}")
            theta[block["gamma"]] = gamma
            theta[block["tau"]] = tau
            if "beta" in block:
                theta[block["beta"]] = self.beta
        return theta

    @classmethod
    def unflatten(cls, theta, spec: ModelSpec) -> "ParameterVector":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (spec.n_params,):
            raise SpecError(f"expected {spec.n_params} parameters, got shape {theta.shape}")
        kw = {}
        for comp, block in spec.layout.items():
            kw[f"alpha_{comp}"] = float(theta[block["alpha"]][0])
            kw[f"gamma_{comp}"] = theta[block["gamma"]].copy()
            kw[f"tau_{comp}"] = theta[block["tau"]].copy()
        kw["beta"] = float(theta[spec.layout["y"]["beta"]][0])
        return cls(**kw)

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "ParameterVector":
        return cls.unflatten(np.zeros(spec.n_params), spec)


@dataclass(frozen=True)
class CovariateRow:
    """Covariates for one person-interval: predictor-scale z, calendar index j,
    and whether j is the person's entry interval."""

    z: tuple[float, ...]
    j: int
    is_entry: bool = False

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(float(v) for v in np.atleast_1d(self.z)))


def _as_theta(omega, spec: ModelSpec) -> np.ndarray:
    if isinstance(omega, ParameterVector):
        return omega.flatten(spec)
    theta = np.asarray(omega, dtype=float)
    if theta.shape != (spec.n_params,):
        raise SpecError(f"expected {spec.n_params} parameters, got shape {theta.shape}")
    return theta


def linear_predictor(comp: str, theta: np.ndarray, spec: ModelSpec, Z: np.ndarray, j) -> np.ndarray:
    """alpha + gamma'z + tau'b(j) for arrays of rows (Z has a trailing covariate axis)."""
    block = spec.layout[comp]
    Z = np.asarray(Z, dtype=float)
    if Z.shape[-1] != len(spec.covariates):
        raise SpecError(f"covariate vector has length {Z.shape[-1]}, spec expects {len(spec.covariates)}")
    eta = theta[block["alpha"]][0] + Z @ theta[block["gamma"]]
    tau = theta[block["tau"]]
    if tau.size:
        eta = eta + basis_matrix(spec.bases[comp], j, spec.n_intervals) @ tau
    return eta


def _row_eta(comp, row: CovariateRow, theta, spec):
    if not isinstance(row, CovariateRow):
        raise InvalidInputError("expected a CovariateRow")
    return float(linear_predictor(comp, theta, spec, np.array(row.z)[None, :], [row.j])[0])


def _eta_y(x, row, theta, spec):
    if x not in (0, 1):
        raise InvalidInputError(f"x must be 0 or 1, got {x}")
    return _row_eta("y", row, theta, spec) + x * theta[spec.layout["y"]["beta"]][0]


def _eta_x(x_prev, row, theta, spec):
    """(component, eta) for the status transition, or None when absorbed at 1."""
    if row.is_entry:
        if x_prev is not None:
            raise InvalidInputError("the status before the entry interval is undefined; pass x_prev=None")
        return "s", _row_eta("s", row, theta, spec)
    if x_prev not in (0, 1):
        raise InvalidInputError(f"x_prev must be 0 or 1 at a non-entry row, got {x_prev}")
    if x_prev == 1:
        return None
    return "x", _row_eta("x", row, theta, spec)


def hazard_y(x: int, row: CovariateRow, omega, spec: ModelSpec) -> float:
    """Discrete hazard of the outcome given secondary-event status ``x``."""
    theta = _as_theta(omega, spec)
    return link_inverse(spec.links["y"], _eta_y(x, row, theta, spec))


def hazard_x(x_prev, row: CovariateRow, omega, spec: ModelSpec) -> float:
    """P(X_j = 1 | X_{j-1} = x_prev, z, j).

    At an entry row this is the initial-status probability and ``x_prev`` must
    be None; afterwards it is the secondary-event hazard (absorbing at 1).
    """
    theta = _as_theta(omega, spec)
    step = _eta_x(x_prev, row, theta, spec)
    if step is None:
        return 1.0
    comp, eta = step
    return link_inverse(spec.links[comp], eta)


def prob_test(row: CovariateRow, omega, spec: ModelSpec) -> float:
    """Probability that a test is taken in this interval."""
    theta = _as_theta(omega, spec)
    return link_inverse(spec.links["d"], _row_eta("d", row, theta, spec))


def _bernoulli(value, link, eta):
    # the complement comes from log space so that it keeps full relative precision near p = 1
    if value not in (0, 1):
        raise InvalidInputError(f"binary value expected, got {value}")
    if value == 1:
        return link_inverse(link, eta)
    if not np.isfinite(eta):
        raise InvalidInputError(f"linear predictor must be finite, got {eta}")
    return float(np.exp(LinkFunction(link).log_probs(eta)[1]))


def pmf_x(x, x_prev, row, omega, spec) -> float:
    theta = _as_theta(omega, spec)
    step = _eta_x(x_prev, row, theta, spec)
    if step is None:
        if x not in (0, 1):
            raise InvalidInputError(f"binary value expected, got {x}")
        return float(x)
    comp, eta = step
    return _bernoulli(x, spec.links[comp], eta)


def pmf_y(y, x, row, omega, spec) -> float:
    theta = _as_theta(omega, spec)
    return _bernoulli(y, spec.links["y"], _eta_y(x, row, theta, spec))
