"""Open-cohort data-generating process.

Each person enters at a uniformly drawn interval, gets a sex indicator and a
baseline age, and is followed until the outcome occurs or the grid ends.
Within each interval the draws happen in a fixed order: status, test, outcome.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .likelihood import PersonRecord
from .missingness import TestHistory
from .model import ModelSpec, ParameterVector, linear_predictor


def reference_truth(spec: Optional[ModelSpec] = None) -> ParameterVector:
    """True parameter values of the reference simulation design."""
    truth = ParameterVector(
        alpha_y=-3.5, beta=0.4, gamma_y=[0.2, 0.1], tau_y=[-0.1],
        alpha_s=-1.6, gamma_s=[0.5, 0.3], tau_s=[0.1],
        alpha_x=-3.0, gamma_x=[0.3, 0.2], tau_x=[-0.1],
        alpha_d=-0.8, gamma_d=[0.2, 0.1], tau_d=[],
    )
    if spec is not None:
        truth.flatten(spec)  # raises on layout mismatch
    return truth


@dataclass(frozen=True)
class DgpConfig:
    n: int = 1000
    spec: ModelSpec = field(default_factory=ModelSpec)
    truth: ParameterVector = field(default_factory=reference_truth)
    entry_min: int = 1
    entry_max: Optional[int] = None
    p_sex: float = 0.5
    age_min: float = 13.0
    age_max: float = 60.0
    seed: int = 0
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("n must be >= 1")
        J = self.spec.n_intervals
        hi = J if self.entry_max is None else self.entry_max
        if not 1 <= self.entry_min <= hi <= J:
            raise InvalidInputError(f"entry range must lie within 1..{J}")
        if not 0 <= self.p_sex <= 1:
            raise InvalidInputError("p_sex must be a probability")
        if self.age_max < self.age_min:
            raise InvalidInputError("age_max < age_min")
        if not np.all(np.isfinite(self.truth.flatten(self.spec))):
            raise InvalidInputError("true parameters must be finite")

    @property
    def last_entry(self) -> int:
        return self.spec.n_intervals if self.entry_max is None else self.entry_max

    def individual_rng(self, index: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(*self.stream, index))
        return np.random.Generator(np.random.PCG64(seq))


def _first_hit(u, p) -> int:
    """Index of the first u < p, or len(u) if none."""
    hits = np.flatnonzero(u < p)
    return int(hits[0]) if hits.size else len(u)


def simulate_individual(config: DgpConfig, rng: np.random.Generator, index: int = 0) -> PersonRecord:
    """Draw one person; the returned record carries ``x_true``."""
    spec = config.spec
    theta = config.truth.flatten(spec)
    J = spec.n_intervals
    s = int(rng.integers(config.entry_min, config.last_entry + 1))
    sex = float(rng.random() < config.p_sex)
    age0 = float(rng.uniform(config.age_min, config.age_max))
    j = np.arange(s, J + 1)
    K = j.size
    age = age0 + (j - s)
    Z = spec.covariate_matrix(np.full(K, sex), age)
    draws = rng.random((K, 3))

    links = spec.links
    p_init = links["s"].inverse(linear_predictor("s", theta, spec, Z[:1], j[:1]))[0]
    if draws[0, 0] < p_init:
        first_pos = 0
    else:
        hx = links["x"].inverse(linear_predictor("x", theta, spec, Z[1:], j[1:]))
        first_pos = 1 + _first_hit(draws[1:, 0], hx)
    x = (np.arange(K) >= first_pos).astype(np.int8)

    tested = (draws[:, 1] < links["d"].inverse(linear_predictor("d", theta, spec, Z, j))).astype(np.int8)

    beta = theta[spec.layout["y"]["beta"]][0]
    py = links["y"].inverse(linear_predictor("y", theta, spec, Z, j) + beta * x)
    death = _first_hit(draws[:, 2], py)
    k = min(death + 1, K)
    y = np.zeros(k, dtype=np.int8)
    if death < K:
        y[-1] = 1
    x, tested = x[:k], tested[:k]
    return PersonRecord(
        id=str(index + 1),
        entry=s,
        sex=sex,
        age=age[:k],
        y=y,
        history=TestHistory.from_path(x, tested),
        x_true=x,
    )


def simulate_dataset(config: DgpConfig, threads: int = 1):
    """Return (fit-ready records without x, oracle records with x), in index order."""

    def one(i):
        return simulate_individual(config, config.individual_rng(i), i)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            oracle = list(pool.map(one, range(config.n)))
    else:
        oracle = [one(i) for i in range(config.n)]
    return [r.without_truth() for r in oracle], oracle


def with_stream(config: DgpConfig, *key: int) -> DgpConfig:
    return replace(config, stream=tuple(key))
