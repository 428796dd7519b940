"""Replicated simulate-and-fit studies and their operating characteristics."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import InvalidInputError, StudyFailureError
from .inference import FitOptions, fit
from .likelihood import Panel
from .simulate import DgpConfig, simulate_dataset

log = logging.getLogger(__name__)

# parameters shown in the published results table, in its column order
TABLE1_PARAMETERS = ("beta", "alpha_y", "gamma_y[1]", "tau_y[1]", "alpha_x", "gamma_x[1]", "tau_x[1]")


@dataclass(frozen=True)
class StudyConfig:
    dgp: DgpConfig = field(default_factory=DgpConfig)
    fit: FitOptions = field(default_factory=FitOptions)
    n_replicates: int = 1000
    seed: int = 0
    report: tuple[str, ...] = TABLE1_PARAMETERS
    first_replicate: int = 1

    def __post_init__(self):
        if self.n_replicates < 1:
            raise InvalidInputError("n_replicates must be >= 1")
        if self.first_replicate < 1:
            raise InvalidInputError("first_replicate must be >= 1")
        unknown = set(self.report) - set(self.dgp.spec.names)
        if unknown:
            raise InvalidInputError(f"unknown parameters in report list: {sorted(unknown)}")

    @property
    def replicates(self) -> range:
        return range(self.first_replicate, self.first_replicate + self.n_replicates)


@dataclass
class ReplicateResult:
    replicate: int
    converged: bool
    positive_definite: bool
    n_evaluations: int
    loglik: float
    names: tuple[str, ...]
    truth: np.ndarray
    estimate: np.ndarray
    se: np.ndarray

    @property
    def usable(self) -> bool:
        return self.converged and self.positive_definite


@dataclass
class ParameterMetrics:
    name: str
    truth: float
    mean_estimate: float
    bias: float
    mean_se: float
    empirical_se: float
    coverage: float
    coverage_mc_se: float
    bias_mc_se: float


@dataclass
class StudyMetrics:
    parameters: list[ParameterMetrics]
    n_used: int
    n_failed: int
    level: float = 0.95
    failed_replicates: tuple[int, ...] = ()

    def __getitem__(self, name) -> ParameterMetrics:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)


def covered(estimate, se, truth, level):
    z = stats.norm.ppf(0.5 + level / 2)
    lower = estimate - z * se
    upper = estimate + z * se
    return (lower <= truth) & (truth <= upper)


def summarize(estimates, ses, truth, level: float = 0.95, names: Optional[Sequence[str]] = None, n_failed: int = 0) -> StudyMetrics:
    """Operating characteristics from per-replicate estimates and standard errors.

    ``estimates`` and ``ses`` are (replicates, parameters); the empirical SE
    uses the n - 1 denominator and is NaN with a single replicate.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    se = np.atleast_2d(np.asarray(ses, dtype=float))
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if est.shape != se.shape or est.shape[1] != truth.size:
        raise InvalidInputError(f"shape mismatch: estimates {est.shape}, ses {se.shape}, truth {truth.shape}")
    if not 0 < level < 1:
        raise InvalidInputError("level must lie in (0, 1)")
    R = est.shape[0]
    if R == 0:
        raise InvalidInputError("no replicates to summarize")
    names = list(names) if names is not None else [f"p{i + 1}" for i in range(truth.size)]
    if len(names) != truth.size:
        raise InvalidInputError("names and truth lengths differ")
    mean = est.mean(axis=0)
    emp = est.std(axis=0, ddof=1) if R > 1 else np.full(truth.size, np.nan)
    cov = covered(est, se, truth, level).mean(axis=0)
    rows = [
        ParameterMetrics(
            name=names[i],
            truth=float(truth[i]),
            mean_estimate=float(mean[i]),
            bias=float(mean[i] - truth[i]),
            mean_se=float(se[:, i].mean()),
            empirical_se=float(emp[i]),
            coverage=float(cov[i]),
            coverage_mc_se=float(np.sqrt(cov[i] * (1 - cov[i]) / R)),
            bias_mc_se=float(emp[i] / np.sqrt(R)),
        )
        for i in range(truth.size)
    ]
    return StudyMetrics(rows, n_used=R, n_failed=n_failed, level=level)


def run_replicate(config: StudyConfig, replicate: int) -> ReplicateResult:
    dgp = replace(config.dgp, seed=config.seed, stream=(replicate,))
    data, _ = simulate_dataset(dgp)
    spec = dgp.spec
    options = replace(config.fit, threads=1)
    res = fit(Panel(data, spec), spec, options)
    return ReplicateResult(
        replicate=replicate,
        converged=res.converged,
        positive_definite=res.positive_definite,
        n_evaluations=res.n_evaluations,
        loglik=res.loglik_at_max,
        names=spec.names,
        truth=dgp.truth.flatten(spec),
        estimate=res.theta,
        se=res.se,
    )


def _run_one(args):
    config, r = args
    return run_replicate(config, r)


def run_replicates(config: StudyConfig, threads: int = 1, progress=None) -> list[ReplicateResult]:
    jobs = [(config, r) for r in config.replicates]
    results = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for res in pool.map(_run_one, jobs, chunksize=1):
                results.append(res)
                if progress:
                    progress(res)
    else:
        for job in jobs:
            res = _run_one(job)
            results.append(res)
            if progress:
                progress(res)
    return sorted(results, key=lambda r: r.replicate)


def metrics_from_replicates(results: Sequence[ReplicateResult], report: Sequence[str], level: float = 0.95) -> StudyMetrics:
    """Summarize usable replicates (converged with a positive-definite information matrix)."""
    results = sorted(results, key=lambda r: r.replicate)
    reps = [r.replicate for r in results]
    if len(set(reps)) != len(reps):
        raise InvalidInputError("duplicate replicate indices")
    used = [r for r in results if r.usable]
    failed = tuple(r.replicate for r in results if not r.usable)
    if not used:
        raise StudyFailureError(f"all {len(results)} replicates failed to converge: {list(failed)[:20]}")
    names = used[0].names
    idx = [names.index(n) for n in report]
    est = np.array([r.estimate[idx] for r in used])
    se = np.array([r.se[idx] for r in used])
    truth = used[0].truth[idx]
    metrics = summarize(est, se, truth, level, names=list(report), n_failed=len(failed))
    metrics.failed_replicates = failed
    return metrics


def run_study(config: StudyConfig, threads: int = 1, progress=None):
    """Run every replicate; returns (metrics, per-replicate results)."""
    results = run_replicates(config, threads, progress)
    return metrics_from_replicates(results, config.report, config.fit.level), results
