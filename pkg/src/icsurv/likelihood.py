"""Observed-data log-likelihood with the latent secondary-event path summed out.

A person observed over ``k`` intervals has ``k + 1`` possible monotone paths,
indexed here by the 1-based position of the first 1 (``k + 1`` = never).
Only paths that agree with every known status contribute. The per-path
terms are built from cumulative sums so one person costs O(k).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .basis import basis_matrix
from .errors import DataInconsistencyError, InvalidInputError, SpecError
from .missingness import KnownStatus, TestHistory, derive_observed, is_monotone
from .model import CovariateRow, ModelSpec, _as_theta, linear_predictor, pmf_x, pmf_y

# persons per evaluation block; fixed so results do not depend on thread count
BLOCK_SIZE = 1024


@dataclass
class PersonRecord:
    """One person's observed series over entry..entry + k - 1.

    ``age`` is in years (unscaled), one value per interval. ``x_true`` is
    only present for simulated oracle data.
    """

    id: str
    entry: int
    sex: float
    age: np.ndarray
    y: np.ndarray
    history: TestHistory
    x_true: Optional[np.ndarray] = None
    known: KnownStatus = field(init=False, repr=False)

    def __post_init__(self):
        self.id = str(self.id)
        self.entry = int(self.entry)
        self.age = np.asarray(self.age, dtype=float)
        self.y = np.asarray(self.y).astype(np.int8)
        k = self.y.size
        if k < 1:
            raise DataInconsistencyError("empty observation series", self.id)
        if self.entry < 1:
            raise DataInconsistencyError(f"entry index {self.entry} must be >= 1", self.id)
        if self.age.shape != (k,) or len(self.history) != k:
            raise DataInconsistencyError("covariate, outcome and test vectors differ in length", self.id)
        if np.any((self.y != 0) & (self.y != 1)):
            raise DataInconsistencyError("outcome must be binary", self.id)
        if self.y[:-1].any():
            raise DataInconsistencyError("outcome can only occur in the final interval", self.id)
        if self.x_true is not None:
            self.x_true = np.asarray(self.x_true).astype(np.int8)
            binary = np.all((self.x_true == 0) | (self.x_true == 1))
            if self.x_true.shape != (k,) or not binary or not is_monotone(self.x_true):
                raise DataInconsistencyError("x_true must be a monotone binary vector of the series length", self.id)
        self.known = derive_observed(self.history)

    @property
    def k(self) -> int:
        return self.y.size

    @property
    def exit(self) -> int:
        return self.entry + self.k - 1

    @property
    def j(self) -> np.ndarray:
        return np.arange(self.entry, self.entry + self.k)

    def rows(self, spec: ModelSpec) -> list[CovariateRow]:
        return [
            CovariateRow(spec.covariate_vector(self.sex, a), int(j), is_entry=(pos == 0))
            for pos, (a, j) in enumerate(zip(self.age, self.j))
        ]

    def without_truth(self) -> "PersonRecord":
        return PersonRecord(self.id, self.entry, self.sex, self.age, self.y, self.history)


@dataclass(frozen=True)
class LatentPath:
    """Monotone path of ``length`` entries whose first 1 sits at ``first_positive``
    (1-based; ``length + 1`` means all zeros)."""

    first_positive: int
    length: int

    def __post_init__(self):
        if not 1 <= self.first_positive <= self.length + 1:
            raise InvalidInputError(f"first_positive must lie in 1..{self.length + 1}")

    @property
    def vector(self) -> np.ndarray:
        x = np.zeros(self.length, dtype=np.int8)
        x[self.first_positive - 1 :] = 1
        return x

    @classmethod
    def from_vector(cls, x) -> "LatentPath":
        x = np.asarray(x)
        if not is_monotone(x):
            raise InvalidInputError("path must be monotone")
        ones = np.flatnonzero(x)
        return cls(int(ones[0]) + 1 if ones.size else x.size + 1, x.size)


def support_set(k: int) -> list[LatentPath]:
    """All k + 1 monotone paths of length k, from all-zeros to all-ones."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    return [LatentPath(c, k) for c in range(k + 1, 0, -1)]


def consistent_paths(known: KnownStatus) -> list[LatentPath]:
    """Paths that reproduce every known status."""
    lo, hi = known.path_bounds()
    if lo > hi:
        raise DataInconsistencyError("no monotone path agrees with the observed tests")
    k = len(known)
    return [p for p in support_set(k) if lo <= p.first_positive <= hi]


def _check_window(record: PersonRecord, spec: ModelSpec):
    if record.exit > spec.n_intervals:
        raise SpecError(f"id={record.id}: interval {record.exit} beyond the {spec.n_intervals}-interval grid")


def loglik_path(record: PersonRecord, path, omega, spec: ModelSpec) -> float:
    """Joint log-probability of (path, outcomes) by direct per-interval evaluation."""
    _check_window(record, spec)
    x = path.vector if isinstance(path, LatentPath) else np.asarray(path)
    if x.size != record.k:
        raise InvalidInputError("path length does not match the record")
    theta = _as_theta(omega, spec)
    total = 0.0
    prev = None
    for row, xj, yj in zip(record.rows(spec), x, record.y):
        px = pmf_x(int(xj), prev, row, theta, spec)
        total += math.log(px) if px > 0 else -math.inf
        total += math.log(pmf_y(int(yj), int(xj), row, theta, spec))
        prev = int(xj)
    return total


def loglik_testing(record: PersonRecord, omega, spec: ModelSpec) -> float:
    """Log-probability of the test indicators; does not involve the latent path."""
    _check_window(record, spec)
    theta = _as_theta(omega, spec)
    Z = spec.covariate_matrix(np.full(record.k, record.sex), record.age)
    lp, lq = spec.links["d"].log_probs(linear_predictor("d", theta, spec, Z, record.j))
    return float(sum(np.where(record.history.delta_star == 1, lp, lq).tolist()))


class _Block:
    """Fixed slice of persons with flattened valid cells and cached component terms."""

    def __init__(self, sl: slice, panel: "Panel"):
        valid = panel.valid[sl]
        self.m, self.K = valid.shape
        self.valid_idx = np.flatnonzero(valid)
        after = valid.copy()
        after[:, 0] = False
        self.after_idx = np.flatnonzero(after)
        after_in_valid = after[valid]
        self.y_valid = panel.y[sl][valid]
        self.death = np.flatnonzero(self.y_valid)
        self.tested = np.flatnonzero(panel.dstar[sl][valid])
        counts = valid.sum(axis=1)
        self.starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self.design = {}
        for comp, D in panel.design.items():
            Dv = D[sl][valid]
            if comp == "s":
                Dv = D[sl][:, 0, :]
            elif comp == "x":
                Dv = Dv[after_in_valid]
            self.design[comp] = np.ascontiguousarray(Dv)
        self.path_penalty = np.where(panel.path_mask[sl], 0.0, -np.inf)
        self.cache = {}

    def _cached(self, name, key, compute):
        hit = self.cache.get(name)
        if hit is not None and hit[0] == key:
            return hit[1]
        value = compute()
        self.cache[name] = (key, value)
        return value

    def _scatter(self, idx, values):
        out = np.zeros(self.m * self.K)
        out[idx] = values
        return out.reshape(self.m, self.K)

    def outcome_terms(self, alpha, coef, beta, link):
        eta0 = alpha + self.design["y"] @ coef
        out = []
        for eta in (eta0, eta0 + beta):
            lp, lq = link.log_probs(eta)
            lq[self.death] = lp[self.death]
            out.append(self._scatter(self.valid_idx, lq))
        return tuple(out)

    def initial_terms(self, alpha, coef, link):
        return link.log_probs(alpha + self.design["s"] @ coef)

    def sero_terms(self, alpha, coef, link):
        lp, lq = link.log_probs(alpha + self.design["x"] @ coef)
        return self._scatter(self.after_idx, lq), self._scatter(self.after_idx, lp)

    def testing_term(self, alpha, coef, link):
        lp, lq = link.log_probs(alpha + self.design["d"] @ coef)
        lq[self.tested] = lp[self.tested]
        return np.add.reduceat(lq, self.starts)

    def outcome_paths(self, ly0, ly1):
        """Per-path outcome log-probability; column c - 1 holds path c."""
        m, K = self.m, self.K
        out = np.zeros((m, K + 1))
        np.cumsum(ly0, axis=1, out=out[:, 1:])
        out[:, :K] += np.cumsum(ly1[:, ::-1], axis=1)[:, ::-1]
        return out

    def status_paths(self, lstay, ljump):
        """Per-path status log-probability excluding the entry term."""
        m, K = self.m, self.K
        out = np.zeros((m, K + 1))
        np.cumsum(lstay, axis=1, out=out[:, 1:])
        out[:, :K] += ljump
        return out

    def marginal(self, outcome, status, ls1, ls0):
        paths = outcome + status
        paths += ls0[:, None]
        paths[:, 0] = ls1 + outcome[:, 0]
        paths += self.path_penalty
        return logsumexp(paths, axis=1)


class Panel:
    """Person-by-interval padded arrays prepared once for repeated evaluation.

    Records are stored sorted by id, so any permutation of the same records
    yields an identical panel and bit-identical log-likelihoods. Persons are
    evaluated in fixed blocks; each block caches the terms of every model
    component keyed on the exact coefficient values, so perturbing one
    component (as finite differences do) only recomputes that component.
    """

    def __init__(self, records: Sequence[PersonRecord], spec: ModelSpec):
        records = sorted(records, key=lambda r: r.id)
        ids = [r.id for r in records]
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise DataInconsistencyError("duplicate person id", dup)
        self.spec = spec
        self.ids = ids
        self.n = n = len(records)
        K = max((r.k for r in records), default=1)
        self.K = K
        p = len(spec.covariates)
        self.k = np.zeros(n, dtype=np.int64)
        self.lo = np.zeros(n, dtype=np.int64)
        self.hi = np.zeros(n, dtype=np.int64)
        j = np.ones((n, K))
        Z = np.zeros((n, K, p))
        self.valid = np.zeros((n, K), dtype=bool)
        self.y = np.zeros((n, K), dtype=bool)
        self.dstar = np.zeros((n, K), dtype=bool)
        for i, r in enumerate(records):
            _check_window(r, spec)
            lo, hi = r.known.path_bounds()
            if lo > hi:
                raise DataInconsistencyError("no monotone path agrees with the observed tests", r.id)
            k = r.k
            self.k[i], self.lo[i], self.hi[i] = k, lo, hi
            j[i, :k] = r.j
            Z[i, :k] = spec.covariate_matrix(np.full(k, r.sex), r.age)
            self.valid[i, :k] = True
            self.y[i, :k] = r.y.astype(bool)
            self.dstar[i, :k] = r.history.delta_star.astype(bool)
        self.j = j
        self.Z = Z
        self.design = {
            comp: np.concatenate([Z, basis_matrix(spec.bases[comp], j, spec.n_intervals)], axis=-1)
            for comp in spec.layout
        }
        cols = np.arange(K + 1)[None, :] + 1
        self.path_mask = (cols >= self.lo[:, None]) & (cols <= self.hi[:, None])
        self.blocks = [_Block(slice(a, min(a + BLOCK_SIZE, n)), self) for a in range(0, n, BLOCK_SIZE)]

    def __len__(self):
        return self.n

    def _coef(self, comp, theta):
        b = self.spec.layout[comp]
        return float(theta[b["alpha"]][0]), np.concatenate([theta[b["gamma"]], theta[b["tau"]]])

    def person_logliks(self, theta, threads: int = 1) -> np.ndarray:
        """Per-person observed-data log-likelihood, in sorted-id order."""
        theta = np.array(_as_theta(theta, self.spec), dtype=float)
        if self.n == 0:
            return np.zeros(0)
        if threads > 1 and len(self.blocks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda b: self._evaluate(b, theta), self.blocks))
        else:
            parts = [self._evaluate(b, theta) for b in self.blocks]
        return np.concatenate(parts)

    def _evaluate(self, block: _Block, theta) -> np.ndarray:
        links = self.spec.links
        beta = float(theta[self.spec.layout["y"]["beta"]][0])
        coefs = {c: self._coef(c, theta) for c in self.spec.layout}
        keys = {c: (a, v.tobytes()) for c, (a, v) in coefs.items()}
        keys["y"] += (beta,)
        ly = block._cached("y", keys["y"], lambda: block.outcome_terms(*coefs["y"], beta, links["y"]))
        ls = block._cached("s", keys["s"], lambda: block.initial_terms(*coefs["s"], links["s"]))
        lx = block._cached("x", keys["x"], lambda: block.sero_terms(*coefs["x"], links["x"]))
        ld = block._cached("d", keys["d"], lambda: block.testing_term(*coefs["d"], links["d"]))
        outcome = block._cached("outcome_paths", keys["y"], lambda: block.outcome_paths(*ly))
        status = block._cached("status_paths", keys["x"], lambda: block.status_paths(*lx))
        marginal = block._cached(
            "marginal", (keys["y"], keys["s"], keys["x"]), lambda: block.marginal(outcome, status, *ls)
        )
        return ld + marginal


def _as_panel(data, spec: ModelSpec) -> Panel:
    if isinstance(data, Panel):
        if data.spec != spec:
            raise SpecError("panel was prepared under a different ModelSpec")
        return data
    return Panel(list(data), spec)


def loglik_individual(record: PersonRecord, omega, spec: ModelSpec) -> float:
    """log f(u, y, delta | z) for one person."""
    return float(Panel([record], spec).person_logliks(omega)[0])


def loglik_total(data, omega, spec: ModelSpec, threads: int = 1) -> float:
    """Sum of per-person observed-data log-likelihoods (records or a Panel)."""
    panel = _as_panel(data, spec)
    return float(np.sum(panel.person_logliks(omega, threads=threads)))


def loglik_full_data(data: Sequence[PersonRecord], omega, spec: ModelSpec, include_testing: bool = False) -> float:
    """Complete-data log-likelihood using each record's true path."""
    total = 0.0
    for r in data:
        if r.x_true is None:
            raise InvalidInputError(f"id={r.id}: true path unavailable")
        total += loglik_path(r, r.x_true, omega, spec)
        if include_testing:
            total += loglik_testing(r, omega, spec)
    return total
