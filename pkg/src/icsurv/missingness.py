"""Test-history bookkeeping: which intervals have a known secondary-event
status, given when tests were taken and what they showed.

All vectors are indexed over one person's own window; ``t_minus`` and
``t_plus`` are 1-based positions within that window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError

NO_RESULT = -1


def _binary(v, name) -> np.ndarray:
    a = np.asarray(v)
    if a.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-d vector")
    if a.size and not np.all((a == 0) | (a == 1)):
        raise InvalidInputError(f"{name} must be binary")
    return a.astype(np.int8)


def is_monotone(x) -> bool:
    x = np.asarray(x)
    return bool(np.all(np.diff(x) >= 0))


@dataclass(frozen=True)
class GroupLabel:
    """Testing group m and the last-negative / first-positive test positions.

    1: never tested; 2: only negative tests; 3: negative test(s) then a
    positive; 4: every test positive.
    """

    m: int
    t_minus: Optional[int] = None
    t_plus: Optional[int] = None

    def __post_init__(self):
        if self.m not in (1, 2, 3, 4):
            raise InvalidInputError(f"group must be 1..4, got {self.m}")
        if (self.t_minus is not None) != (self.m in (2, 3)):
            raise InvalidInputError(f"t_minus must be defined exactly for groups 2 and 3 (m={self.m})")
        if (self.t_plus is not None) != (self.m in (3, 4)):
            raise InvalidInputError(f"t_plus must be defined exactly for groups 3 and 4 (m={self.m})")
        if self.m == 3 and not self.t_minus < self.t_plus:
            raise InvalidInputError("t_minus must precede t_plus")


def classify(x, delta_star) -> GroupLabel:
    """Group a (latent path, test indicator) pair.

    When several tests come back positive, ``t_plus`` is the first of them
    and the person is in group 3 or 4 depending on whether any negative test
    precedes it.
    """
    x = _binary(x, "x")
    d = _binary(delta_star, "delta_star")
    if x.size != d.size:
        raise InvalidInputError(f"x and delta_star lengths differ ({x.size} vs {d.size})")
    if not is_monotone(x):
        raise InvalidInputError("x must be monotone (0,...,0,1,...,1)")
    pos = d * x
    neg = d * (1 - x)
    idx = np.arange(1, x.size + 1)
    if d.sum() == 0:
        return GroupLabel(1)
    t_minus = int(np.max(idx * neg)) if neg.any() else None
    if not pos.any():
        return GroupLabel(2, t_minus=t_minus)
    t_plus = int(np.argmax(pos)) + 1
    if t_minus is not None:
        return GroupLabel(3, t_minus=t_minus, t_plus=t_plus)
    return GroupLabel(4, t_plus=t_plus)


def known_mask(label: GroupLabel, series_length: int) -> np.ndarray:
    """Known-status indicator over the window implied by the group label."""
    k = int(series_length)
    if k < 1:
        raise InvalidInputError("series_length must be >= 1")
    for t in (label.t_minus, label.t_plus):
        if t is not None and not 1 <= t <= k:
            raise InvalidInputError(f"test index {t} outside 1..{k}")
    mask = np.zeros(k, dtype=np.int8)
    if label.m in (2, 3):
        mask[: label.t_minus] = 1
    if label.m in (3, 4):
        mask[label.t_plus - 1 :] = 1
    return mask


def g_delta(x, delta_star) -> np.ndarray:
    """Known-status mask as a function of the true path and test times."""
    return known_mask(classify(x, delta_star), len(x))


@dataclass(frozen=True)
class TestHistory:
    """Tests taken (``delta_star``) and their results (``NO_RESULT`` where untested)."""

    __test__ = False

    delta_star: np.ndarray
    results: np.ndarray

    def __post_init__(self):
        d = _binary(self.delta_star, "delta_star")
        r = np.asarray(self.results).astype(np.int8)
        if r.shape != d.shape:
            raise InvalidInputError("results and delta_star lengths differ")
        tested = d == 1
        if np.any(r[~tested] != NO_RESULT):
            raise InvalidInputError("results given at an untested interval")
        if np.any((r[tested] != 0) & (r[tested] != 1)):
            raise InvalidInputError("every tested interval needs a 0/1 result")
        seen = r[tested]
        if seen.size and not is_monotone(seen):
            raise InvalidInputError("negative test after a positive test")
        object.__setattr__(self, "delta_star", d)
        object.__setattr__(self, "results", r)

    @classmethod
    def from_path(cls, x, delta_star) -> "TestHistory":
        """Results a perfect test would give on the true path ``x``."""
        x = _binary(x, "x")
        d = _binary(delta_star, "delta_star")
        return cls(d, np.where(d == 1, x, NO_RESULT))

    @classmethod
    def untested(cls, k: int) -> "TestHistory":
        return cls(np.zeros(k, dtype=np.int8), np.full(k, NO_RESULT, dtype=np.int8))

    def __len__(self):
        return self.delta_star.size

    def label(self) -> GroupLabel:
        r = self.results
        idx = np.arange(1, r.size + 1)
        neg = idx[r == 0]
        pos = idx[r == 1]
        if neg.size == 0 and pos.size == 0:
            return GroupLabel(1)
        t_minus = int(neg.max()) if neg.size else None
        if pos.size == 0:
            return GroupLabel(2, t_minus=t_minus)
        t_plus = int(pos.min())
        if t_minus is None:
            return GroupLabel(4, t_plus=t_plus)
        return GroupLabel(3, t_minus=t_minus, t_plus=t_plus)


@dataclass(frozen=True)
class KnownStatus:
    """Known-status mask and observed status (zero wherever unknown)."""

    delta_circ: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        dc = _binary(self.delta_circ, "delta_circ")
        u = _binary(self.u, "u")
        if dc.size != u.size:
            raise InvalidInputError("delta_circ and u lengths differ")
        if np.any(u[dc == 0] != 0):
            raise InvalidInputError("u must be zero wherever status is unknown")
        if not is_monotone(u[dc == 1]):
            raise InvalidInputError("known statuses must be monotone")
        object.__setattr__(self, "delta_circ", dc)
        object.__setattr__(self, "u", u)

    def __len__(self):
        return self.delta_circ.size

    def path_bounds(self) -> tuple[int, int]:
        """Range [lo, hi] of first-positive positions agreeing with every known status.

        Position k + 1 stands for "never positive within the window".
        """
        k = self.delta_circ.size
        idx = np.arange(1, k + 1)
        known_neg = idx[(self.delta_circ == 1) & (self.u == 0)]
        known_pos = idx[(self.delta_circ == 1) & (self.u == 1)]
        lo = int(known_neg.max()) + 1 if known_neg.size else 1
        hi = int(known_pos.min()) if known_pos.size else k + 1
        return lo, hi


def derive_observed(history: TestHistory) -> KnownStatus:
    """Known-status mask and observed status implied by the test results."""
    label = history.label()
    mask = known_mask(label, len(history))
    u = np.zeros_like(mask)
    if label.t_plus is not None:
        u[label.t_plus - 1 :] = 1
    return KnownStatus(mask, u * mask)
