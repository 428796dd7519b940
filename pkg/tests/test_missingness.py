import itertools

import numpy as np
import pytest

from icsurv.errors import InvalidInputError
from icsurv.missingness import (
    NO_RESULT,
    GroupLabel,
    KnownStatus,
    TestHistory,
    classify,
    derive_observed,
    g_delta,
    known_mask,
)
from icsurv.simulate import DgpConfig, simulate_dataset

from oracle import mask_ref


def monotone_paths(k):
    return [tuple([0] * (k - c) + [1] * c) for c in range(k + 1)]


def all_pairs(k):
    for x in monotone_paths(k):
        for d in itertools.product((0, 1), repeat=k):
            yield x, d


def history(k, negatives=(), positives=()):
    d = np.zeros(k, dtype=int)
    r = np.full(k, NO_RESULT)
    for j in negatives:
        d[j - 1], r[j - 1] = 1, 0
    for j in positives:
        d[j - 1], r[j - 1] = 1, 1
    return TestHistory(d, r)


def test_classify_untested():
    for x in monotone_paths(3):
        assert classify(x, (0, 0, 0)) == GroupLabel(1)


def test_classify_negative_then_positive():
    assert classify((0, 0, 1), (1, 0, 1)) == GroupLabel(3, t_minus=1, t_plus=3)


def test_classify_first_test_positive():
    assert classify((0, 1, 1), (0, 1, 0)) == GroupLabel(4, t_plus=2)


def test_classify_only_negatives():
    assert classify((0, 0, 0, 1), (1, 1, 0, 0)) == GroupLabel(2, t_minus=2)


def test_classify_repeat_positive_uses_first():
    assert classify((0, 1, 1, 1), (1, 1, 0, 1)) == GroupLabel(3, t_minus=1, t_plus=2)
    assert classify((1, 1, 1), (1, 1, 1)) == GroupLabel(4, t_plus=1)


def test_classify_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        classify((1, 0, 1), (1, 1, 1))
    with pytest.raises(InvalidInputError):
        classify((0, 1), (1, 1, 1))
    with pytest.raises(InvalidInputError):
        classify((0, 2), (1, 1))


@pytest.mark.parametrize("k", range(1, 9))
def test_classify_total_and_partitions(k):
    counts = {1: 0, 2: 0, 3: 0, 4: 0}
    for x, d in all_pairs(k):
        label = classify(x, d)
        counts[label.m] += 1
        tested = [i + 1 for i in range(k) if d[i]]
        # the four groups are defined by which results occur
        has_neg = any(not x[i - 1] for i in tested)
        has_pos = any(x[i - 1] for i in tested)
        expected = 1 if not tested else 2 if not has_pos else 3 if has_neg else 4
        assert label.m == expected
    assert sum(counts.values()) == (k + 1) * 2**k
    assert counts[1] == k + 1


def test_known_mask_examples():
    assert known_mask(GroupLabel(2, t_minus=2), 4).tolist() == [1, 1, 0, 0]
    assert known_mask(GroupLabel(3, t_minus=1, t_plus=3), 4).tolist() == [1, 0, 1, 1]
    assert known_mask(GroupLabel(1), 5).tolist() == [0] * 5
    assert known_mask(GroupLabel(4, t_plus=2), 3).tolist() == [0, 1, 1]


def test_known_mask_out_of_range():
    with pytest.raises(InvalidInputError):
        known_mask(GroupLabel(2, t_minus=5), 4)
    with pytest.raises(InvalidInputError):
        known_mask(GroupLabel(1), 0)


def test_group_label_invariants():
    with pytest.raises(InvalidInputError):
        GroupLabel(3, t_minus=3, t_plus=3)
    with pytest.raises(InvalidInputError):
        GroupLabel(2)
    with pytest.raises(InvalidInputError):
        GroupLabel(1, t_plus=1)
    with pytest.raises(InvalidInputError):
        GroupLabel(5)


def test_derive_observed_examples():
    ks = derive_observed(history(3, negatives=[2]))
    assert ks.delta_circ.tolist() == [1, 1, 0] and ks.u.tolist() == [0, 0, 0]
    ks = derive_observed(history(3, positives=[2]))
    assert ks.delta_circ.tolist() == [0, 1, 1] and ks.u.tolist() == [0, 1, 1]
    ks = derive_observed(history(4, negatives=[1], positives=[3]))
    assert ks.delta_circ.tolist() == [1, 0, 1, 1] and ks.u.tolist() == [0, 0, 1, 1]


def test_derive_observed_matches_every_consistent_path():
    h = history(4, negatives=[1], positives=[3])
    obs = derive_observed(h)
    consistent = [x for x in monotone_paths(4) if x[0] == 0 and x[2] == 1]
    assert len(consistent) == 2
    for x in consistent:
        assert g_delta(x, h.delta_star).tolist() == obs.delta_circ.tolist()
        assert (np.array(x) * obs.delta_circ).tolist() == obs.u.tolist()


@pytest.mark.parametrize("k", range(1, 9))
def test_derive_observed_equals_g_delta_exhaustive(k):
    mismatches = 0
    for x, d in all_pairs(k):
        obs = derive_observed(TestHistory.from_path(x, d))
        mask = g_delta(x, d)
        if obs.delta_circ.tolist() != mask.tolist() or obs.u.tolist() != (np.array(x) * mask).tolist():
            mismatches += 1
        # independent case-definition mask
        if mask.tolist() != mask_ref(x, d):
            mismatches += 1
    assert mismatches == 0


@pytest.mark.parametrize("k", range(1, 9))
def test_known_entries_agree_with_path(k):
    for x, d in all_pairs(k):
        mask = g_delta(x, d)
        u = np.array(x) * mask
        assert np.all(u[mask == 1] == np.array(x)[mask == 1])


def test_mnar_witness():
    # identical test times, different latent paths, different known masks
    found = False
    for k in range(1, 7):
        for d in itertools.product((0, 1), repeat=k):
            masks = {tuple(g_delta(x, d)) for x in monotone_paths(k)}
            if len(masks) > 1:
                found = True
                break
        if found:
            break
    assert found
    assert g_delta((0, 0), (1, 0)).tolist() != g_delta((1, 1), (1, 0)).tolist()


def test_derive_observed_on_simulated_people():
    _, oracle = simulate_dataset(DgpConfig(n=10_000, seed=11))
    bad = 0
    for r in oracle:
        mask = g_delta(r.x_true, r.history.delta_star)
        if r.known.delta_circ.tolist() != mask.tolist() or r.known.u.tolist() != (r.x_true * mask).tolist():
            bad += 1
    assert bad == 0


def test_history_validation():
    with pytest.raises(InvalidInputError):
        TestHistory(np.array([1, 1]), np.array([1, 0]))  # negative after positive
    with pytest.raises(InvalidInputError):
        TestHistory(np.array([0, 1]), np.array([0, 1]))  # result at an untested interval
    with pytest.raises(InvalidInputError):
        TestHistory(np.array([1, 1]), np.array([0, NO_RESULT]))
    assert len(TestHistory.untested(4)) == 4


def test_known_status_validation():
    with pytest.raises(InvalidInputError):
        KnownStatus(np.array([0, 1]), np.array([1, 1]))
    with pytest.raises(InvalidInputError):
        KnownStatus(np.array([1, 1]), np.array([1, 0]))
    assert KnownStatus(np.array([1, 0, 1]), np.array([0, 0, 1])).path_bounds() == (2, 3)
