import math
from dataclasses import asdict

import numpy as np
import pytest

from icsurv.errors import InvalidInputError, StudyFailureError
from icsurv.inference import FitOptions
from icsurv.io import read_replicates, replicates_to_csv
from icsurv.simulate import DgpConfig
from icsurv.study import (
    TABLE1_PARAMETERS,
    ReplicateResult,
    StudyConfig,
    covered,
    metrics_from_replicates,
    run_replicate,
    run_study,
    summarize,
)


def test_two_point_summary():
    m = summarize([[0.3], [0.5]], [[0.1], [0.1]], [0.4])
    p = m.parameters[0]
    assert p.bias == pytest.approx(0.0, abs=1e-15)
    assert p.empirical_se == pytest.approx(math.sqrt(0.02), rel=1e-12)
    assert p.empirical_se == pytest.approx(0.1414, abs=1e-4)


def test_bias_is_mean_minus_truth_exactly():
    rng = np.random.default_rng(0)
    est = rng.normal(size=(30, 3))
    m = summarize(est, np.ones((30, 3)), [0.1, -0.2, 0.3])
    for i, p in enumerate(m.parameters):
        assert p.bias == p.mean_estimate - p.truth
        assert p.mean_estimate == pytest.approx(est[:, i].mean(), rel=1e-14)


def test_full_coverage():
    m = summarize([[0.39], [0.41], [0.4]], [[0.1]] * 3, [0.4])
    assert m.parameters[0].coverage == 1.0


def test_coverage_monte_carlo_se():
    est = np.zeros((1000, 1))
    se = np.full((1000, 1), 1.0)
    est[:50] = 10.0  # 50 intervals miss the truth
    m = summarize(est, se, [0.0])
    assert m.parameters[0].coverage == 0.95
    assert m.parameters[0].coverage_mc_se == pytest.approx(0.0069, abs=5e-5)


def test_identical_replicates():
    m = summarize([[0.45]] * 5, [[0.01]] * 5, [0.4])
    p = m.parameters[0]
    assert p.empirical_se == 0.0
    assert p.coverage in (0.0, 1.0)


def test_single_replicate_has_no_empirical_se():
    m = summarize([[0.45]], [[0.1]], [0.4])
    assert math.isnan(m.parameters[0].empirical_se)


def test_summary_shape_errors():
    with pytest.raises(InvalidInputError):
        summarize([[0.1, 0.2]], [[0.1]], [0.0, 0.0])
    with pytest.raises(InvalidInputError):
        summarize([[0.1]], [[0.1]], [0.0, 0.0])
    with pytest.raises(InvalidInputError):
        summarize([[0.1]], [[0.1]], [0.0], level=1.2)


def test_covered_boundaries_inclusive():
    z = 1.959963984540054
    assert covered(np.array([0.0]), np.array([1.0]), z, 0.95)[0]


def fake(rep, converged=True, pd=True, est=0.5):
    names = ("a", "b")
    return ReplicateResult(rep, converged, pd, 10, -1.0, names, np.array([0.4, 1.0]), np.array([est, 1.0]), np.array([0.1, 0.2]))


def test_metrics_exclude_unusable_replicates():
    results = [fake(1), fake(2, converged=False, est=99.0), fake(3, pd=False, est=99.0), fake(4, est=0.3)]
    m = metrics_from_replicates(results, ("a",))
    assert m.n_used == 2 and m.n_failed == 2
    assert m.failed_replicates == (2, 3)
    assert m["a"].mean_estimate == pytest.approx(0.4)


def test_all_failed_raises():
    with pytest.raises(StudyFailureError):
        metrics_from_replicates([fake(1, converged=False), fake(2, pd=False)], ("a",))


def test_duplicate_replicates_rejected():
    with pytest.raises(InvalidInputError):
        metrics_from_replicates([fake(1), fake(1)], ("a",))


def small_config(reps=3, first=1):
    return StudyConfig(dgp=DgpConfig(n=250), fit=FitOptions(), n_replicates=reps, seed=5, first_replicate=first)


def test_study_config_validation():
    with pytest.raises(InvalidInputError):
        StudyConfig(n_replicates=0)
    with pytest.raises(InvalidInputError):
        StudyConfig(report=("beta", "delta"))
    assert StudyConfig().report == TABLE1_PARAMETERS


@pytest.fixture(scope="module")
def small_study():
    return run_study(small_config())


def test_study_runs(small_study):
    metrics, results = small_study
    assert [r.replicate for r in results] == [1, 2, 3]
    assert [p.name for p in metrics.parameters] == list(TABLE1_PARAMETERS)
    for p in metrics.parameters:
        assert 0 <= p.coverage <= 1 and p.empirical_se >= 0


def test_metrics_recomputed_from_audit_file(small_study, tmp_path):
    metrics, results = small_study
    path = tmp_path / "replicates.csv"
    path.write_text(replicates_to_csv(results))
    again = metrics_from_replicates(read_replicates(path), TABLE1_PARAMETERS)
    assert asdict(again) == asdict(metrics)


def test_study_thread_invariant(small_study):
    metrics, results = small_study
    other, other_results = run_study(small_config(), threads=2)
    assert asdict(other) == asdict(metrics)
    assert replicates_to_csv(other_results) == replicates_to_csv(results)


def test_shards_merge_to_single_run(small_study):
    _, results = small_study
    a = run_study(small_config(reps=1, first=1))[1]
    b = run_study(small_config(reps=2, first=2))[1]
    assert replicates_to_csv(a + b) == replicates_to_csv(results)


def test_replicate_is_deterministic():
    cfg = small_config()
    r1, r2 = run_replicate(cfg, 7), run_replicate(cfg, 7)
    assert np.array_equal(r1.estimate, r2.estimate)
