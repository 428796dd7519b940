import csv
import io

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from icsurv.basis import BasisKind
from icsurv.errors import ConfigError, DataInconsistencyError
from icsurv.io import (
    HEADER,
    EmptyDataError,
    dataset_summary,
    metrics_to_csv,
    parse_config,
    parse_records,
    records_to_csv,
    table1_csv,
)
from icsurv.model import LinkFunction, ModelSpec
from icsurv.simulate import DgpConfig, reference_truth, simulate_dataset
from icsurv.study import TABLE1_PARAMETERS, summarize

VALID = "\n".join([
    ",".join(HEADER),
    "p1,3,1,20.5,1,0,0",
    "p1,4,1,21.5,0,,0",
    "p1,5,1,22.5,1,1,1",
    "p2,1,0,40.0,0,,0",
    "p2,2,0,41.0,1,1,0",
]) + "\n"


# ---------------------------------------------------------------- CSV


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 60))
def test_roundtrip_byte_identical(seed, n):
    data, oracle = simulate_dataset(DgpConfig(n=n, seed=seed))
    for records, with_truth in ((data, False), (oracle, True)):
        text = records_to_csv(records, oracle=with_truth)
        again = records_to_csv(parse_records(text), oracle=with_truth)
        assert again == text


def test_parse_valid_file():
    recs = parse_records(VALID)
    assert [r.id for r in recs] == ["p1", "p2"]
    assert recs[0].entry == 3 and recs[0].k == 3 and recs[0].y.tolist() == [0, 0, 1]
    assert recs[0].history.results.tolist() == [0, -1, 1]
    assert recs[1].history.label().m == 4


def test_empty_file_is_usage_error():
    with pytest.raises(EmptyDataError):
        parse_records("")
    with pytest.raises(EmptyDataError):
        parse_records(",".join(HEADER) + "\n")


def test_wrong_header():
    with pytest.raises(DataInconsistencyError, match="line 1"):
        parse_records("id,j,sex\n1,1,0\n")


MUTATIONS = [
    # (line index, field index, replacement, reported line, message fragment)
    (2, 1, "7", 3, "does not follow"),
    (2, 2, "0", 3, "sex changes"),
    (1, 2, "2", 2, "sex must be one of"),
    (1, 3, "abc", 2, "age must be a number"),
    (1, 3, "nan", 2, "age must be finite"),
    (1, 4, "0", 2, "test_result given"),
    (2, 4, "1", 3, "test_result missing"),
    (1, 5, "2", 2, "test_result must be one of"),
    (1, 6, "1", 3, "row after the outcome"),  # the offending row is the next one
    (1, 1, "x", 2, "j must be an integer"),
    (1, 1, "0", 2, "outside the grid"),
]


@pytest.mark.parametrize("line_idx,field,value,line,fragment", MUTATIONS)
def test_mutations_name_id_and_line(line_idx, field, value, line, fragment):
    rows = [r.split(",") for r in VALID.strip().split("\n")]
    rows[line_idx][field] = value
    text = "\n".join(",".join(r) for r in rows) + "\n"
    with pytest.raises(DataInconsistencyError) as err:
        parse_records(text)
    msg = str(err.value)
    assert fragment in msg
    assert f"id=p1, line {line}:" in msg


def test_negative_after_positive_rejected():
    text = VALID.replace("p2,2,0,41.0,1,1,0", "p2,2,0,41.0,1,1,0\np2,3,0,42.0,1,0,0")
    with pytest.raises(DataInconsistencyError, match=r"id=p2, line 7: negative test after a positive"):
        parse_records(text)


def test_non_contiguous_id_rejected():
    text = VALID + "p1,6,1,23.5,0,,0\n"
    with pytest.raises(DataInconsistencyError, match="id=p1, line 7"):
        parse_records(text)


def test_field_count_checked():
    with pytest.raises(DataInconsistencyError, match="line 2"):
        parse_records(",".join(HEADER) + "\np1,1,0\n")


def test_grid_limit_applied_when_given():
    with pytest.raises(DataInconsistencyError, match="outside the grid"):
        parse_records(VALID, n_intervals=4)


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.data())
def test_random_mutation_is_rejected_with_location(data):
    base = records_to_csv(simulate_dataset(DgpConfig(n=15, seed=3))[0])
    rows = list(csv.reader(io.StringIO(base)))
    i = data.draw(st.integers(1, len(rows) - 1))
    kind = data.draw(st.sampled_from(["sex", "tested", "result", "died_early", "j", "age"]))
    row = rows[i]
    same_id = [k for k in range(1, len(rows)) if rows[k][0] == row[0]]
    if kind == "sex":
        row[2] = "7"
    elif kind == "tested":
        row[4], row[5] = ("0", "1") if row[4] == "0" else ("1", "")
    elif kind == "result":
        row[5] = "5" if row[4] == "1" else "0"
    elif kind == "died_early":
        if i == same_id[-1]:
            return
        row[6] = "1"
    elif kind == "j":
        row[1] = str(int(row[1]) + 2)
        if i == same_id[0]:
            return  # a shifted entry interval is still a valid record
    elif kind == "age":
        row[3] = "inf"
    text = "".join(",".join(r) + "\n" for r in rows)
    with pytest.raises(DataInconsistencyError) as err:
        parse_records(text, n_intervals=20)
    assert f"id={row[0]}" in str(err.value)
    assert "line " in str(err.value)


def test_summary_counts():
    recs = parse_records(VALID)
    s = dataset_summary(recs)
    assert s == {"persons": 2, "person_years": 5, "tests": 3, "deaths": 1, "group_counts": {"1": 0, "2": 0, "3": 1, "4": 1}}


# ------------------------------------------------------------- config


def test_empty_config_gives_reference_design():
    cfg = parse_config("")
    assert cfg.spec() == ModelSpec()
    dgp = cfg.dgp()
    assert dgp.n == 1000
    assert np.array_equal(dgp.truth.flatten(dgp.spec), reference_truth().flatten(ModelSpec()))


def test_config_overrides():
    cfg = parse_config("""
[model]
link_d = logit
basis_x = ns
basis_x_df = 3

[dgp]
n = 50
tau_x = 0.1, -0.2, 0.05

[fit]
grad_tol = 1e-7
""")
    spec = cfg.spec()
    assert spec.links["d"] is LinkFunction.LOGIT and spec.links["y"] is LinkFunction.CLOGLOG
    assert spec.bases["x"].kind is BasisKind.NATURAL_SPLINE and spec.bases["x"].size == 3
    assert cfg.dgp().n == 50
    assert cfg.fit_options().grad_tol == 1e-7


def test_config_explicit_knots():
    cfg = parse_config("[model]\nbasis_y = ns\nbasis_y_knots = 1, 10, 20\n[dgp]\ntau_y = 0.1, 0.1\n")
    assert cfg.spec().bases["y"].knots == (1.0, 10.0, 20.0)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match="line 4: unknown key 'colour'"):
        parse_config("[dgp]\nn = 5\n\ncolour = red\n")


def test_unknown_section_reports_line():
    with pytest.raises(ConfigError, match=r"line 2: unknown section \[plots\]"):
        parse_config("\n[plots]\nwidth = 3\n")


def test_bad_value_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("[fit]\nlevel = 0.9\nmax_iterations = lots\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("[model]\nlink = probit\n")


def test_duplicate_key_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("[dgp]\nn = 5\nn = 6\n")


def test_truth_layout_checked():
    cfg = parse_config("[model]\ncovariates = sex\n")
    with pytest.raises(ConfigError, match="gamma_y needs 1 values"):
        cfg.dgp()


def test_semantic_errors_are_config_errors():
    with pytest.raises(ConfigError):
        parse_config("[dgp]\np_sex = 3\n").dgp()
    with pytest.raises(ConfigError):
        parse_config("[fit]\nlevel = 2\n").fit_options()
    with pytest.raises(ConfigError, match="report lists unknown"):
        parse_config("[study]\nreport = beta, nope\n").study()


# ------------------------------------------------------------ metrics


def test_metrics_columns_follow_table_rows():
    m = summarize(np.ones((3, 7)) * 0.5, np.ones((3, 7)) * 0.1, np.full(7, 0.4), names=TABLE1_PARAMETERS)
    header = next(csv.reader(io.StringIO(metrics_to_csv(m))))
    assert header == [
        "parameter", "True parameter value", "Average estimate", "Bias (absolute)",
        "Average estimated standard error", "Empirical standard error", "95% CI coverage",
        "Coverage Monte Carlo SE", "Bias Monte Carlo SE", "Replicates used", "Replicates not converged",
    ]
    table = list(csv.reader(io.StringIO(table1_csv(m))))
    assert table[0] == ["", *TABLE1_PARAMETERS]
    assert [r[0] for r in table[1:]] == [
        "True parameter value", "Average estimate", "Bias (absolute)",
        "Average estimated standard error", "Empirical standard error", "95% CI coverage",
    ]
    assert table[-1][1] == "100%"
