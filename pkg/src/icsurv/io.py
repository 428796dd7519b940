"""Person-period CSV files and run configuration files."""

from __future__ import annotations

import configparser
import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .basis import BasisSpec
from .errors import ConfigError, DataInconsistencyError, InvalidInputError
from .inference import FitOptions, OPTIMIZERS
from .likelihood import PersonRecord
from .missingness import NO_RESULT, TestHistory
from .model import COMPONENTS, KNOWN_COVARIATES, LinkFunction, ModelSpec, ParameterVector
from .simulate import DgpConfig, reference_truth
from .study import TABLE1_PARAMETERS, StudyConfig

HEADER = ("id", "j", "sex", "age", "tested", "test_result", "died")
ORACLE_HEADER = HEADER + ("x_true",)


class EmptyDataError(InvalidInputError):
    pass


def fmt_float(v: float) -> str:
    """Shortest round-tripping representation."""
    return repr(float(v))


# --------------------------------------------------------------------------- CSV


def write_records(records: Iterable[PersonRecord], path, oracle: bool = False) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(records_to_csv(records, oracle))


def records_to_csv(records: Iterable[PersonRecord], oracle: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ORACLE_HEADER if oracle else HEADER)
    for r in records:
        if oracle and r.x_true is None:
            raise InvalidInputError(f"id={r.id}: no true path to write")
        sex = int(r.sex)
        for pos, j in enumerate(r.j):
            tested = int(r.history.delta_star[pos])
            result = "" if not tested else str(int(r.history.results[pos]))
            row = [r.id, int(j), sex, fmt_float(r.age[pos]), tested, result, int(r.y[pos])]
            if oracle:
                row.append(int(r.x_true[pos]))
            w.writerow(row)
    return buf.getvalue()


def _int_field(value, name, allowed=None, rid=None, line=None):
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise DataInconsistencyError(f"{name} must be an integer, got {value!r}", rid, line) from None
    if str(v) != value.strip():
        raise DataInconsistencyError(f"{name} must be an integer, got {value!r}", rid, line)
    if allowed is not None and v not in allowed:
        raise DataInconsistencyError(f"{name} must be one of {sorted(allowed)}, got {v}", rid, line)
    return v


def read_records(path, n_intervals: Optional[int] = None) -> list[PersonRecord]:
    """Parse and validate a person-period CSV (oracle column optional)."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_records(text, n_intervals)


def parse_records(text: str, n_intervals: Optional[int] = None) -> list[PersonRecord]:
    if not text.strip():
        raise EmptyDataError("data file is empty")
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header not in (HEADER, ORACLE_HEADER):
        raise DataInconsistencyError(f"header must be {','.join(HEADER)}[,x_true]; got {','.join(header)}", line=1)
    oracle = header == ORACLE_HEADER
    groups: dict[str, dict] = {}
    order = []
    last_id = None
    for line_no, row in enumerate(reader, start=2):
        if not row:
            raise DataInconsistencyError("blank line", line=line_no)
        if len(row) != len(header):
            raise DataInconsistencyError(f"expected {len(header)} fields, got {len(row)}", row[0] if row else None, line_no)
        rid = row[0]
        if not rid:
            raise DataInconsistencyError("empty id", line=line_no)
        j = _int_field(row[1], "j", rid=rid, line=line_no)
        if j < 1 or (n_intervals is not None and j > n_intervals):
            raise DataInconsistencyError(f"j={j} outside the grid 1..{n_intervals}", rid, line_no)
        sex = _int_field(row[2], "sex", {0, 1}, rid, line_no)
        try:
            age = float(row[3])
        except ValueError:
            raise DataInconsistencyError(f"age must be a number, got {row[3]!r}", rid, line_no) from None
        if not math.isfinite(age):
            raise DataInconsistencyError("age must be finite", rid, line_no)
        tested = _int_field(row[4], "tested", {0, 1}, rid, line_no)
        if tested:
            if row[5] == "":
                raise DataInconsistencyError("test_result missing for a tested interval", rid, line_no)
            result = _int_field(row[5], "test_result", {0, 1}, rid, line_no)
        else:
            if row[5] != "":
                raise DataInconsistencyError("test_result given for an untested interval", rid, line_no)
            result = NO_RESULT
        died = _int_field(row[6], "died", {0, 1}, rid, line_no)
        x = _int_field(row[7], "x_true", {0, 1}, rid, line_no) if oracle else None

        g = groups.get(rid)
        if g is None:
            g = groups[rid] = {"entry": j, "sex": sex, "age": [], "y": [], "d": [], "r": [], "x": [], "line": line_no}
            order.append(rid)
        else:
            if rid != last_id:
                raise DataInconsistencyError("rows for this id are not contiguous", rid, line_no)
            if j != g["entry"] + len(g["y"]):
                raise DataInconsistencyError(f"j={j} does not follow j={g['entry'] + len(g['y']) - 1}", rid, line_no)
            if sex != g["sex"]:
                raise DataInconsistencyError("sex changes within a person", rid, line_no)
            if g["y"][-1] == 1:
                raise DataInconsistencyError("row after the outcome occurred", rid, line_no)
            prior = [v for v in g["r"] if v != NO_RESULT]
            if result == 0 and prior and prior[-1] == 1:
                raise DataInconsistencyError("negative test after a positive test", rid, line_no)
        g["age"].append(age)
        g["y"].append(died)
        g["d"].append(tested)
        g["r"].append(result)
        g["x"].append(x)
        last_id = rid

    if not order:
        raise EmptyDataError("data file has a header but no rows")
    records = []
    for rid in order:
        g = groups[rid]
        try:
            records.append(
                PersonRecord(
                    id=rid,
                    entry=g["entry"],
                    sex=float(g["sex"]),
                    age=np.array(g["age"]),
                    y=np.array(g["y"]),
                    history=TestHistory(np.array(g["d"]), np.array(g["r"])),
                    x_true=np.array(g["x"]) if oracle else None,
                )
            )
        except InvalidInputError as exc:
            if isinstance(exc, DataInconsistencyError):
                raise
            raise DataInconsistencyError(str(exc), rid, g["line"]) from None
    return records


def dataset_summary(records: Sequence[PersonRecord]) -> dict:
    groups = {1: 0, 2: 0, 3: 0, 4: 0}
    for r in records:
        groups[r.history.label().m] += 1
    return {
        "persons": len(records),
        "person_years": int(sum(r.k for r in records)),
        "tests": int(sum(int(r.history.delta_star.sum()) for r in records)),
        "deaths": int(sum(int(r.y.sum()) for r in records)),
        "group_counts": {str(m): c for m, c in groups.items()},
    }


# ------------------------------------------------------------------------ config

_FLOAT_LIST = "float list"
_SCHEMA = {
    "model": {
        "covariates": "str list",
        "intervals": "int",
        "link": "link",
        **{f"link_{c}": "link" for c in COMPONENTS},
        **{f"basis_{c}": "basis" for c in COMPONENTS},
        **{f"basis_{c}_df": "int" for c in COMPONENTS},
        **{f"basis_{c}_knots": _FLOAT_LIST for c in COMPONENTS},
        "age_offset": "float",
        "age_scale": "float",
    },
    "dgp": {
        "n": "int",
        "seed": "int",
        "p_sex": "float",
        "age_min": "float",
        "age_max": "float",
        "entry_min": "int",
        "entry_max": "int",
        "beta": "float",
        **{f"alpha_{c}": "float" for c in COMPONENTS},
        **{f"{part}_{c}": _FLOAT_LIST for c in COMPONENTS for part in ("gamma", "tau")},
    },
    "fit": {
        "optimizer": "optimizer",
        "max_iterations": "int",
        "grad_tol": "float",
        "f_tol": "float",
        "grad_step": "float",
        "hess_step": "float",
        "level": "float",
        "initial": _FLOAT_LIST,
    },
    "study": {
        "replicates": "int",
        "seed": "int",
        "first_replicate": "int",
        "report": "str list",
    },
}


def _line_index(text: str) -> dict:
    index = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = no
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip().lower()), no)
    return index


def _convert(kind, raw, where):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == _FLOAT_LIST:
            return tuple(float(v) for v in raw.split(",") if v.strip()) if raw else ()
        if kind == "str list":
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        if kind == "link":
            return LinkFunction(raw)
        if kind == "optimizer":
            if raw not in OPTIMIZERS:
                raise ValueError
            return raw
        if kind == "basis":
            if raw not in ("none", "linear", "ns"):
                raise ValueError
            return raw
    except ValueError:
        raise ConfigError(f"invalid {kind} value {raw!r} for {where[1]!r}", where[2]) from None
    raise AssertionError(kind)


@dataclass
class RunConfig:
    """Validated settings from a configuration file (all keys optional)."""

    values: dict = field(default_factory=lambda: {s: {} for s in _SCHEMA})
    lines: dict = field(default_factory=dict)

    def get(self, section, key, default=None):
        return self.values[section].get(key, default)

    def line(self, section, key):
        return self.lines.get((section, key))

    def spec(self, j_values=None) -> ModelSpec:
        covs = self.get("model", "covariates", ("sex", "age"))
        for c in covs:
            if c not in KNOWN_COVARIATES:
                raise ConfigError(f"unknown covariate {c!r}", self.line("model", "covariates"))
        J = self.get("model", "intervals", 20)
        if J < 1:
            raise ConfigError("intervals must be >= 1", self.line("model", "intervals"))
        link = self.get("model", "link", LinkFunction.CLOGLOG)
        links = {c: self.get("model", f"link_{c}", link) for c in COMPONENTS}
        default_basis = {"y": "linear", "s": "linear", "x": "linear", "d": "none"}
        bases = {}
        for c in COMPONENTS:
            kind = self.get("model", f"basis_{c}", default_basis[c])
            knots = self.get("model", f"basis_{c}_knots")
            df = self.get("model", f"basis_{c}_df")
            where = self.line("model", f"basis_{c}")
            if kind != "ns":
                if knots or df is not None:
                    raise ConfigError(f"basis_{c}_df/knots only apply to an ns basis", where)
                bases[c] = BasisSpec(kind)
                continue
            try:
                if knots:
                    bases[c] = BasisSpec("ns", knots)
                else:
                    values = np.asarray(j_values, dtype=float) if j_values is not None else None
                    bases[c] = BasisSpec.natural_spline(df or 4, values, lower=None if values is not None else 1, upper=None if values is not None else J)
            except InvalidInputError as exc:
                raise ConfigError(f"basis_{c}: {exc}", where) from None
        return ModelSpec(
            covariates=covs,
            n_intervals=J,
            links=links,
            bases=bases,
            age_offset=self.get("model", "age_offset", 13.0),
            age_scale=self.get("model", "age_scale", 47.0),
        )

    def truth(self, spec: ModelSpec) -> ParameterVector:
        default = reference_truth()
        kw = {}
        for c in COMPONENTS:
            kw[f"alpha_{c}"] = self.get("dgp", f"alpha_{c}", getattr(default, f"alpha_{c}"))
            for part in ("gamma", "tau"):
                key = f"{part}_{c}"
                value = np.asarray(self.get("dgp", key, getattr(default, key)), dtype=float)
                expected = len(spec.covariates) if part == "gamma" else spec.bases[c].size
                if value.size != expected:
                    raise ConfigError(f"{key} needs {expected} values under this model, got {value.size}", self.line("dgp", key) or self.line("dgp", None))
                kw[key] = value
        kw["beta"] = self.get("dgp", "beta", default.beta)
        return ParameterVector(**kw)

    def dgp(self, spec: Optional[ModelSpec] = None, seed: Optional[int] = None, n: Optional[int] = None) -> DgpConfig:
        spec = spec or self.spec()
        try:
            return DgpConfig(
                n=n if n is not None else self.get("dgp", "n", 1000),
                spec=spec,
                truth=self.truth(spec),
                entry_min=self.get("dgp", "entry_min", 1),
                entry_max=self.get("dgp", "entry_max"),
                p_sex=self.get("dgp", "p_sex", 0.5),
                age_min=self.get("dgp", "age_min", 13.0),
                age_max=self.get("dgp", "age_max", 60.0),
                seed=seed if seed is not None else self.get("dgp", "seed", 0),
            )
        except InvalidInputError as exc:
            raise ConfigError(f"[dgp] {exc}", self.line("dgp", None)) from None

    def fit_options(self, threads: int = 1, n_params: Optional[int] = None) -> FitOptions:
        v = self.values["fit"]
        kw = {k: v[k] for k in ("optimizer", "max_iterations", "grad_tol", "f_tol", "grad_step", "hess_step", "level", "initial") if k in v}
        if n_params is not None and "initial" in kw and len(kw["initial"]) != n_params:
            raise ConfigError(f"initial needs {n_params} values", self.line("fit", "initial"))
        try:
            return FitOptions(threads=threads, **kw)
        except InvalidInputError as exc:
            raise ConfigError(f"[fit] {exc}", self.line("fit", None)) from None

    def study(self, reps=None, seed=None, first=None, threads: int = 1) -> StudyConfig:
        spec = self.spec()
        report = self.get("study", "report", TABLE1_PARAMETERS)
        if not set(report) <= set(spec.names):
            bad = sorted(set(report) - set(spec.names))
            raise ConfigError(f"report lists unknown parameters {bad}", self.line("study", "report"))
        try:
            return StudyConfig(
                dgp=self.dgp(spec),
                fit=self.fit_options(threads=1),
                n_replicates=reps if reps is not None else self.get("study", "replicates", 1000),
                seed=seed if seed is not None else self.get("study", "seed", 0),
                report=tuple(report),
                first_replicate=first if first is not None else self.get("study", "first_replicate", 1),
            )
        except InvalidInputError as exc:
            raise ConfigError(f"[study] {exc}", self.line("study", None)) from None


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " "), getattr(exc, "lineno", None)) from None
    lines = _line_index(text)
    cfg = RunConfig(lines=lines)
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)))
        for key, raw in parser.items(section):
            kind = _SCHEMA[section].get(key)
            where = (section, key, lines.get((section, key)))
            if kind is None:
                raise ConfigError(f"unknown key {key!r} in [{section}]", where[2])
            cfg.values[section][key] = _convert(kind, raw, where)
    return cfg


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


# ------------------------------------------------------------------ study files

REPLICATE_HEADER = ("replicate", "converged", "positive_definite", "n_evaluations", "loglik", "parameter", "truth", "estimate", "se")
TABLE1_ROWS = (
    ("True parameter value", "truth"),
    ("Average estimate", "mean_estimate"),
    ("Bias (absolute)", "bias"),
    ("Average estimated standard error", "mean_se"),
    ("Empirical standard error", "empirical_se"),
)
METRIC_EXTRAS = (
    ("Coverage Monte Carlo SE", "coverage_mc_se"),
    ("Bias Monte Carlo SE", "bias_mc_se"),
)


def coverage_label(level: float) -> str:
    return f"{level * 100:g}% CI coverage"


def replicates_to_csv(results: Sequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPLICATE_HEADER)
    for r in sorted(results, key=lambda r: r.replicate):
        for i, name in enumerate(r.names):
            w.writerow([r.replicate, int(r.converged), int(r.positive_definite), r.n_evaluations, fmt_float(r.loglik),
                        name, fmt_float(r.truth[i]), fmt_float(r.estimate[i]), fmt_float(r.se[i])])
    return buf.getvalue()


def read_replicates(path) -> list:
    """Parse a per-replicate audit file back into ReplicateResult objects."""
    from .study import ReplicateResult

    rows: dict[int, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != REPLICATE_HEADER:
            raise DataInconsistencyError(f"not a replicate file (header {','.join(header)})", line=1)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(REPLICATE_HEADER):
                raise DataInconsistencyError(f"expected {len(REPLICATE_HEADER)} fields", line=line_no)
            try:
                rep = int(row[0])
                g = rows.setdefault(rep, {"meta": (bool(int(row[1])), bool(int(row[2])), int(row[3]), float(row[4])),
                                          "names": [], "truth": [], "est": [], "se": []})
                g["names"].append(row[5])
                g["truth"].append(float(row[6]))
                g["est"].append(float(row[7]))
                g["se"].append(float(row[8]))
            except ValueError as exc:
                raise DataInconsistencyError(f"malformed field ({exc})", f"replicate {row[0]}", line_no) from None
    out = []
    for rep, g in rows.items():
        conv, pd, nev, ll = g["meta"]
        out.append(ReplicateResult(rep, conv, pd, nev, ll, tuple(g["names"]), np.array(g["truth"]), np.array(g["est"]), np.array(g["se"])))
    return sorted(out, key=lambda r: r.replicate)


def metrics_to_csv(metrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter", *(label for label, _ in TABLE1_ROWS), coverage_label(metrics.level),
                *(label for label, _ in METRIC_EXTRAS), "Replicates used", "Replicates not converged"])
    for p in metrics.parameters:
        w.writerow([p.name, *(fmt_float(getattr(p, attr)) for _, attr in TABLE1_ROWS), fmt_float(p.coverage),
                    *(fmt_float(getattr(p, attr)) for _, attr in METRIC_EXTRAS), metrics.n_used, metrics.n_failed])
    return buf.getvalue()


def sig6(v: float) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.6g}"


def table1_csv(metrics) -> str:
    """Published-table layout: one row per statistic, one column per parameter."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["", *(p.name for p in metrics.parameters)])
    for label, attr in TABLE1_ROWS:
        w.writerow([label, *(sig6(getattr(p, attr)) for p in metrics.parameters)])
    w.writerow([coverage_label(metrics.level), *(sig6(100 * p.coverage) + "%" for p in metrics.parameters)])
    return buf.getvalue()
