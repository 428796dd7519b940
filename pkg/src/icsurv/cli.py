"""Command-line driver: ``icsurv simulate | fit | study``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .curves import curves_csv
from .errors import (
    ConfigError,
    DataInconsistencyError,
    InitializationError,
    InvalidInputError,
    NumericalFailureError,
    SpecError,
    StudyFailureError,
)
from .inference import fit
from .io import (
    EmptyDataError,
    dataset_summary,
    load_config,
    metrics_to_csv,
    read_records,
    read_replicates,
    records_to_csv,
    replicates_to_csv,
    sig6,
    table1_csv,
)
from .likelihood import Panel
from .simulate import simulate_dataset
from .study import metrics_from_replicates, run_replicates

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGENCE = 0, 2, 3, 4
log = logging.getLogger("icsurv")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_USAGE) from None


def _summary_text(summary: dict) -> str:
    groups = ", ".join(f"m={m}: {c}" for m, c in summary["group_counts"].items())
    return (
        f"persons: {summary['persons']}\n"
        f"person-years: {summary['person_years']}\n"
        f"tests: {summary['tests']}\n"
        f"deaths: {summary['deaths']}\n"
        f"groups: {groups}\n"
    )


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    dgp = cfg.dgp(seed=args.seed, n=args.n)
    data, oracle = simulate_dataset(dgp, threads=args.threads)
    _write(Path(args.out), records_to_csv(data))
    if args.oracle_out:
        _write(Path(args.oracle_out), records_to_csv(oracle, oracle=True))
    sys.stdout.write(_summary_text(dataset_summary(data)))
    return EXIT_OK


def _settings(spec, options) -> dict:
    return {
        "covariates": list(spec.covariates),
        "intervals": spec.n_intervals,
        "age_offset": spec.age_offset,
        "age_scale": spec.age_scale,
        "links": {c: link.value for c, link in spec.links.items()},
        "bases": {c: b.to_config() for c, b in spec.bases.items()},
        "optimizer": options.optimizer,
        "max_iterations": options.max_iterations,
        "grad_tol": options.grad_tol,
        "grad_step": options.grad_step,
        "hess_step": options.hess_step,
        "level": options.level,
        "initial": list(options.initial) if options.initial is not None else None,
    }


def _report_text(report: dict) -> str:
    fit_ = report["fit"]
    lines = [
        f"data: {report['data']['file']} (sha256 {report['data']['sha256'][:12]})",
        f"persons {report['data']['persons']}, person-years {report['data']['person_years']}, "
        f"tests {report['data']['tests']}, deaths {report['data']['deaths']}",
        f"converged: {fit_['converged']}  positive definite information: {fit_['positive_definite']}",
        f"log-likelihood: {sig6(fit_['loglik'])}  iterations: {fit_['n_iterations']}  "
        f"evaluations: {fit_['n_evaluations']}  max relative gradient: {sig6(fit_['max_rel_gradient'])}",
        "",
        f"{'parameter':<14}{'estimate':>14}{'se':>14}{'lower':>14}{'upper':>14}",
    ]
    for p in fit_["parameters"]:
        vals = [sig6(p[k]) if p[k] is not None else "nan" for k in ("estimate", "se", "lower", "upper")]
        lines.append(f"{p['name']:<14}" + "".join(f"{v:>14}" for v in vals))
    if fit_["boundary_parameters"]:
        lines.append("")
        lines.append("near the parameter-space boundary: " + ", ".join(fit_["boundary_parameters"]))
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    path = Path(args.data)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_USAGE) from None
    data = read_records(path)
    spec = cfg.spec(j_values=[j for r in data for j in r.j])
    for r in data:
        if r.exit > spec.n_intervals:
            raise DataInconsistencyError(f"interval {r.exit} beyond the configured grid 1..{spec.n_intervals}", r.id)
    options = cfg.fit_options(threads=args.threads, n_params=spec.n_params)
    result = fit(Panel(data, spec), spec, options)
    report = {
        "version": __version__,
        "data": {"file": path.name, "sha256": hashlib.sha256(raw).hexdigest(), **dataset_summary(data)},
        "settings": _settings(spec, options),
        "fit": result.to_dict(),
    }
    out = Path(args.out)
    _write(out / "fit_report.json", json.dumps(report, indent=2) + "\n")
    _write(out / "fit_report.txt", _report_text(report))
    _write(out / "curves.csv", curves_csv(result, spec))
    sys.stdout.write(_report_text(report))
    if not result.converged:
        sys.stderr.write(f"error: optimizer did not converge ({result.message})\n")
        return EXIT_NONCONVERGENCE
    if not result.positive_definite:
        sys.stderr.write("warning: observed information is not positive definite; standard errors unavailable\n")
    return EXIT_OK


def cmd_study(args) -> int:
    cfg = load_config(args.config)
    config = cfg.study(reps=args.reps, seed=args.seed, first=args.first_replicate)
    if args.n is not None:
        config = replace(config, dgp=replace(config.dgp, n=args.n))
    if args.from_replicates:
        results = []
        for f in args.from_replicates:
            try:
                results += read_replicates(f)
            except OSError as exc:
                raise CliError(f"cannot read {f}: {exc.strerror}", EXIT_USAGE) from None
    else:
        def progress(res):
            log.info("replicate %d: converged=%s", res.replicate, res.converged)

        results = run_replicates(config, threads=args.threads, progress=progress)
    out = Path(args.out)
    _write(out / "replicates.csv", replicates_to_csv(results))
    metrics = metrics_from_replicates(results, config.report, config.fit.level)
    _write(out / "metrics.csv", metrics_to_csv(metrics))
    table = table1_csv(metrics)
    _write(out / "table1.csv", table)
    sys.stdout.write(table)
    sys.stdout.write(f"replicates used: {metrics.n_used}, not converged: {metrics.n_failed}\n")
    if metrics.failed_replicates:
        sys.stderr.write(f"warning: excluded replicates {list(metrics.failed_replicates)}\n")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _positive(value):
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="icsurv", description="Simulate, fit and study discrete-time survival models with an interval-censored binary covariate.", epilog="exit codes: 0 success, 2 usage or configuration error, 3 data error, 4 non-convergence")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a person-period dataset")
    s.add_argument("--config", help="run configuration file (defaults to the reference design)")
    s.add_argument("--seed", type=int, help="override [dgp] seed")
    s.add_argument("--n", type=_positive, help="override [dgp] n")
    s.add_argument("--out", required=True, help="fit-ready CSV to write")
    s.add_argument("--oracle-out", help="also write the CSV with the true status column x_true")
    s.add_argument("--threads", type=_positive, default=1)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit the model to a person-period CSV")
    f.add_argument("--data", required=True, help="person-period CSV")
    f.add_argument("--config", help="run configuration file")
    f.add_argument("--out", required=True, help="directory for fit_report.json, fit_report.txt, curves.csv")
    f.add_argument("--threads", type=_positive, default=1)
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("study", help="replicated simulate-and-fit study")
    t.add_argument("--config", help="run configuration file")
    t.add_argument("--out", required=True, help="directory for replicates.csv, metrics.csv, table1.csv")
    t.add_argument("--reps", type=_positive, help="override [study] replicates")
    t.add_argument("--seed", type=int, help="override [study] seed")
    t.add_argument("--n", type=_positive, help="override [dgp] n")
    t.add_argument("--first-replicate", type=_positive, help="first replicate index (for sharding)")
    t.add_argument("--from-replicates", nargs="+", metavar="CSV",
                   help="skip simulation; merge these replicate files and recompute the metrics")
    t.add_argument("--threads", type=_positive, default=1, help="worker processes")
    t.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        code, message = exc.code, str(exc)
    except (ConfigError, EmptyDataError) as exc:
        code, message = EXIT_USAGE, str(exc)
    except (DataInconsistencyError, SpecError) as exc:
        code, message = EXIT_DATA, str(exc)
    except (StudyFailureError, InitializationError, NumericalFailureError) as exc:
        code, message = EXIT_NONCONVERGENCE, str(exc)
    except InvalidInputError as exc:
        code, message = EXIT_DATA, str(exc)
    sys.stderr.write(f"error: {message}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
