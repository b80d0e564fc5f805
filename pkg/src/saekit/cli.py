"""Command-line interface: generate, sample, estimate, simulate, report."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .configfile import load_config
from .harness import SimConfig, expected_domain_sample_sizes, run_simulation
from .pipeline import ESTIMATOR_TAGS, compute_sample_estimates
from .population import (
    STUDY_VARIABLES,
    GeneratorConfig,
    generate_synthetic_population,
    load_population,
    write_population,
)
from .reporting import (
    accuracy,
    classify_domains,
    read_records,
    read_truths,
    render_report,
    write_simulation_outputs,
)
from .sampling import SampleDesignConfig, draw_sample, read_sample, write_sample

ESTIMATE_HEADER = ["domain_id", "method", "lambda", "theta_hat",
                   "mse_u_raw", "mse_u_clamped", "mse_b"]
DIAGNOSTICS_HEADER = ["domain_id", "psi_d", "psi_s", "psi_c", "lambda_ratio"]


def _generator_config(path, seed=None) -> GeneratorConfig:
    values = load_config(path) if path else {}
    known = {f.name for f in fields(GeneratorConfig)}
    unknown = set(values) - known
    if unknown:
        raise SystemExit(f"unknown generator config keys: {sorted(unknown)}")
    if seed is not None:
        values["seed"] = seed
    for key in ("unemployed_range", "employed_range"):
        if key in values:
            values[key] = tuple(float(v) for v in values[key])
    return GeneratorConfig(**values)


def _cmd_generate(args) -> int:
    config = _generator_config(args.config, args.seed)
    population, frame = generate_synthetic_population(config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_population(population, frame, out_dir / "persons.csv", out_dir / "covariates.csv")
    print(f"wrote {population.n_persons} persons in {population.n_households} households, "
          f"{frame.n_domains} domains -> {out_dir}")
    return 0


def _cmd_sample(args) -> int:
    population, _ = load_population(args.population, args.covariates)
    sample = draw_sample(population, SampleDesignConfig(
        n_households=args.n_households, seed=args.seed))
    write_sample(sample, args.out)
    print(f"wrote sample of {sample.n_persons} persons "
          f"({sample.n_households} households) -> {args.out}")
    return 0


def _fmt(value) -> str:
    value = float(value)
    return "" if np.isnan(value) else repr(value)


def _cmd_estimate(args) -> int:
    estimators = tuple(args.estimators.split(",")) if args.estimators else \
        ("direct", "synthetic", "fh", "c", "ssd")
    if "opt" in estimators:
        raise SystemExit("the optimal composite needs a Monte Carlo archive; "
                         "use `saekit simulate`")
    _, frame = load_population(args.population, args.covariates)
    sample = read_sample(args.sample, frame.n_domains)
    est = compute_sample_estimates(
        frame, sample, args.study_variable, estimators=estimators,
        bootstrap_b=args.bootstrap_b, bootstrap_seed=args.seed)

    rows = []
    constant = {"direct": (est.theta_d, 1.0, None, None),
                "synthetic": (est.theta_syn, 0.0, None, None),
                "fh": (est.theta_fh, None, None, est.mse_fh),
                "c": (est.theta_c, None, est.mse_u_c, est.mse_b_c),
                "ssd": (est.theta_ssd, None, est.mse_u_ssd, est.mse_b_ssd)}
    lam_arrays = {"fh": est.gamma_fh, "c": est.lambda_c, "ssd": est.lambda_ssd}
    for tag in estimators:
        theta, lam_const, mse_u, mse_b = constant[tag]
        if theta is None:
            continue
        lam = lam_arrays.get(tag)
        for i in range(frame.n_domains):
            raw = np.nan if mse_u is None else mse_u[i]
            rows.append([
                frame.domain_id[i], tag,
                _fmt(lam_const if lam is None else lam[i]),
                _fmt(theta[i]), _fmt(raw),
                _fmt(max(raw, 0.0) if not np.isnan(raw) else raw),
                _fmt(np.nan if mse_b is None else mse_b[i]),
            ])
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ESTIMATE_HEADER)
        writer.writerows(rows)

    if args.diagnostics_out and est.psi_s is not None:
        psi_c = est.psi_c if est.psi_c is not None else np.maximum(
            est.psi_s, np.nan_to_num(est.psi_d))
        lam_ratio = np.minimum(est.psi_s, np.nan_to_num(est.psi_d)) / psi_c
        with open(args.diagnostics_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DIAGNOSTICS_HEADER)
            for i in range(frame.n_domains):
                writer.writerow([frame.domain_id[i], _fmt(est.psi_d[i]),
                                 _fmt(est.psi_s[i]), _fmt(psi_c[i]),
                                 _fmt(lam_ratio[i])])

    if args.model_fit_out and est.gamma_fh is not None:
        with open(args.model_fit_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["domain_id", "gamma", "sigma_v2"])
            for i in range(frame.n_domains):
                writer.writerow([frame.domain_id[i], _fmt(est.gamma_fh[i]),
                                 _fmt(est.sigma_v2)])

    for message in est.errors:
        print(f"warning: {message}", file=sys.stderr)
    print(f"wrote per-domain estimates -> {args.out}")
    return 0


def _sim_config(args) -> SimConfig:
    values = load_config(args.config) if args.config else {}
    known = {f.name for f in fields(SimConfig)}
    unknown = set(values) - known
    if unknown:
        raise SystemExit(f"unknown simulate config keys: {sorted(unknown)}")
    for name in ("replicates", "n_households", "bootstrap_b", "seed", "jobs"):
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if args.estimators:
        values["estimators"] = tuple(args.estimators.split(","))
    elif "estimators" in values and isinstance(values["estimators"], str):
        values["estimators"] = (values["estimators"],)
    if args.study_variables:
        values["study_variables"] = tuple(args.study_variables.split(","))
    elif "study_variables" in values and isinstance(values["study_variables"], str):
        values["study_variables"] = (values["study_variables"],)
    if "replicates" not in values or "n_households" not in values:
        raise SystemExit("simulate needs replicates and n_households "
                         "(flags or config keys)")
    return SimConfig(**values)


def _cmd_simulate(args) -> int:
    if args.population and args.covariates:
        population, frame = load_population(args.population, args.covariates)
    elif args.gen_config or args.gen_defaults:
        population, frame = generate_synthetic_population(
            _generator_config(args.gen_config, args.gen_seed))
    else:
        raise SystemExit("simulate needs either --population/--covariates "
                         "or --gen-config/--gen-defaults")
    config = _sim_config(args)
    result = run_simulation(population, frame, config)
    files = write_simulation_outputs(result, args.out_dir, args.format)
    for name in sorted(files):
        print(f"wrote {files[name]}")
    errors = sum(len(rs.errors) for rs in result.replicate_sets.values())
    if errors:
        print(f"note: {errors} per-replicate warnings recorded", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    records_dir = Path(args.records)
    truths = read_truths(records_dir / "truths.csv")
    import json
    meta = json.loads((records_dir / "meta.json").read_text())
    for variable in meta["study_variables"]:
        rs = read_records(records_dir / f"records_{variable}.csv", variable)
        if meta.get("size_class_mode", "expected") == "empirical":
            nbar = rs.n.mean(axis=0)
        else:
            nbar = np.asarray(meta["nbar"], dtype=np.float64)
        classes = classify_domains(nbar)
        report = accuracy(rs, truths[variable], classes)
        text = render_report(report, args.format)
        if args.out_dir:
            out = Path(args.out_dir) / f"report_{variable}.{args.format}"
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(text)
            print(f"wrote {out}")
        else:
            print(f"# {variable}")
            print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saekit",
        description="Small-area estimation of domain proportions with a "
                    "survey simulation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic population")
    p.add_argument("--config", help="generator config file (key = value lines)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("sample", help="draw one household sample and export it")
    p.add_argument("--population", required=True, help="persons.csv")
    p.add_argument("--covariates", required=True, help="covariates.csv")
    p.add_argument("--n-households", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("estimate", help="all estimators on one exported sample")
    p.add_argument("--population", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--study-variable", default="unemployed", choices=STUDY_VARIABLES)
    p.add_argument("--estimators", help=f"comma list from {','.join(ESTIMATOR_TAGS)}")
    p.add_argument("--bootstrap-b", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--diagnostics-out", help="variance smoothing diagnostics CSV")
    p.add_argument("--model-fit-out", help="area-model shrinkage weights CSV")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("simulate", help="full Monte Carlo run")
    p.add_argument("--population")
    p.add_argument("--covariates")
    p.add_argument("--gen-config", help="generate the population from this config")
    p.add_argument("--gen-defaults", action="store_true",
                   help="generate the population with default settings")
    p.add_argument("--gen-seed", type=int, default=None)
    p.add_argument("--config", help="simulation config file")
    p.add_argument("--replicates", type=int)
    p.add_argument("--n-households", type=int)
    p.add_argument("--bootstrap-b", type=int)
    p.add_argument("--estimators")
    p.add_argument("--study-variables")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--format", choices=("csv", "md"), default="csv")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("report", help="render accuracy tables from an archive")
    p.add_argument("--records", required=True, help="simulate output directory")
    p.add_argument("--format", choices=("csv", "md"), default="md")
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
