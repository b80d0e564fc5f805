"""Accuracy aggregation by domain-size class and table/archive rendering.

Accuracy of a point estimator is RMSE = sqrt(mean_r (est - truth)^2) and
AB = |mean_r est - truth| over replicates.  For an MSE estimator the truth
is the empirical MSE of its target estimator computed from the same
replicates.  Tables show class averages of the per-domain values, scaled by
100 with 4 decimals.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .harness import ReplicateSet, SimulationResult

CLASS_NAMES = ("small", "medium", "large")
COLUMNS = ("any", "small", "medium", "large")

RECORD_HEADER = ["replicate", "domain_id", "estimator", "theta_hat",
                 "mse_u", "mse_b", "lambda", "n_i"]

# Report rows in table order: (label, source, target tag, kind)
_POINT_LABELS = {"direct": "direct", "synthetic": "S", "fh": "FH",
                 "c": "C", "ssd": "SSD", "opt": "opt"}
_MSE_ROWS = (("mse(FH)", "mse_b", "fh"),
             ("mse_u(C)", "mse_u", "c"),
             ("mse_b(C)", "mse_b", "c"),
             ("mse_u(SSD)", "mse_u", "ssd"),
             ("mse_b(SSD)", "mse_b", "ssd"),
             ("mse_b(opt)", "mse_b", "opt"))


@dataclass(frozen=True)
class DomainClasses:
    labels: np.ndarray      # (M,) 0 small, 1 medium, 2 large
    nbar: np.ndarray        # (M,) expected (or mean realized) sample sizes
    thresholds: tuple[float, float] | None


def classify_domains(nbar, domain_id=None) -> DomainClasses:
    """Split domains into three equal-size classes by expected sample size.

    Ties break by domain id; fewer than 3 domains fall back to one class.
    """
    nbar = np.asarray(nbar, dtype=np.float64)
    m = nbar.shape[0]
    if domain_id is None:
        domain_id = np.arange(1, m + 1)
    if m < 3:
        warnings.warn("fewer than 3 domains: using a single size class")
        return DomainClasses(labels=np.zeros(m, dtype=np.int64), nbar=nbar,
                             thresholds=None)
    order = np.lexsort((np.asarray(domain_id), nbar))
    labels = np.empty(m, dtype=np.int64)
    groups = np.array_split(order, 3)
    for code, group in enumerate(groups):
        labels[group] = code
    thresholds = (float(nbar[groups[1][0]]), float(nbar[groups[2][0]]))
    return DomainClasses(labels=labels, nbar=nbar, thresholds=thresholds)


@dataclass
class AccuracyReport:
    study_variable: str
    rows: list[str]
    domain_id: np.ndarray
    rmse: np.ndarray          # (n_rows, M) per-domain values
    ab: np.ndarray            # (n_rows, M)
    rmse_class: np.ndarray    # (n_rows, 4): any, small, medium, large
    ab_class: np.ndarray
    classes: DomainClasses
    missing: np.ndarray       # (n_rows,) count of missing replicate cells


def _row_accuracy(values: np.ndarray, truth: np.ndarray):
    valid = ~np.isnan(values)
    count = valid.sum(axis=0).astype(np.float64)
    err = np.where(valid, values - truth, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rmse = np.sqrt((err * err).sum(axis=0) / count)
        ab = np.abs(np.where(valid, values, 0.0).sum(axis=0) / count - truth)
    return rmse, ab, int((~valid).sum())


def _empirical_mse(values: np.ndarray, truth: np.ndarray) -> np.ndarray:
    valid = ~np.isnan(values)
    count = valid.sum(axis=0).astype(np.float64)
    err = np.where(valid, values - truth, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (err * err).sum(axis=0) / count


def _class_average(per_domain: np.ndarray, classes: DomainClasses) -> np.ndarray:
    out = np.full(4, np.nan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out[0] = np.nanmean(per_domain)
        for code in range(3):
            mask = classes.labels == code
            if np.any(mask):
                out[code + 1] = np.nanmean(per_domain[mask])
    return out


def accuracy(replicate_set: ReplicateSet, truths: np.ndarray,
             classes: DomainClasses, domain_id=None) -> AccuracyReport:
    """Tables-style accuracy: point estimator rows, then MSE estimator rows."""
    truths = np.asarray(truths, dtype=np.float64)
    m = replicate_set.n_domains
    if domain_id is None:
        domain_id = np.arange(1, m + 1)

    rows, rmse_rows, ab_rows, missing = [], [], [], []

    for tag, label in _POINT_LABELS.items():
        values = replicate_set.theta.get(tag)
        if values is None:
            continue
        rmse, ab, miss = _row_accuracy(values, truths)
        rows.append(label)
        rmse_rows.append(rmse)
        ab_rows.append(ab)
        missing.append(miss)

    for label, source_name, target in _MSE_ROWS:
        source = getattr(replicate_set, source_name).get(target)
        target_theta = replicate_set.theta.get(target)
        if source is None or target_theta is None:
            continue
        truth_mse = _empirical_mse(target_theta, truths)
        rmse, ab, miss = _row_accuracy(source, truth_mse)
        rows.append(label)
        rmse_rows.append(rmse)
        ab_rows.append(ab)
        missing.append(miss)

    rmse_arr = np.asarray(rmse_rows)
    ab_arr = np.asarray(ab_rows)
    return AccuracyReport(
        study_variable=replicate_set.study_variable,
        rows=rows, domain_id=np.asarray(domain_id),
        rmse=rmse_arr, ab=ab_arr,
        rmse_class=np.asarray([_class_average(r, classes) for r in rmse_arr]),
        ab_class=np.asarray([_class_average(r, classes) for r in ab_arr]),
        classes=classes, missing=np.asarray(missing, dtype=np.int64))


def _format_cell(value: float) -> str:
    if np.isnan(value):
        return ""
    return f"{100.0 * value:.4f}"


def render_report(report: AccuracyReport, fmt: str = "csv") -> str:
    """Render class-average accuracy, values x100 with 4 decimals."""
    header = ["estimator"] + [f"rmse_{c}" for c in COLUMNS] + [f"ab_{c}" for c in COLUMNS]
    body = []
    for i, label in enumerate(report.rows):
        cells = [_format_cell(v) for v in report.rmse_class[i]]
        cells += [_format_cell(v) for v in report.ab_class[i]]
        body.append([label] + cells)
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        return buffer.getvalue()
    if fmt == "md":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join(["---"] * len(header)) + "|"]
        for row in body:
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> tuple[list[str], np.ndarray]:
    """Parse a CSV report back into (row labels, scaled value matrix)."""
    reader = csv.reader(io.StringIO(text))
    next(reader)
    labels, values = [], []
    for row in reader:
        if not row:
            continue
        labels.append(row[0])
        values.append([np.nan if cell == "" else float(cell) for cell in row[1:]])
    return labels, np.asarray(values)


# ---------------------------------------------------------------------------
# Record archive
# ---------------------------------------------------------------------------

def _cell(value) -> str:
    value = float(value)
    if np.isnan(value):
        return ""
    return repr(value)


def write_records(replicate_set: ReplicateSet, path) -> None:
    """Archive one replicate set: a row per (replicate, domain, estimator)."""
    constant_lambda = {"direct": 1.0, "synthetic": 0.0}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_HEADER)
        for r in range(replicate_set.n_replicates):
            for i in range(replicate_set.n_domains):
                for tag in replicate_set.theta:
                    lam = replicate_set.lam.get(tag)
                    lam_value = constant_lambda.get(tag) if lam is None else lam[r, i]
                    mse_u = replicate_set.mse_u.get(tag)
                    mse_b = replicate_set.mse_b.get(tag)
                    writer.writerow([
                        r, i + 1, tag,
                        _cell(replicate_set.theta[tag][r, i]),
                        _cell(mse_u[r, i]) if mse_u is not None else "",
                        _cell(mse_b[r, i]) if mse_b is not None else "",
                        _cell(lam_value) if lam_value is not None else "",
                        replicate_set.n[r, i],
                    ])


def read_records(path, study_variable: str) -> ReplicateSet:
    """Rebuild the arrays needed for accuracy() from an archive file."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RECORD_HEADER:
            raise ValueError(f"{path}: expected header {','.join(RECORD_HEADER)}")
        for row in reader:
            if row:
                rows.append(row)
    if not rows:
        raise ValueError(f"{path}: empty archive")

    replicate = np.asarray([int(r[0]) for r in rows])
    domain = np.asarray([int(r[1]) for r in rows])
    tags = [r[2] for r in rows]
    r_total = int(replicate.max()) + 1
    m = int(domain.max())
    present = sorted(set(tags), key=lambda t: list(_POINT_LABELS).index(t))

    def grid():
        return np.full((r_total, m), np.nan)

    theta = {t: grid() for t in present}
    mse_u = {t: grid() for t in present}
    mse_b = {t: grid() for t in present}
    lam = {t: grid() for t in present}
    n = np.zeros((r_total, m), dtype=np.int64)

    def parse(cell):
        return np.nan if cell == "" else float(cell)

    for row, r, i, tag in zip(rows, replicate, domain - 1, tags):
        theta[tag][r, i] = parse(row[3])
        mse_u[tag][r, i] = parse(row[4])
        mse_b[tag][r, i] = parse(row[5])
        lam[tag][r, i] = parse(row[6])
        n[r, i] = int(row[7])

    drop_if_empty = lambda d: {t: v for t, v in d.items() if not np.all(np.isnan(v))}
    shape = (r_total, m)
    return ReplicateSet(
        study_variable=study_variable, n_domains=m, n=n,
        theta=theta, mse_u=drop_if_empty(mse_u), mse_b=drop_if_empty(mse_b),
        lam=drop_if_empty(lam),
        psi_s=np.full(shape, np.nan), sigma_v2=np.full(r_total, np.nan),
        delta_star=np.full(r_total, np.nan),
        boot_var_d=np.full(shape, np.nan), boot_var_s=np.full(shape, np.nan),
        boot_cov_ds=np.full(shape, np.nan), boot_var_s_all=np.full(shape, np.nan))


TRUTHS_HEADER = ["domain_id", "study_variable", "theta_true"]


def write_truths(frame, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTHS_HEADER)
        for variable, values in frame.theta_true.items():
            for i in range(frame.n_domains):
                writer.writerow([frame.domain_id[i], variable, repr(float(values[i]))])


def read_truths(path) -> dict[str, np.ndarray]:
    table: dict[str, dict[int, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRUTHS_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRUTHS_HEADER)}")
        for row in reader:
            if row:
                table.setdefault(row[1], {})[int(row[0])] = float(row[2])
    out = {}
    for variable, cells in table.items():
        m = max(cells)
        values = np.full(m, np.nan)
        for domain, value in cells.items():
            values[domain - 1] = value
        out[variable] = values
    return out


def write_simulation_outputs(result: SimulationResult, out_dir, fmt: str = "csv") -> dict:
    """Write archives, truths, meta and rendered reports; returns file map."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}

    write_truths(result.frame, out_dir / "truths.csv")
    files["truths"] = out_dir / "truths.csv"

    meta = {
        "replicates": result.config.replicates,
        "n_households": result.config.n_households,
        "bootstrap_b": result.config.bootstrap_b,
        "estimators": list(result.config.estimators),
        "study_variables": list(result.config.study_variables),
        "seed": result.config.seed,
        "size_class_mode": result.config.size_class_mode,
        "nbar": [float(v) for v in result.nbar],
    }
    with open(out_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files["meta"] = out_dir / "meta.json"

    for variable, rs in result.replicate_sets.items():
        record_path = out_dir / f"records_{variable}.csv"
        write_records(rs, record_path)
        files[f"records_{variable}"] = record_path

        nbar = result.nbar if result.config.size_class_mode == "expected" \
            else rs.n.mean(axis=0)
        classes = classify_domains(nbar, result.frame.domain_id)
        report = accuracy(rs, result.frame.theta_true[variable], classes,
                          result.frame.domain_id)
        report_path = out_dir / f"report_{variable}.{fmt}"
        report_path.write_text(render_report(report, fmt))
        files[f"report_{variable}"] = report_path

        if rs.errors:
            error_path = out_dir / f"errors_{variable}.log"
            error_path.write_text(
                "".join(f"replicate {r}: {msg}\n" for r, msg in rs.errors))
            files[f"errors_{variable}"] = error_path
    return files
