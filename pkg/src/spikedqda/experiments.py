"""Experiment engine: synthetic and real-data benchmarking protocols.

The synthetic protocol draws fresh training and test sets from the fixed
spiked-covariance population for each repetition, trains the enabled
classifiers on the same draw, and averages test errors. The real-data
protocol re-splits an ingested dataset per repetition, preserving the
class proportions of the full dataset in the training split.

Per-repetition random streams are derived from the master seed and the
repetition index alone, so results are identical whether repetitions run
serially or on a worker pool, and independent of scheduling order.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from .classifiers import (
    EvalResult,
    ImprovedQDA,
    KNNClassifier,
    OracleQDA,
    RidgeQDA,
    evaluate,
    gamma_grid,
    select_gamma,
)
from .exceptions import ConfigError, DataError, SpikedQdaError, SpikedQdaWarning
from .population import LabeledDataset, axis_aligned_models
from .spectral import PooledPCA
from .spikes import summarize_class

PROTOCOL_LAMBDAS0 = (5.0, 4.0, 3.0)
PROTOCOL_LAMBDAS1 = (6.0, 5.0, 4.0)

REPORT_COLUMNS = (
    "classifier",
    "n",
    "p",
    "extra_params",
    "mean_error",
    "std_error",
    "reps",
    "failures",
    "seconds",
)


@dataclass
class ExperimentConfig:
    """Knobs of one experiment run; every CLI flag maps onto a field."""

    mode: str = "synth"
    p: int = 500
    n_values: tuple = (1000,)
    a: float = 0.5
    sigma0_sq: float = 1.0
    sigma1_sq: float = 1.0
    lambdas0: tuple = PROTOCOL_LAMBDAS0
    lambdas1: tuple = PROTOCOL_LAMBDAS1
    reps: int = 250
    test_size: int = 2000
    variant: str = "general"
    estimate_params: bool = False
    gamma_mode: str = "test-oracle"
    gamma_folds: int = 5
    with_imp: bool = True
    with_rqda: bool = True
    with_oracle: bool = False
    knn_k: tuple = ()
    dataset: str | None = None
    labels_file: str | None = None
    label_column: int = 0
    label_map: dict | None = None
    header: bool = False
    delimiter: str = ","
    drop_columns: tuple = ()
    pca_dim: int | None = None
    pca_once: bool = False
    rqda_priors: str = "empirical"
    hist_draws: int = 10_000
    seed: int = 0
    workers: int = 1
    out: str | None = None
    fmt: str = "csv"

    def validate(self) -> "ExperimentConfig":
        if self.mode not in ("synth", "real", "histogram", "estimate"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if not self.n_values or any(n <= 0 for n in self.n_values):
            raise ConfigError(f"sample sizes must be positive, got {self.n_values}")
        if self.p <= 0:
            raise ConfigError(f"p must be positive, got {self.p}")
        if self.test_size < 2 and self.mode == "synth":
            raise ConfigError(f"test_size must be >= 2, got {self.test_size}")
        if self.gamma_mode not in ("test-oracle", "k-fold"):
            raise ConfigError(f"unknown gamma selection mode {self.gamma_mode!r}")
        if self.variant not in ("general", "simplified"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.fmt not in ("csv", "json-lines"):
            raise ConfigError(f"unknown report format {self.fmt!r}")
        if self.rqda_priors not in ("empirical", "uniform"):
            raise ConfigError(f"unknown priors mode {self.rqda_priors!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.mode in ("real", "estimate") and not self.dataset:
            raise ConfigError(f"mode {self.mode!r} needs --dataset")
        return self


@dataclass
class CellResult:
    """One (classifier, n) cell of a report."""

    classifier: str
    n: int
    p: int
    params: dict
    mean_error: float
    std_error: float
    reps: int
    failures: int
    seconds: float


@dataclass
class ExperimentReport:
    cells: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Per-repetition work units (module level so worker pools can pickle them)
# ---------------------------------------------------------------------------

def _rep_streams(seed: int, cell_index: int, rep: int, count: int):
    root = np.random.SeedSequence(entropy=seed, spawn_key=(cell_index, rep))
    return [np.random.default_rng(s) for s in root.spawn(count)]


def _evaluate_rqda(config, s0, s1, train, test, priors):
    if config.gamma_mode == "k-fold":
        model = RidgeQDA(priors=priors).fit(train.samples, train.labels)
        gamma = select_gamma(
            model, gammas=gamma_grid(), mode="k-fold",
            n_folds=config.gamma_folds, seed=config.seed,
        )
    else:
        model = RidgeQDA.from_summaries(s0, s1, priors=priors)
        gamma = select_gamma(
            model, test.samples, test.labels, gammas=gamma_grid(), mode="test-oracle"
        )
    result = evaluate(model.with_gamma(gamma), test)
    return result, gamma


def _record(results: dict, name: str, started: float, outcome, extra=None):
    entry = {"seconds": time.perf_counter() - started}
    if isinstance(outcome, EvalResult):
        entry.update(
            error=outcome.error, error0=outcome.error0, error1=outcome.error1
        )
        if extra:
            entry.update(extra)
    else:
        entry["failure"] = str(outcome)
    results[name] = entry


def _synth_rep(rep: int, config: ExperimentConfig, cell_index: int, n: int) -> dict:
    model0, model1 = axis_aligned_models(
        config.p, config.lambdas0, config.lambdas1, config.a,
        config.sigma0_sq, config.sigma1_sq,
    )
    # n is the total training budget, split between classes by the priors
    # (both 1/2 here), mirroring the real-data splitting rule.
    n0 = math.floor(model0.prior * n)
    n1 = n - n0
    rng_tr0, rng_tr1, rng_te0, rng_te1 = _rep_streams(config.seed, cell_index, rep, 4)
    x0 = model0.sample(n0, rng_tr0)
    x1 = model1.sample(n1, rng_tr1)
    n_test0 = config.test_size // 2
    n_test1 = config.test_size - n_test0
    test = LabeledDataset(
        np.vstack([model0.sample(n_test0, rng_te0), model1.sample(n_test1, rng_te1)]),
        np.concatenate([np.zeros(n_test0, int), np.ones(n_test1, int)]),
    )

    if config.estimate_params:
        sigma2 = (None, None)
        ranks = (None, None)
    else:
        sigma2 = (config.sigma0_sq, config.sigma1_sq)
        ranks = (len(config.lambdas0), len(config.lambdas1))
    s0 = summarize_class(x0, sigma2=sigma2[0], r=ranks[0])
    s1 = summarize_class(x1, sigma2=sigma2[1], r=ranks[1])

    results = {}
    if config.with_imp:
        started = time.perf_counter()
        try:
            model = ImprovedQDA(variant=config.variant).fit_summaries(s0, s1)
            _record(results, "imp-qda", started, evaluate(model, test))
        except SpikedQdaError as exc:
            _record(results, "imp-qda", started, exc)
    train_labels = np.concatenate([np.zeros(n0, int), np.ones(n1, int)])
    if config.with_rqda:
        started = time.perf_counter()
        train = LabeledDataset(np.vstack([x0, x1]), train_labels)
        try:
            result, gamma = _evaluate_rqda(config, s0, s1, train, test, (0.5, 0.5))
            _record(results, "r-qda", started, result, {"gamma": gamma})
        except SpikedQdaError as exc:
            _record(results, "r-qda", started, exc)
    if config.with_oracle:
        started = time.perf_counter()
        _record(results, "oracle-qda", started, evaluate(OracleQDA(model0, model1), test))
    for k in config.knn_k:
        started = time.perf_counter()
        knn = KNNClassifier(n_neighbors=k).fit(np.vstack([x0, x1]), train_labels)
        _record(results, f"knn{k}", started, evaluate(knn, test))
    return results


def _real_rep(
    rep: int,
    config: ExperimentConfig,
    cell_index: int,
    n: int,
    samples: np.ndarray,
    labels: np.ndarray,
) -> dict:
    (rng,) = _rep_streams(config.seed, cell_index, rep, 1)
    idx0 = np.flatnonzero(labels == 0)
    idx1 = np.flatnonzero(labels == 1)
    q0 = idx0.size / labels.size
    n0 = math.floor(q0 * n)
    n1 = n - n0
    if n0 < 2 or n1 < 2:
        raise DataError(f"training split n={n} leaves a class with < 2 samples")
    perm0 = rng.permutation(idx0)
    perm1 = rng.permutation(idx1)
    train_idx = np.concatenate([perm0[:n0], perm1[:n1]])
    test_idx = np.concatenate([perm0[n0:], perm1[n1:]])
    x_train, y_train = samples[train_idx], labels[train_idx]
    x_test, y_test = samples[test_idx], labels[test_idx]

    if config.pca_dim and not config.pca_once:
        reducer = PooledPCA(n_components=config.pca_dim).fit(x_train)
        x_train = reducer.transform(x_train)
        x_test = reducer.transform(x_test)

    test = LabeledDataset(x_test, y_test)
    train = LabeledDataset(x_train, y_train)
    s0 = summarize_class(x_train[y_train == 0])
    s1 = summarize_class(x_train[y_train == 1])

    results = {}
    if config.with_imp:
        started = time.perf_counter()
        try:
            model = ImprovedQDA(variant=config.variant).fit_summaries(s0, s1)
            _record(results, "imp-qda", started, evaluate(model, test))
        except SpikedQdaError as exc:
            _record(results, "imp-qda", started, exc)
    if config.with_rqda:
        started = time.perf_counter()
        priors = None if config.rqda_priors == "empirical" else (0.5, 0.5)
        try:
            result, gamma = _evaluate_rqda(config, s0, s1, train, test, priors)
            _record(results, "r-qda", started, result, {"gamma": gamma})
        except SpikedQdaError as exc:
            _record(results, "r-qda", started, exc)
    for k in config.knn_k:
        started = time.perf_counter()
        knn = KNNClassifier(n_neighbors=k).fit(x_train, y_train)
        _record(results, f"knn{k}", started, evaluate(knn, test))
    return results


def _silence_rep_warnings():
    # Per-repetition estimation warnings would repeat hundreds of times in
    # a sweep; failures are what the report's failure column is for.
    warnings.simplefilter("ignore", SpikedQdaWarning)


def _run_reps(worker, config: ExperimentConfig, extra_args: tuple) -> list:
    if config.workers <= 1:
        with warnings.catch_warnings():
            _silence_rep_warnings()
            return [worker(rep, config, *extra_args) for rep in range(config.reps)]
    results = [None] * config.reps
    with ProcessPoolExecutor(
        max_workers=config.workers, initializer=_silence_rep_warnings
    ) as pool:
        futures = {
            pool.submit(worker, rep, config, *extra_args): rep
            for rep in range(config.reps)
        }
        for fut in as_completed(futures):
            results[futures[fut]] = fut.result()
    return results


def _aggregate(
    rep_results: list, n: int, p: int, base_params: dict
) -> list[CellResult]:
    """Collapse per-repetition dictionaries into one cell per classifier.

    Aggregation iterates repetitions in index order regardless of how they
    were scheduled, so parallel runs reproduce serial output bit for bit.
    """
    names: list[str] = []
    for rep in rep_results:
        for name in rep:
            if name not in names:
                names.append(name)
    cells = []
    for name in names:
        errors, errors0, errors1, gammas = [], [], [], []
        failures, seconds = 0, 0.0
        for rep in rep_results:
            entry = rep.get(name)
            if entry is None:
                continue
            seconds += entry["seconds"]
            if "failure" in entry:
                failures += 1
                continue
            errors.append(entry["error"])
            errors0.append(entry["error0"])
            errors1.append(entry["error1"])
            if "gamma" in entry:
                gammas.append(entry["gamma"])
        params = dict(base_params)
        if errors:
            params["err0"] = repr(float(np.mean(errors0)))
            params["err1"] = repr(float(np.mean(errors1)))
            mean_error = float(np.mean(errors))
            std_error = float(np.std(errors, ddof=1)) if len(errors) > 1 else 0.0
        else:
            mean_error = float("nan")
            std_error = float("nan")
        if gammas:
            params["gamma_star"] = repr(float(np.mean(gammas)))
        cells.append(
            CellResult(
                classifier=name,
                n=n,
                p=p,
                params=params,
                mean_error=mean_error,
                std_error=std_error,
                reps=len(rep_results),
                failures=failures,
                seconds=seconds,
            )
        )
    return cells


def run_synth(config: ExperimentConfig) -> ExperimentReport:
    """Monte Carlo misclassification sweep on the synthetic population."""
    config.validate()
    report = ExperimentReport()
    base_params = {
        "a": repr(float(config.a)),
        "sigma0_sq": repr(float(config.sigma0_sq)),
        "sigma1_sq": repr(float(config.sigma1_sq)),
    }
    for cell_index, n in enumerate(config.n_values):
        rep_results = _run_reps(_synth_rep, config, (cell_index, n))
        report.cells.extend(_aggregate(rep_results, n, config.p, base_params))
    return report


def run_real(config: ExperimentConfig) -> ExperimentReport:
    """Repeated stratified-split benchmark on an ingested dataset."""
    config.validate()
    data = ingest_dataset(
        config.dataset,
        label_column=config.label_column,
        label_map=config.label_map,
        header=config.header,
        delimiter=config.delimiter,
        labels_file=config.labels_file,
        drop_columns=config.drop_columns,
    )
    if config.pca_dim is not None and not 1 <= config.pca_dim <= data.dim:
        raise ConfigError(
            f"pca_dim must be in [1, {data.dim}] for this dataset, got {config.pca_dim}"
        )
    samples, labels = data.samples, data.labels
    if config.pca_dim and config.pca_once:
        samples = PooledPCA(n_components=config.pca_dim).fit(samples).transform(samples)
    p = config.pca_dim if config.pca_dim else data.dim
    report = ExperimentReport()
    for cell_index, n in enumerate(config.n_values):
        if n >= data.n:
            raise DataError(
                f"training size n={n} must be smaller than the dataset ({data.n} rows)"
            )
        rep_results = _run_reps(_real_rep, config, (cell_index, n, samples, labels))
        report.cells.extend(_aggregate(rep_results, n, p, {}))
    return report


def run_histogram(config: ExperimentConfig) -> tuple[str, str]:
    """Train on one synthetic draw and dump the two class-conditional
    decision-statistic samples, one value per line, for external plotting."""
    from .diagnostics import emit_y_histogram_samples

    config.validate()
    model0, model1 = axis_aligned_models(
        config.p, config.lambdas0, config.lambdas1, config.a,
        config.sigma0_sq, config.sigma1_sq,
    )
    n = config.n_values[0]
    n0 = math.floor(model0.prior * n)
    n1 = n - n0
    rng_tr0, rng_tr1 = _rep_streams(config.seed, 0, 0, 2)
    s0 = summarize_class(
        model0.sample(n0, rng_tr0), sigma2=config.sigma0_sq, r=len(config.lambdas0)
    )
    s1 = summarize_class(
        model1.sample(n1, rng_tr1), sigma2=config.sigma1_sq, r=len(config.lambdas1)
    )
    model = ImprovedQDA(variant=config.variant).fit_summaries(s0, s1)
    y0, y1 = emit_y_histogram_samples(
        model0, model1, model.rule_, n_per_class=config.hist_draws, seed=config.seed
    )
    prefix = config.out or "y_hist"
    paths = (f"{prefix}_class0.txt", f"{prefix}_class1.txt")
    try:
        for p, values in zip(paths, (y0, y1)):
            np.savetxt(p, values, fmt="%.17g")
    except OSError as exc:
        raise DataError(f"cannot write histogram samples: {exc}") from exc
    return paths


def run_estimate(config: ExperimentConfig) -> dict:
    """Spike-spectrum report of a dataset: per class noise variance, spike
    count, de-biased spike strengths and the leading sample eigenvalues."""
    from .spikes import invert_spike_map
    from .exceptions import SpikeUndetectableError

    config.validate()
    data = ingest_dataset(
        config.dataset,
        label_column=config.label_column,
        label_map=config.label_map,
        header=config.header,
        delimiter=config.delimiter,
        labels_file=config.labels_file,
        drop_columns=config.drop_columns,
    )
    x0, x1 = data.split()
    out = {"dim": data.dim, "classes": []}
    for label, rows in ((0, x0), (1, x1)):
        summary = summarize_class(rows)
        lambdas = []
        for j in range(summary.r):
            try:
                lambdas.append(
                    invert_spike_map(summary.eigen.values[j], summary.sigma2, summary.c)
                )
            except SpikeUndetectableError:
                continue
        out["classes"].append(
            {
                "label": label,
                "n": summary.n,
                "aspect_ratio": summary.c,
                "sigma2_hat": summary.sigma2,
                "r_hat": summary.r,
                "lambdas_hat": lambdas,
                "top_eigenvalues": summary.eigen.values[:10].tolist(),
            }
        )
    return out


# ---------------------------------------------------------------------------
# Dataset ingestion
# ---------------------------------------------------------------------------

def _read_rows(path: str, delimiter: str | None, header: bool):
    rows = []
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            if header and lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            fields = line.split(delimiter) if delimiter else line.split()
            rows.append((lineno, fields))
    if not rows:
        raise DataError(f"{path}: no data rows")
    arity = len(rows[0][1])
    for lineno, fields in rows:
        if len(fields) != arity:
            raise DataError(
                f"{path}: line {lineno}: expected {arity} fields, got {len(fields)}"
            )
    return rows


def _to_float_matrix(path: str, rows, column_indices) -> np.ndarray:
    try:
        return np.asarray(
            [[row[j] for j in column_indices] for _, row in rows], dtype=float
        )
    except ValueError:
        for lineno, row in rows:
            for j in column_indices:
                try:
                    float(row[j])
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}: cannot parse {row[j]!r} as a number"
                    ) from None
        raise


def ingest_dataset(
    path: str,
    label_column: int = 0,
    label_map: dict | None = None,
    header: bool = False,
    delimiter: str = ",",
    labels_file: str | None = None,
    drop_columns=(),
) -> LabeledDataset:
    """Load a delimited text dataset into samples and binary labels.

    One sample per row. The label lives in `label_column` (negative
    indices count from the end) unless `labels_file` names a separate
    one-label-per-line file. `delimiter` of "whitespace" splits on any
    whitespace run. With a `label_map` such as {4: 0, 5: 1}, rows whose
    label is not a key are dropped; without one the data must contain
    exactly two distinct labels, which are mapped to 0 and 1 in sorted
    order. `drop_columns` removes identifier columns by original index.
    """
    if not os.path.exists(path):
        raise DataError(f"dataset file not found: {path}")
    sep = None if delimiter == "whitespace" else delimiter
    rows = _read_rows(path, sep, header)
    arity = len(rows[0][1])

    drop = {d % arity for d in drop_columns}
    if labels_file is None:
        label_idx = label_column % arity
        feature_cols = [j for j in range(arity) if j != label_idx and j not in drop]
        raw_labels = _to_float_matrix(path, rows, [label_idx]).ravel()
    else:
        if not os.path.exists(labels_file):
            raise DataError(f"labels file not found: {labels_file}")
        feature_cols = [j for j in range(arity) if j not in drop]
        label_rows = _read_rows(labels_file, None, False)
        if len(label_rows) != len(rows):
            raise DataError(
                f"{labels_file}: {len(label_rows)} labels for {len(rows)} samples"
            )
        raw_labels = _to_float_matrix(labels_file, label_rows, [0]).ravel()
    features = _to_float_matrix(path, rows, feature_cols)

    if label_map is not None:
        mapping = {float(k): int(v) for k, v in label_map.items()}
        keep = np.isin(raw_labels, list(mapping))
        features = features[keep]
        raw_labels = raw_labels[keep]
        if features.shape[0] == 0:
            raise DataError(f"{path}: no rows match the label map {label_map}")
        labels = np.asarray([mapping[v] for v in raw_labels], dtype=int)
    else:
        distinct = np.unique(raw_labels)
        if distinct.size != 2:
            raise DataError(
                f"{path}: expected 2 distinct labels, found {distinct.size}; "
                "supply a label map to select and encode classes"
            )
        labels = (raw_labels == distinct[1]).astype(int)
    return LabeledDataset(features, labels)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def _params_to_str(params: dict) -> str:
    return ";".join(f"{k}={params[k]}" for k in sorted(params))


def _params_from_str(text: str) -> dict:
    if not text:
        return {}
    out = {}
    for item in text.split(";"):
        key, _, value = item.partition("=")
        out[key] = value
    return out


def emit_report(report: ExperimentReport, path: str, fmt: str = "csv") -> str:
    """Write a report; floats use repr so a round trip is exact."""
    if fmt not in ("csv", "json-lines"):
        raise ConfigError(f"unknown report format {fmt!r}")
    try:
        with open(path, "w", newline="") as handle:
            if fmt == "csv":
                writer = csv.writer(handle)
                writer.writerow(REPORT_COLUMNS)
                for cell in report.cells:
                    writer.writerow(
                        [
                            cell.classifier,
                            cell.n,
                            cell.p,
                            _params_to_str(cell.params),
                            repr(cell.mean_error),
                            repr(cell.std_error),
                            cell.reps,
                            cell.failures,
                            repr(cell.seconds),
                        ]
                    )
            else:
                for cell in report.cells:
                    handle.write(
                        json.dumps(
                            {
                                "classifier": cell.classifier,
                                "n": cell.n,
                                "p": cell.p,
                                "extra_params": cell.params,
                                "mean_error": repr(cell.mean_error),
                                "std_error": repr(cell.std_error),
                                "reps": cell.reps,
                                "failures": cell.failures,
                                "seconds": repr(cell.seconds),
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
    except OSError as exc:
        raise DataError(f"cannot write report to {path}: {exc}") from exc
    return path


def load_report(path: str, fmt: str = "csv") -> ExperimentReport:
    """Read back a report written by :func:`emit_report`."""
    report = ExperimentReport()
    try:
        with open(path, newline="") as handle:
            if fmt == "csv":
                reader = csv.reader(handle)
                headers = next(reader, None)
                if headers is not None and tuple(headers) != REPORT_COLUMNS:
                    raise DataError(f"{path}: unexpected report columns {headers}")
                for row in reader:
                    report.cells.append(
                        CellResult(
                            classifier=row[0],
                            n=int(row[1]),
                            p=int(row[2]),
                            params=_params_from_str(row[3]),
                            mean_error=float(row[4]),
                            std_error=float(row[5]),
                            reps=int(row[6]),
                            failures=int(row[7]),
                            seconds=float(row[8]),
                        )
                    )
            else:
                for line in handle:
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    report.cells.append(
                        CellResult(
                            classifier=obj["classifier"],
                            n=obj["n"],
                            p=obj["p"],
                            params=obj["extra_params"],
                            mean_error=float(obj["mean_error"]),
                            std_error=float(obj["std_error"]),
                            reps=obj["reps"],
                            failures=obj["failures"],
                            seconds=float(obj["seconds"]),
                        )
                    )
    except OSError as exc:
        raise DataError(f"cannot read report from {path}: {exc}") from exc
    return report
