"""End-to-end experiments on the MA benchmark.

These drivers tie the generative model, the forest pipeline, and the
baseline classifiers into the reproducible experiments the CLI exposes:
the method-comparison table (every classifier's prior error rate on a
held-out table, against the exact-posterior oracle), the posterior
fidelity experiment, and the noise-robustness experiment.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import baselines, ma, model_choice
from .data import ReferenceTable
from .forest import ForestConfig
from .seeding import derive_seed, rng_for


@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    error: float
    detail: str = ""


@dataclass(frozen=True)
class BenchmarkResult:
    rows: list[BenchmarkRow]
    rf_oob_error: float
    rf_test_error: float
    rf_confusion: np.ndarray
    classifier: model_choice.AbcRfClassifier
    train_table: ReferenceTable
    valid_table: ReferenceTable
    test_data: ma.ToyDataset
    wall_time_s: float

    def error_of(self, method: str) -> float:
        for row in self.rows:
            if row.method == method:
                return row.error
        raise KeyError(method)


def benchmark_tables(config: ma.ToyConfig, seed: int, n_train: int,
                     n_valid: int, n_test: int):
    """The three disjoint prior-predictive samples every experiment shares."""
    train = ma.generate_dataset(n_train, config, derive_seed(seed, "table", "train"))
    valid = ma.generate_dataset(n_valid, config, derive_seed(seed, "table", "valid"))
    test = ma.generate_dataset(n_test, config, derive_seed(seed, "table", "test"))
    return train, valid, test


def run_benchmark(n_train: int = 10_000, n_valid: int = 10_000,
                  n_test: int = 10_000, config: ma.ToyConfig | None = None,
                  seed: int = 0, n_tree: int = 500, threads: int = 1,
                  extra_methods: bool = False,
                  knn_grid=(10, 25, 50, 100, 200),
                  summary_kind: str = ma.AUTOCOVARIANCE) -> BenchmarkResult:
    """Prior error rate of every classifier on a fresh held-out table.

    The default report carries seven rows: LDA, logistic regression,
    naive Bayes, knn at k=100 and k=50, the random forest, and the exact
    Bayes oracle. ``extra_methods`` adds validation-calibrated knn and
    local logit rows (the local logit pass is slow). Summaries default to
    the variance-bearing autocovariance flavor; the variance carries model
    information every method here benefits from.
    """
    t0 = time.time()
    if config is None:
        config = ma.ToyConfig()
    train, valid, test = benchmark_tables(config, seed, n_train, n_valid, n_test)
    train_table = train.table(kind=summary_kind)
    valid_table = valid.table(kind=summary_kind)
    test_table = test.table(kind=summary_kind)
    truth = test_table.models

    def err(pred):
        return float(np.mean(pred != truth))

    rows: list[BenchmarkRow] = []

    lda = baselines.lda_fit(train_table)
    rows.append(BenchmarkRow("lda", err(baselines.lda_classify_batch(
        lda, test_table.summaries))))

    logit = baselines.logit_fit(train_table)
    rows.append(BenchmarkRow("logistic", err(baselines.logit_classify_batch(
        logit, test_table.summaries)), f"iters={logit.n_iter}"))

    nb = baselines.naive_bayes_fit(train_table)
    rows.append(BenchmarkRow("naive_bayes", err(baselines.naive_bayes_classify_batch(
        nb, test_table.summaries))))

    for k in (100, 50):
        knn = baselines.knn_fit(train_table, k)
        rows.append(BenchmarkRow(f"knn_k{k}", err(baselines.knn_classify_batch(
            knn, test_table.summaries)), f"k={k}"))

    clf = model_choice.fit(
        train_table, ForestConfig(n_tree=n_tree, seed=derive_seed(seed, "forest")),
        threads=threads)
    rf_report = model_choice.prior_error_rate(clf, test_table)
    rows.append(BenchmarkRow("random_forest", rf_report.rate, f"trees={n_tree}"))
    oob = clf.oob_error()

    bayes_pred = ma.bayes_classify_batch(test.series, config, threads=threads)
    rows.append(BenchmarkRow("bayes_oracle", err(bayes_pred), "exact posterior"))

    if extra_methods:
        cal = baselines.calibrate_k("knn", train_table, valid_table, knn_grid)
        knn_best = baselines.knn_fit(train_table, cal.selected_k)
        rows.append(BenchmarkRow("knn_calibrated", err(baselines.knn_classify_batch(
            knn_best, test_table.summaries)), f"k={cal.selected_k}"))
        ll_grid = [k for k in knn_grid if k >= 25]
        cal_ll = baselines.calibrate_k("local_logit", train_table, valid_table, ll_grid)
        ll = baselines.local_logit_fit(train_table, cal_ll.selected_k)
        rows.append(BenchmarkRow(
            "local_logit_calibrated",
            err(baselines.local_logit_classify_batch(ll, test_table.summaries)),
            f"k={cal_ll.selected_k}"))

    return BenchmarkResult(rows, oob, rf_report.rate, rf_report.confusion, clf,
                           train_table, valid_table, test, time.time() - t0)


@dataclass(frozen=True)
class FidelityResult:
    """Exact vs estimated posterior of the selected model on fresh series."""

    selected: np.ndarray
    exact_map: np.ndarray          # exact MAP model per series
    truth: np.ndarray              # exact posterior of the selected model
    estimate: np.ndarray           # 1 - rho(s), clamped


def posterior_fidelity_experiment(classifier: model_choice.AbcRfClassifier,
                                  n_series: int, config: ma.ToyConfig, seed: int,
                                  threads: int = 1,
                                  exact_posteriors=None,
                                  dataset: ma.ToyDataset | None = None
                                  ) -> FidelityResult:
    """Score Algorithm-style posterior estimates against the exact oracle."""
    if dataset is None:
        dataset = ma.generate_dataset(n_series, config,
                                      derive_seed(seed, "fidelity", "series"))
    if exact_posteriors is None:
        exact_posteriors = ma.exact_posterior_batch(dataset.series, config,
                                                    threads=threads)
    n_lags = classifier.table.n_summaries
    kind = ma.summary_kind_of(classifier.table)
    summ = ma.summarize_batch(dataset.series, n_lags, kind)
    selected = classifier.forest.classify_batch(summ)
    rho = model_choice.error_regression(classifier, threads=threads)
    estimate = np.clip(1.0 - rho.regress_batch(summ), 0.0, 1.0)
    p = np.array([[ep.p_ma1, ep.p_ma2] for ep in exact_posteriors])
    truth = p[np.arange(len(selected)), selected - 1]
    exact_map = np.where(p[:, 0] >= 0.5, 1, 2)
    return FidelityResult(selected, exact_map, truth, estimate)


@dataclass(frozen=True)
class NoiseRobustnessResult:
    rf_base: float
    rf_noisy: float
    knn_base: float
    knn_noisy: float
    knn_k_base: int
    knn_k_noisy: int


def _with_noise(table: ReferenceTable, n_noise: int, rng) -> ReferenceTable:
    noise = rng.standard_normal((len(table), n_noise))
    names = list(table.summary_names) + [f"noise{j + 1}" for j in range(n_noise)]
    return table.with_summaries(np.hstack([table.summaries, noise]), names)


def noise_robustness_experiment(n_train: int, n_valid: int, n_test: int,
                                n_noise: int, config: ma.ToyConfig, seed: int,
                                n_tree: int = 500, threads: int = 1,
                                knn_grid=(10, 25, 50, 100, 200),
                                summary_kind: str = ma.AUTOCOVARIANCE
                                ) -> NoiseRobustnessResult:
    """Error shift caused by appending i.i.d. N(0,1) noise summaries.

    The same simulated data underlies both arms; only the summary block
    changes. knn is recalibrated per arm on the validation table.
    """
    train, valid, test = benchmark_tables(config, seed, n_train, n_valid, n_test)
    tables = {"base": (train.table(kind=summary_kind),
                       valid.table(kind=summary_kind),
                       test.table(kind=summary_kind))}
    rng = rng_for(seed, "noise-columns")
    tables["noisy"] = tuple(_with_noise(t, n_noise, rng)
                            for t in tables["base"])
    out = {}
    ks = {}
    for arm, (tr, va, te) in tables.items():
        clf = model_choice.fit(
            tr, ForestConfig(n_tree=n_tree, seed=derive_seed(seed, "forest", arm)),
            threads=threads)
        out[f"rf_{arm}"] = model_choice.prior_error_rate(clf, te).rate
        cal = baselines.calibrate_k("knn", tr, va, knn_grid)
        knn = baselines.knn_fit(tr, cal.selected_k)
        out[f"knn_{arm}"] = float(np.mean(
            baselines.knn_classify_batch(knn, te.summaries) != te.models))
        ks[arm] = cal.selected_k
    return NoiseRobustnessResult(out["rf_base"], out["rf_noisy"],
                                 out["knn_base"], out["knn_noisy"],
                                 ks["base"], ks["noisy"])
