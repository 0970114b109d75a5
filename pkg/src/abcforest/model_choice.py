"""Likelihood-free model choice with a random-forest classifier.

The pipeline has two stages. A classification forest trained on the
reference table selects the model by majority vote; the vote counts are
reported but are *not* posterior probabilities. The posterior probability
of the selected model is then estimated by a second, regression forest:
the out-of-bag misclassification indicator of every training record is
regressed on the summaries, and one minus that regression, read at the
observed summaries, estimates P(true model = selected model | observed).

Practitioner diagnostics (prior error rates, reference-table subset
check, discriminant-projection compatibility check) live here as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import baselines
from . import forest as forest_mod
from .cart import CLASSIFICATION, REGRESSION
from .data import ReferenceTable
from .errors import DegenerateInputError
from .forest import Forest, ForestConfig, VoteTally
from .seeding import derive_seed, rng_for


@dataclass(frozen=True)
class AbcRfClassifier:
    """Model-choice forest plus the reference table it was trained on."""

    forest: Forest
    table: ReferenceTable

    @property
    def n_models(self) -> int:
        return self.table.n_models

    @property
    def summary_names(self) -> tuple[str, ...]:
        return self.table.summary_names

    def oob_error(self) -> float:
        return self.forest.oob_error()


@dataclass(frozen=True)
class ErrorVector:
    """Out-of-bag misclassification indicator per training record.

    ``values[i]`` is 0/1; records without any out-of-bag tree are flagged
    with -1 and excluded from ``defined``.
    """

    values: np.ndarray
    defined: np.ndarray

    def mean_defined(self) -> float:
        return float(np.mean(self.values[self.defined]))


@dataclass(frozen=True)
class PosteriorEstimate:
    """Selected model, raw votes, and the regression-forest posterior."""

    selected_model: int
    votes: VoteTally
    posterior_prob: float


@dataclass(frozen=True)
class PriorErrorReport:
    """Misclassification rate under the hierarchical prior.

    ``confusion[i, j]`` counts records of true model i+1 predicted as
    j+1; rows for records without a defined prediction are dropped.
    """

    rate: float
    confusion: np.ndarray
    source: str   # "out-of-bag" | "held-out"


def fit(table: ReferenceTable, config: ForestConfig | None = None,
        threads: int = 1) -> AbcRfClassifier:
    """Train the model-choice forest on a reference table."""
    present = np.unique(table.models)
    if present.size < 2:
        raise ValueError("reference table must contain at least 2 models")
    f = forest_mod.train(table.summaries, table.models, CLASSIFICATION,
                         config, feature_names=table.summary_names,
                         threads=threads, n_classes=table.n_models)
    return AbcRfClassifier(f, table)


def attach(forest: Forest, table: ReferenceTable) -> AbcRfClassifier:
    """Rebuild a classifier from a persisted forest and its training table."""
    if forest.task != CLASSIFICATION:
        raise ValueError("model-choice requires a classification forest")
    if forest.feature_names and forest.feature_names != table.summary_names:
        raise ValueError(
            f"forest was trained on summaries {forest.feature_names}, "
            f"table carries {table.summary_names}")
    forest.attach_training_data(table.summaries, table.models)
    return AbcRfClassifier(forest, table)


def select(classifier: AbcRfClassifier, observed) -> tuple[int, VoteTally]:
    """Majority-vote model for the observed summaries, with the raw tally.

    Vote frequencies carry no posterior-probability meaning; use
    :func:`posterior_probability` for calibrated confidence.
    """
    tally = classifier.forest.vote(observed)
    return tally.argmax_model(), tally


def error_vector(classifier: AbcRfClassifier, table: ReferenceTable | None = None
                 ) -> ErrorVector:
    """0/1 out-of-bag misclassification indicators on the training table."""
    if table is not None and table is not classifier.table \
            and table != classifier.table:
        raise ValueError("classifier was not trained on this table")
    pred, defined = classifier.forest.oob_predictions()
    values = np.where(defined, (pred != classifier.table.models).astype(np.int8),
                      np.int8(-1))
    return ErrorVector(values, defined)


def posterior_probability(classifier: AbcRfClassifier, observed,
                          regression_config: ForestConfig | None = None,
                          threads: int = 1, rho: Forest | None = None
                          ) -> PosteriorEstimate:
    """Estimate P(true model = selected model | observed summaries).

    Trains a regression forest of the out-of-bag error indicator on the
    summaries (records lacking an OOB prediction are dropped) and returns
    1 - rho(observed), clamped into [0, 1]. Pass a prebuilt ``rho`` (from
    :func:`error_regression`) to score many observations without refitting.
    """
    selected, tally = select(classifier, observed)
    if rho is None:
        rho = error_regression(classifier, regression_config, threads=threads)
    raw = rho.regress(np.asarray(observed, dtype=np.float64))
    posterior = min(1.0, max(0.0, 1.0 - raw))
    return PosteriorEstimate(selected, tally, posterior)


def error_regression(classifier: AbcRfClassifier,
                     regression_config: ForestConfig | None = None,
                     threads: int = 1) -> Forest:
    """The secondary forest rho(s) regressing OOB error on summaries."""
    ev = error_vector(classifier)
    if not np.any(ev.defined):
        raise DegenerateInputError("no training record has an out-of-bag prediction")
    if regression_config is None:
        regression_config = ForestConfig(
            n_tree=classifier.forest.config.n_tree,
            seed=derive_seed(classifier.forest.config.seed, "error-regression"))
    X = classifier.table.summaries[ev.defined]
    y = ev.values[ev.defined].astype(np.float64)
    return forest_mod.train(X, y, REGRESSION, regression_config,
                            feature_names=classifier.summary_names,
                            threads=threads)


def prior_error_rate(classifier: AbcRfClassifier,
                     test_table: ReferenceTable | None = None) -> PriorErrorReport:
    """Misclassification rate over the prior: held-out table or out-of-bag."""
    M = classifier.n_models
    if test_table is None:
        pred, defined = classifier.forest.oob_predictions()
        truth = classifier.table.models[defined]
        pred = pred[defined]
        source = "out-of-bag"
    else:
        if len(test_table) == 0:
            raise ValueError("test table is empty")
        if test_table.n_summaries != classifier.table.n_summaries:
            raise ValueError("test table summary width does not match classifier")
        truth = test_table.models
        pred = classifier.forest.classify_batch(test_table.summaries)
        source = "held-out"
    if truth.size == 0:
        raise DegenerateInputError("no record has a defined prediction")
    confusion = np.zeros((M, M), dtype=np.int64)
    np.add.at(confusion, (truth - 1, pred - 1), 1)
    return PriorErrorReport(float(np.mean(pred != truth)), confusion, source)


# ---- posterior-probability identity on an enumerable fixture -----------------------


@dataclass(frozen=True)
class IdentityReport:
    """Per-summary residuals of E[err | s] + P(correct | s) - 1."""

    residuals: np.ndarray       # (n_classifiers, n_summary_values)
    max_residual: float


def identity_check(joint, classifiers) -> IdentityReport:
    """Verify E[I(mhat(s) != m) | s] = 1 - P(m = mhat(s) | s) by enumeration.

    ``joint[m, s]`` is the probability of (model m+1, summary level s);
    each classifier is an array mapping summary level -> predicted model
    (1-based). The identity is algebraic, so it must hold for arbitrary,
    not just optimal, classifiers.
    """
    P = np.asarray(joint, dtype=np.float64)
    if P.ndim != 2 or abs(P.sum() - 1.0) > 1e-9 or np.any(P < 0):
        raise ValueError("joint must be a nonnegative matrix summing to 1")
    marg = P.sum(axis=0)
    if np.any(marg == 0):
        raise ValueError("every summary level needs positive probability")
    cond = P / marg            # P(m | s)
    res = np.empty((len(classifiers), P.shape[1]))
    for ci, rule in enumerate(classifiers):
        rule = np.asarray(rule, dtype=np.int64)
        for s in range(P.shape[1]):
            mhat = rule[s] - 1
            p_correct = cond[mhat, s]
            exp_err = float(np.sum(cond[:, s] * (np.arange(P.shape[0]) != mhat)))
            res[ci, s] = exp_err + p_correct - 1.0
    return IdentityReport(res, float(np.max(np.abs(res))))


def identity_check_mc(joint, classifier, n: int, seed: int):
    """Monte Carlo conditional error rates per summary level, with their SEs."""
    P = np.asarray(joint, dtype=np.float64)
    rng = rng_for(seed, "identity-mc")
    flat = rng.choice(P.size, size=n, p=P.ravel())
    m = flat // P.shape[1]
    s = flat % P.shape[1]
    rule = np.asarray(classifier, dtype=np.int64)
    err = (rule[s] - 1) != m
    rates = np.empty(P.shape[1])
    ses = np.empty(P.shape[1])
    for si in range(P.shape[1]):
        sel = err[s == si]
        rates[si] = sel.mean() if sel.size else np.nan
        ses[si] = (np.sqrt(max(rates[si] * (1 - rates[si]), 1e-12) / sel.size)
                   if sel.size else np.nan)
    return rates, ses


# ---- practitioner diagnostics -------------------------------------------------------


def subset_stability(table: ReferenceTable, fraction: float,
                     config: ForestConfig | None = None,
                     threads: int = 1) -> tuple[float, float]:
    """OOB error from the full table vs a random subset of it.

    A subset error close to the full-table error signals that the
    reference table is large enough; a clearly larger one signals that
    more simulations are needed.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    if config is None:
        config = ForestConfig()
    full = fit(table, config, threads=threads).oob_error()
    n_sub = max(2, int(round(fraction * len(table))))
    idx = rng_for(config.seed, "subset-stability").permutation(len(table))[:n_sub]
    sub_table = table.subset(np.sort(idx))
    sub_cfg = ForestConfig(n_tree=config.n_tree, n_boot=None, n_try=config.n_try,
                           seed=config.seed, sampling=config.sampling,
                           min_leaf=config.min_leaf)
    sub = fit(sub_table, sub_cfg, threads=threads).oob_error()
    return full, sub


@dataclass(frozen=True)
class ProjectionCheck:
    """Reference table and observed point on the first discriminant axes."""

    coords: np.ndarray            # (N, n_axes) simulated records
    observed_coords: np.ndarray   # (n_axes,)
    models: np.ndarray
    axis_names: tuple[str, ...]


def compatibility_projection(table: ReferenceTable, observed) -> ProjectionCheck:
    """Project the table and the observed point on the first LDA axes.

    An observed point far outside the simulated clouds signals that no
    model/prior combination is compatible with the data, in which case
    model choice output is not meaningful.
    """
    model = baselines.lda_fit(table)
    n_axes = min(table.n_models - 1, 4)
    coords = baselines.lda_project(model, table.summaries)[:, :n_axes]
    obs = np.asarray(observed, dtype=np.float64)
    obs_coords = baselines.lda_project(model, obs.reshape(1, -1))[0, :n_axes]
    names = tuple(f"LD{j + 1}" for j in range(n_axes))
    return ProjectionCheck(coords, obs_coords, table.models.copy(), names)
