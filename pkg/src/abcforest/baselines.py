"""Comparison classifiers: knn, LDA, naive Bayes, multinomial logit, local logit.

All fit functions take a :class:`~abcforest.data.ReferenceTable` and return
immutable model objects that are safe to share across threads. Local
methods (knn, local logit) measure distance in Euclidean metric after
normalizing every summary by its median absolute deviation (MAD);
zero-MAD summaries are dropped from the metric with a warning.

Tie conventions, applied everywhere: equal distances are resolved by
training-record order, and vote/score ties by the lowest model index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import ReferenceTable
from .errors import DegenerateInputError, NumericError

_DIRECT_DISTANCE_LIMIT = 2_000_000  # n*d elements; small data uses exact differences


def _as_matrix(queries, width):
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if Q.shape[1] != width:
        raise ValueError(f"expected summary vectors of length {width}, got {Q.shape[1]}")
    return Q


def _majority(labels, n_models):
    counts = np.bincount(labels, minlength=n_models + 1)[1:]
    return int(np.argmax(counts)) + 1


# ---- k nearest neighbors ----------------------------------------------------------


@dataclass(frozen=True)
class KnnClassifier:
    k: int
    scales: np.ndarray          # MAD per kept feature
    kept: np.ndarray            # indices of features with positive MAD
    train_scaled: np.ndarray    # training summaries / scales, kept columns
    labels: np.ndarray
    n_models: int
    n_raw_features: int


def _mad_scales(X):
    med = np.median(X, axis=0)
    mad = np.median(np.abs(X - med), axis=0)
    kept = np.flatnonzero(mad > 0)
    if kept.size == 0:
        raise DegenerateInputError("every summary has zero median absolute deviation")
    if kept.size < X.shape[1]:
        dropped = sorted(set(range(X.shape[1])) - set(kept.tolist()))
        warnings.warn(f"dropping zero-MAD summaries {dropped} from the knn metric")
    return mad[kept], kept


def knn_fit(table: ReferenceTable, k: int) -> KnnClassifier:
    """MAD-normalized k-nearest-neighbor classifier over the table."""
    k = int(k)
    if not 1 <= k <= len(table):
        raise ValueError(f"k must be in [1, {len(table)}]")
    scales, kept = _mad_scales(table.summaries)
    return KnnClassifier(k, scales, kept, table.summaries[:, kept] / scales,
                         table.models.copy(), table.n_models, table.n_summaries)


def _nearest(c: KnnClassifier, queries, kmax):
    """Training indices and distances of the kmax nearest records per
    query, ordered by (distance, training-record index)."""
    Q = _as_matrix(queries, c.n_raw_features)[:, c.kept] / c.scales
    A = c.train_scaled
    n = A.shape[0]
    if kmax > n:
        raise ValueError(f"k={kmax} exceeds training size {n}")
    idx = np.empty((Q.shape[0], kmax), dtype=np.int64)
    dist = np.empty((Q.shape[0], kmax))
    small = Q.shape[0] * n * A.shape[1] <= _DIRECT_DISTANCE_LIMIT
    chunk = max(1, int(5e7 // max(n, 1)))
    for a in range(0, Q.shape[0], chunk):
        q = Q[a:a + chunk]
        if small:
            d2 = ((q[:, None, :] - A[None, :, :]) ** 2).sum(axis=2)
        else:
            d2 = np.maximum(
                (q * q).sum(axis=1)[:, None] + (A * A).sum(axis=1)[None, :]
                - 2.0 * (q @ A.T), 0.0)
        for r in range(d2.shape[0]):
            row = d2[r]
            if kmax < n:
                part = np.argpartition(row, kmax - 1)[:kmax]
                dmax = row[part].max()
                if np.count_nonzero(row <= dmax) > kmax:
                    # distance tie straddling the cut: resolve exactly
                    part = np.argsort(row, kind="stable")[:kmax]
            else:
                part = np.arange(n)
            order = np.lexsort((part, row[part]))
            sel = part[order]
            idx[a + r] = sel
            dist[a + r] = np.sqrt(row[sel])
    return idx, dist


def knn_classify(c: KnnClassifier, summaries) -> int:
    """Majority label among the k nearest training records."""
    idx, _ = _nearest(c, summaries, c.k)
    return _majority(c.labels[idx[0]], c.n_models)


def knn_classify_batch(c: KnnClassifier, queries) -> np.ndarray:
    idx, _ = _nearest(c, queries, c.k)
    lab = c.labels[idx]
    counts = np.stack([(lab == m).sum(axis=1) for m in range(1, c.n_models + 1)],
                      axis=1)
    return np.argmax(counts, axis=1) + 1


# ---- linear discriminant analysis -------------------------------------------------


@dataclass(frozen=True)
class LdaModel:
    classes: np.ndarray            # 1-based labels present in training data
    means: np.ndarray              # (M, d) class means
    pooled_cov: np.ndarray         # (d, d) MLE within-class covariance, regularized
    log_priors: np.ndarray
    axes: np.ndarray               # (d, n_axes) discriminant directions
    axis_strengths: np.ndarray     # generalized eigenvalues, descending
    center: np.ndarray             # projection origin (overall mean)
    _disc_w: np.ndarray            # cov^-1 mu_c per class
    _disc_b: np.ndarray


def lda_fit(table: ReferenceTable) -> LdaModel:
    """Gaussian classes with a shared covariance, fitted by maximum likelihood."""
    X = table.summaries
    y = table.models
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("LDA needs at least two classes")
    n, d = X.shape
    means = np.stack([X[y == c].mean(axis=0) for c in classes])
    priors = np.array([(y == c).mean() for c in classes])
    center = priors @ means
    sw = np.zeros((d, d))
    for c, mu in zip(classes, means):
        xc = X[y == c] - mu
        sw += xc.T @ xc
    sw /= n
    sw[np.diag_indices_from(sw)] += 1e-8 * np.trace(sw) / d
    sb = np.zeros((d, d))
    for pr, mu in zip(priors, means):
        diff = (mu - center)[:, None]
        sb += pr * (diff @ diff.T)
    try:
        evals, evecs = scipy.linalg.eigh(sb, sw)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"pooled covariance is singular: {exc}") from exc
    n_axes = min(classes.size - 1, d)
    order = np.argsort(evals)[::-1][:n_axes]
    axes = evecs[:, order]
    # deterministic sign: largest-magnitude component positive
    for j in range(axes.shape[1]):
        i = np.argmax(np.abs(axes[:, j]))
        if axes[i, j] < 0:
            axes[:, j] = -axes[:, j]
    try:
        w = scipy.linalg.solve(sw, means.T, assume_a="pos").T
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"pooled covariance is singular: {exc}") from exc
    b = np.log(priors) - 0.5 * np.einsum("cd,cd->c", means, w)
    return LdaModel(classes, means, sw, np.log(priors), axes, evals[order],
                    center, w, b)


def lda_classify(model: LdaModel, summaries) -> int:
    return int(lda_classify_batch(model, summaries)[0])


def lda_classify_batch(model: LdaModel, queries) -> np.ndarray:
    Q = _as_matrix(queries, model.means.shape[1])
    scores = Q @ model._disc_w.T + model._disc_b
    return model.classes[np.argmax(scores, axis=1)]


def lda_project(model: LdaModel, summaries) -> np.ndarray:
    """Coordinates on the discriminant axes (origin at the overall mean)."""
    Q = _as_matrix(summaries, model.means.shape[1])
    out = (Q - model.center) @ model.axes
    return out[0] if np.asarray(summaries).ndim == 1 else out


def augment_with_lda(table: ReferenceTable, model: LdaModel) -> ReferenceTable:
    """Append the discriminant coordinates LD1.. as extra summary columns."""
    if model.means.shape[1] != table.n_summaries:
        raise ValueError("LDA model was fitted on a different summary space")
    coords = lda_project(model, table.summaries)
    names = list(table.summary_names) + [f"LD{j + 1}" for j in range(coords.shape[1])]
    return table.with_summaries(np.hstack([table.summaries, coords]), names)


# ---- naive Bayes ------------------------------------------------------------------


@dataclass(frozen=True)
class NaiveBayesModel:
    classes: np.ndarray
    means: np.ndarray
    variances: np.ndarray     # floored at 1e-12
    log_priors: np.ndarray


def naive_bayes_fit(table: ReferenceTable) -> NaiveBayesModel:
    """Per-class independent Gaussian marginals fitted by maximum likelihood."""
    X = table.summaries
    y = table.models
    classes = np.unique(y)
    for c in classes:
        if np.sum(y == c) < 2:
            raise ValueError(f"class {c} has fewer than 2 records")
    means = np.stack([X[y == c].mean(axis=0) for c in classes])
    variances = np.maximum(
        np.stack([X[y == c].var(axis=0) for c in classes]), 1e-12)
    priors = np.array([(y == c).mean() for c in classes])
    return NaiveBayesModel(classes, means, variances, np.log(priors))


def naive_bayes_classify(model: NaiveBayesModel, summaries) -> int:
    return int(naive_bayes_classify_batch(model, summaries)[0])


def naive_bayes_classify_batch(model: NaiveBayesModel, queries) -> np.ndarray:
    Q = _as_matrix(queries, model.means.shape[1])
    # log joint density per class, computed fully in log space
    ll = -0.5 * (((Q[:, None, :] - model.means[None]) ** 2 / model.variances[None]
                  + np.log(2 * np.pi * model.variances)[None]).sum(axis=2))
    return model.classes[np.argmax(ll + model.log_priors[None], axis=1)]


# ---- multinomial logistic regression ----------------------------------------------


@dataclass(frozen=True)
class MultinomialLogit:
    classes: np.ndarray
    coef: np.ndarray          # (M-1, d+1), last class is the reference
    converged: bool
    n_iter: int
    regularized: bool


def _logit_nll_grad_hess(beta, Xd, codes, weights, ridge, want_hess=True):
    n, p = Xd.shape
    m1 = beta.shape[0]
    z = Xd @ beta.T                                   # (n, M-1)
    zfull = np.concatenate([z, np.zeros((n, 1))], axis=1)
    zmax = zfull.max(axis=1, keepdims=True)
    logz = zmax[:, 0] + np.log(np.exp(zfull - zmax).sum(axis=1))
    nll = -np.sum(weights * (np.where(codes < m1, np.take_along_axis(
        zfull, codes[:, None], axis=1)[:, 0], 0.0) - logz))
    nll += 0.5 * ridge * np.sum(beta * beta)
    probs = np.exp(zfull - logz[:, None])             # (n, M)
    ind = np.zeros((n, m1))
    mask = codes < m1
    ind[np.arange(n)[mask], codes[mask]] = 1.0
    resid = weights[:, None] * (probs[:, :m1] - ind)
    grad = resid.T @ Xd + ridge * beta
    if not want_hess:
        return nll, grad, None
    hess = np.empty((m1 * p, m1 * p))
    for a in range(m1):
        for b in range(a, m1):
            w = weights * probs[:, a] * ((a == b) - probs[:, b])
            blk = (Xd * w[:, None]).T @ Xd
            hess[a * p:(a + 1) * p, b * p:(b + 1) * p] = blk
            if b != a:
                hess[b * p:(b + 1) * p, a * p:(a + 1) * p] = blk
    hess[np.diag_indices_from(hess)] += ridge
    return nll, grad, hess


def _fit_logit(Xd, codes, weights, n_classes, tol, max_iter, ridge):
    n, p = Xd.shape
    m1 = n_classes - 1
    beta = np.zeros((m1, p))
    nll, grad, hess = _logit_nll_grad_hess(beta, Xd, codes, weights, ridge)
    scale = max(1.0, float(weights.sum()))
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) <= tol * scale:
            return beta, True, it - 1
        try:
            step = np.linalg.solve(hess, grad.reshape(-1)).reshape(m1, p)
        except np.linalg.LinAlgError:
            jitter = 1e-8 * max(1.0, np.trace(hess) / hess.shape[0])
            hess[np.diag_indices_from(hess)] += jitter
            step = np.linalg.solve(hess, grad.reshape(-1)).reshape(m1, p)
        # damped Newton: halve until the objective decreases
        t = 1.0
        for _ in range(40):
            cand = beta - t * step
            c_nll, c_grad, c_hess = _logit_nll_grad_hess(
                cand, Xd, codes, weights, ridge)
            if c_nll <= nll + 1e-12 * abs(nll):
                beta, nll, grad, hess = cand, c_nll, c_grad, c_hess
                break
            t *= 0.5
        else:
            return beta, False, it
    return beta, np.max(np.abs(grad)) <= tol * scale, max_iter


def logit_fit(table: ReferenceTable, tol: float = 1e-8, max_iter: int = 200,
              weights=None) -> MultinomialLogit:
    """Maximum-likelihood multinomial logit via damped Newton iterations.

    The gradient tolerance is per unit of training weight. Under complete
    separation the unpenalized fit diverges; a lightly ridge-regularized
    solution is returned instead (flagged on the model).
    """
    X = table.summaries
    y = table.models
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("logit needs at least two classes")
    codes = np.searchsorted(classes, y)
    Xd = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, float)
    beta, ok, n_iter = _fit_logit(Xd, codes, w, classes.size, tol, max_iter, 0.0)
    separated = ok and _completely_separated(beta, Xd, codes)
    regularized = False
    if not ok or separated or not np.all(np.isfinite(beta)):
        beta, ok, n_iter = _fit_logit(Xd, codes, w, classes.size, tol, max_iter, 1e-6)
        regularized = True
        if not ok:
            raise NumericError(
                f"logit failed to converge after {max_iter} damped Newton "
                f"iterations (ridge 1e-6); |grad| still above tolerance")
    return MultinomialLogit(classes, beta, ok, n_iter, regularized)


def _completely_separated(beta, Xd, codes) -> bool:
    """True when every record's own-class probability is saturated at 1.

    Under complete separation the unpenalized likelihood has no maximizer;
    the iteration stalls on a plateau where all fitted probabilities have
    reached their limits, which is the practical signature.
    """
    n = Xd.shape[0]
    z = np.concatenate([Xd @ beta.T, np.zeros((n, 1))], axis=1)
    z -= z.max(axis=1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=1, keepdims=True)
    own = probs[np.arange(n), codes]
    return bool(np.all(own > 1.0 - 1e-6))


def logit_classify(model: MultinomialLogit, summaries) -> int:
    return int(logit_classify_batch(model, summaries)[0])


def logit_classify_batch(model: MultinomialLogit, queries) -> np.ndarray:
    Q = _as_matrix(queries, model.coef.shape[1] - 1)
    z = Q @ model.coef[:, :-1].T + model.coef[:, -1]
    scores = np.concatenate([z, np.zeros((Q.shape[0], 1))], axis=1)
    return model.classes[np.argmax(scores, axis=1)]


# ---- local (kernel-weighted) multinomial logit -------------------------------------


@dataclass(frozen=True)
class LocalLogitClassifier:
    k: int
    knn: KnnClassifier          # supplies the MAD metric and neighbor search
    summaries: np.ndarray
    n_models: int


def local_logit_fit(table: ReferenceTable, k: int) -> LocalLogitClassifier:
    if k < table.n_models:
        raise ValueError("k must be at least the number of models")
    return LocalLogitClassifier(int(k), knn_fit(table, int(k)),
                                table.summaries.copy(), table.n_models)


def epanechnikov_weights(distances, bandwidth) -> np.ndarray:
    """max(0, 1 - (d/h)^2); vanishes at the support edge d = h."""
    if bandwidth <= 0:
        return np.zeros_like(distances)
    u = distances / bandwidth
    return np.maximum(0.0, 1.0 - u * u)


def local_logit_classify(c: LocalLogitClassifier, summaries) -> int:
    """Weighted multinomial logit on the k nearest records, read off at the query.

    The bandwidth is the distance to the k-th neighbor; neighbors are
    re-centered at the query so the fitted intercepts give the class
    scores at the query point directly.
    """
    idx, dist = _nearest(c.knn, summaries, c.k)
    idx, dist = idx[0], dist[0]
    lab = c.knn.labels[idx]
    w = epanechnikov_weights(dist, dist[-1])
    if not np.any(w > 0):
        # all k neighbors equidistant: kernel vanishes everywhere, fall
        # back to the unweighted neighborhood majority
        return _majority(lab, c.n_models)
    present = np.unique(lab[w > 0])
    if present.size == 1:
        return int(present[0])
    q = np.asarray(summaries, dtype=np.float64)
    keep = w > 0
    Xn = c.summaries[idx[keep]]
    sub = ReferenceTable(lab[keep], Xn - q, [f"s{j}" for j in range(Xn.shape[1])])
    model = logit_fit(sub, weights=w[keep])
    scores = np.concatenate([model.coef[:, -1], [0.0]])
    return int(model.classes[np.argmax(scores)])


def local_logit_classify_batch(c: LocalLogitClassifier, queries) -> np.ndarray:
    Q = _as_matrix(queries, c.knn.n_raw_features)
    return np.array([local_logit_classify(c, Q[i]) for i in range(Q.shape[0])],
                    dtype=np.int64)


# ---- tuning-parameter calibration --------------------------------------------------


@dataclass(frozen=True)
class CalibrationCurve:
    grid: np.ndarray
    raw_errors: np.ndarray
    smoothed_errors: np.ndarray
    selected_k: int


def _smooth_local_quadratic(grid, errors, window: int = 5):
    """Local quadratic fit over a sliding window of grid points."""
    n = grid.shape[0]
    out = np.empty(n)
    half = window // 2
    for i in range(n):
        lo = max(0, min(i - half, n - window))
        hi = min(n, lo + window)
        ks = grid[lo:hi].astype(np.float64)
        es = errors[lo:hi]
        deg = min(2, ks.size - 1)
        coeffs = np.polyfit(ks, es, deg)
        out[i] = np.polyval(coeffs, grid[i])
    return out


def calibrate_k(family: str, train_table: ReferenceTable,
                validation_table: ReferenceTable, grid) -> CalibrationCurve:
    """Validation error over a k grid, smoothed; selects the smoothed argmin.

    ``family`` is "knn" or "local_logit". The raw error curve is evaluated
    on the validation table; smoothing is a local quadratic fit over a
    5-point sliding window (replaceable strategy).
    """
    grid = np.asarray(sorted(int(k) for k in grid), dtype=np.int64)
    if grid.size == 0:
        raise ValueError("k grid must be non-empty")
    truth = validation_table.models
    raw = np.empty(grid.shape[0])
    if family == "knn":
        c = knn_fit(train_table, int(grid[-1]))
        idx, _ = _nearest(c, validation_table.summaries, int(grid[-1]))
        lab = c.labels[idx]
        for gi, k in enumerate(grid):
            counts = np.stack([(lab[:, :k] == m).sum(axis=1)
                               for m in range(1, c.n_models + 1)], axis=1)
            pred = np.argmax(counts, axis=1) + 1
            raw[gi] = np.mean(pred != truth)
    elif family == "local_logit":
        for gi, k in enumerate(grid):
            c = local_logit_fit(train_table, int(k))
            pred = local_logit_classify_batch(c, validation_table.summaries)
            raw[gi] = np.mean(pred != truth)
    else:
        raise ValueError(f"unknown classifier family {family!r}")
    smoothed = _smooth_local_quadratic(grid, raw)
    return CalibrationCurve(grid, raw, smoothed, int(grid[np.argmin(smoothed)]))
