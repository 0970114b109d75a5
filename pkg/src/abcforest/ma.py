"""MA(1) versus MA(2) benchmark with an exactly solvable posterior.

The two competing models for a length-T series are

    MA(1):  x_t = e_t - theta1 * e_{t-1}
    MA(2):  x_t = e_t - theta1 * e_{t-1} - theta2 * e_{t-2}

with e_t i.i.d. N(0, sigma^2) and uniform priors on the stationarity
(invertibility) domains: theta1 in (-1, 1) for MA(1), and for MA(2) the
triangle theta1 + theta2 < 1, theta1 - theta2 > -1, theta2 > -1 (vertices
(0,1), (-2,-1), (2,-1); area 4).

Because the process is Gaussian with a banded Toeplitz covariance
(gamma0 = sigma^2 (1 + theta1^2 + theta2^2), gamma1 = sigma^2 (-theta1 +
theta1 theta2), gamma2 = -sigma^2 theta2, zero beyond lag 2), the marginal
likelihood of each model is a 1- or 2-dimensional integral that Gauss-
Legendre quadrature evaluates to high accuracy, giving a ground-truth
posterior oracle for every classifier in the package.

Time series are plain 1-D float arrays throughout this module.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit
from numpy.polynomial.legendre import leggauss
from scipy.special import logsumexp

from .data import ReferenceTable
from .errors import DegenerateInputError, NumericError
from .seeding import derive_seed, rng_for

_LOG2PI = math.log(2.0 * math.pi)

# MA(2) prior triangle: A is the apex, B-C the theta2 = -1 base
_TRI_A = (0.0, 1.0)
_TRI_B = (-2.0, -1.0)
_TRI_C = (2.0, -1.0)
TRIANGLE_AREA = 4.0


@dataclass(frozen=True)
class ToyConfig:
    """Benchmark dimensions: series length, noise scale, summary count."""

    series_length: int = 100
    noise_sd: float = 1.0
    n_lags: int = 7
    quad_nodes_ma1: int = 256
    quad_nodes_ma2: int = 128

    def __post_init__(self):
        if self.series_length < self.n_lags + 1:
            raise ValueError("series_length must exceed n_lags")
        if self.noise_sd <= 0:
            raise ValueError("noise_sd must be positive")


def in_ma1_support(theta1: float) -> bool:
    return -1.0 < theta1 < 1.0


def in_ma2_support(theta1: float, theta2: float) -> bool:
    return theta1 + theta2 < 1.0 and theta1 - theta2 > -1.0 and theta2 > -1.0


@dataclass(frozen=True)
class MaParams:
    """Moving-average coefficients; theta2 is 0 for order 1."""

    order: int
    theta1: float
    theta2: float = 0.0

    def __post_init__(self):
        if self.order == 1:
            if self.theta2 != 0.0:
                raise ValueError("order-1 parameters must have theta2 = 0")
            if not in_ma1_support(self.theta1):
                raise ValueError(f"theta1={self.theta1} outside (-1, 1)")
        elif self.order == 2:
            if not in_ma2_support(self.theta1, self.theta2):
                raise ValueError(
                    f"({self.theta1}, {self.theta2}) outside the prior triangle")
        else:
            raise ValueError(f"order must be 1 or 2, got {self.order}")


@dataclass(frozen=True)
class ExactPosterior:
    """Quadrature model posteriors; the ground-truth oracle."""

    p_ma1: float
    p_ma2: float
    log_marginal_1: float
    log_marginal_2: float
    refinement_gap: float | None = None

    @property
    def converged(self) -> bool:
        """False when halving the quadrature step moved the answer by > 1e-4."""
        return self.refinement_gap is None or self.refinement_gap <= 1e-4


# ---- sampling and simulation -----------------------------------------------------


def _sample_triangle(rng, n):
    """Uniform draws over the MA(2) prior triangle (affine map of a unit square half)."""
    u1 = rng.random(n)
    u2 = rng.random(n)
    flip = u1 + u2 > 1.0
    u1[flip] = 1.0 - u1[flip]
    u2[flip] = 1.0 - u2[flip]
    t1 = _TRI_A[0] + u1 * (_TRI_B[0] - _TRI_A[0]) + u2 * (_TRI_C[0] - _TRI_A[0])
    t2 = _TRI_A[1] + u1 * (_TRI_B[1] - _TRI_A[1]) + u2 * (_TRI_C[1] - _TRI_A[1])
    return t1, t2


def sample_prior(model: int, seed: int) -> MaParams:
    """One draw from the parameter prior of the given model."""
    rng = rng_for(seed, "prior", model)
    if model == 1:
        return MaParams(1, float(rng.uniform(-1.0, 1.0)))
    if model == 2:
        t1, t2 = _sample_triangle(rng, 1)
        return MaParams(2, float(t1[0]), float(t2[0]))
    raise ValueError(f"model must be 1 or 2, got {model}")


def _simulate_batch(theta1, theta2, T, sigma, rng):
    """Rows x_i = MA series with stationary warm start (two extra noise draws)."""
    n = theta1.shape[0]
    e = rng.standard_normal((n, T + 2)) * sigma
    return e[:, 2:] - theta1[:, None] * e[:, 1:-1] - theta2[:, None] * e[:, :-2]


def simulate(params: MaParams, config: ToyConfig, seed: int) -> np.ndarray:
    """One series of length config.series_length under the given parameters."""
    rng = rng_for(seed, "simulate")
    t1 = np.array([params.theta1])
    t2 = np.array([params.theta2])
    return _simulate_batch(t1, t2, config.series_length, config.noise_sd, rng)[0]


AUTOCORRELATION = "autocorrelation"
AUTOCOVARIANCE = "autocovariance"


def summarize_batch(series: np.ndarray, n_lags: int,
                    kind: str = AUTOCORRELATION) -> np.ndarray:
    """Per-row summary vectors: lags 1..n_lags, biased (1/T) normalization.

    ``autocorrelation`` gives the standard sample ACF, bounded in [-1, 1].
    ``autocovariance`` skips the variance normalization, so the summaries
    keep the scale of the series; the built-in benchmark uses that flavor
    because the process variance separates the models and correlations
    discard it.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a (n, T) series matrix")
    T = x.shape[1]
    if n_lags >= T:
        raise ValueError("n_lags must be smaller than the series length")
    xc = x - x.mean(axis=1, keepdims=True)
    if kind == AUTOCORRELATION:
        denom = np.einsum("ij,ij->i", xc, xc)
        if np.any(denom == 0.0):
            raise DegenerateInputError("constant series has no autocorrelations")
    elif kind == AUTOCOVARIANCE:
        denom = np.full(x.shape[0], float(T))
    else:
        raise ValueError(f"unknown summary kind {kind!r}")
    out = np.empty((x.shape[0], n_lags))
    for k in range(1, n_lags + 1):
        out[:, k - 1] = np.einsum("ij,ij->i", xc[:, :-k], xc[:, k:]) / denom
    return out


def summarize(series: np.ndarray, n_lags: int,
              kind: str = AUTOCORRELATION) -> np.ndarray:
    """Summary vector of one series: its first n_lags sample autocorrelations."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-D series")
    return summarize_batch(x.reshape(1, -1), n_lags, kind)[0]


def summary_prefix(kind: str) -> str:
    """Column-name prefix announcing the summary flavor of a table."""
    return {AUTOCORRELATION: "acf", AUTOCOVARIANCE: "acov"}[kind]


def summary_kind_of(table: ReferenceTable) -> str:
    """Infer the summary flavor a toy table was generated with."""
    if table.summary_names and table.summary_names[0].startswith("acov"):
        return AUTOCOVARIANCE
    return AUTOCORRELATION


# ---- exact Gaussian likelihood ----------------------------------------------------


@njit(cache=True, nogil=True)
def _factor_grid(t1, t2, sigma2, T, L0, L1, L2, logdet):
    """Banded (bandwidth-2) Cholesky of the MA covariance at each grid point.

    Returns 0 on success, 1 + the failing grid index on loss of positive
    definiteness.
    """
    G = t1.shape[0]
    for g in range(G):
        a1 = t1[g]
        a2 = t2[g]
        g0 = sigma2 * (1.0 + a1 * a1 + a2 * a2)
        g1 = sigma2 * (-a1 + a1 * a2)
        g2 = sigma2 * (-a2)
        ld = 0.0
        l0_p = 0.0
        l1_p = 0.0
        l0_pp = 0.0
        for i in range(T):
            l2 = g2 / l0_pp if i >= 2 else 0.0
            l1 = (g1 - l2 * l1_p) / l0_p if i >= 1 else 0.0
            d = g0 - l1 * l1 - l2 * l2
            if d <= 0.0:
                return 1 + g
            l0 = np.sqrt(d)
            ld += np.log(l0)
            L0[g, i] = l0
            L1[g, i] = l1
            L2[g, i] = l2
            l0_pp = l0_p
            l1_p = l1
            l0_p = l0
        logdet[g] = ld
    return 0


@njit(cache=True, nogil=True)
def _loglik_grid(x, L0, L1, L2, logdet, out):
    """Gaussian log-density of one series at every factored grid point."""
    T = x.shape[0]
    G = L0.shape[0]
    half_t_log2pi = 0.5 * T * _LOG2PI
    for g in range(G):
        q = 0.0
        z_p = 0.0
        z_pp = 0.0
        for i in range(T):
            z = (x[i] - L1[g, i] * z_p - L2[g, i] * z_pp) / L0[g, i]
            q += z * z
            z_pp = z_p
            z_p = z
        out[g] = -0.5 * q - logdet[g] - half_t_log2pi


class _Quadrature:
    """Gauss-Legendre grids over both priors, with cached Cholesky factors.

    The MA(2) triangle is integrated by mapping the unit square onto it
    with the Duffy transform collapsing the square's u=0 edge onto the
    apex (Jacobian 8u, prior density 1/4).
    """

    def __init__(self, config: ToyConfig, scale: int = 1):
        n1 = config.quad_nodes_ma1 * scale
        n2 = config.quad_nodes_ma2 * scale
        T = config.series_length
        sigma2 = config.noise_sd ** 2

        xn, wn = leggauss(n1)
        self.t1_m1 = xn.copy()
        self.t2_m1 = np.zeros(n1)
        self.logc_m1 = np.log(wn * 0.5)

        xu, wu = leggauss(n2)
        u = 0.5 * (xu + 1.0)
        w = 0.5 * wu
        U, V = np.meshgrid(u, u, indexing="ij")
        WU, WV = np.meshgrid(w, w, indexing="ij")
        t1 = (_TRI_A[0] + U * ((1 - V) * (_TRI_B[0] - _TRI_A[0])
                               + V * (_TRI_C[0] - _TRI_A[0])))
        t2 = (_TRI_A[1] + U * ((1 - V) * (_TRI_B[1] - _TRI_A[1])
                               + V * (_TRI_C[1] - _TRI_A[1])))
        self.t1_m2 = t1.ravel()
        self.t2_m2 = t2.ravel()
        self.logc_m2 = np.log(WU * WV * 2.0 * U).ravel()

        self._factors = {}
        for tag, (a, b) in (("m1", (self.t1_m1, self.t2_m1)),
                            ("m2", (self.t1_m2, self.t2_m2))):
            G = a.shape[0]
            L0 = np.empty((G, T))
            L1 = np.empty((G, T))
            L2 = np.empty((G, T))
            logdet = np.empty(G)
            bad = _factor_grid(a, b, sigma2, T, L0, L1, L2, logdet)
            if bad:
                raise NumericError(
                    f"MA covariance lost positive definiteness at grid point {bad - 1}")
            self._factors[tag] = (L0, L1, L2, logdet)

    def log_marginals(self, x: np.ndarray) -> tuple[float, float]:
        out = []
        for tag, logc in (("m1", self.logc_m1), ("m2", self.logc_m2)):
            L0, L1, L2, logdet = self._factors[tag]
            ll = np.empty(L0.shape[0])
            _loglik_grid(x, L0, L1, L2, logdet, ll)
            out.append(float(logsumexp(ll + logc)))
        return out[0], out[1]


_QUAD_CACHE: dict[tuple, _Quadrature] = {}


def _quadrature(config: ToyConfig, scale: int = 1) -> _Quadrature:
    key = (config.series_length, config.noise_sd, config.quad_nodes_ma1,
           config.quad_nodes_ma2, scale)
    if key not in _QUAD_CACHE:
        _QUAD_CACHE[key] = _Quadrature(config, scale)
    return _QUAD_CACHE[key]


def log_likelihood(series: np.ndarray, params: MaParams, config: ToyConfig) -> float:
    """Exact zero-mean Gaussian log-density under the banded MA covariance."""
    x = np.ascontiguousarray(series, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != config.series_length:
        raise ValueError(f"expected a series of length {config.series_length}")
    T = x.shape[0]
    t1 = np.array([params.theta1])
    t2 = np.array([params.theta2])
    L0 = np.empty((1, T))
    L1 = np.empty((1, T))
    L2 = np.empty((1, T))
    logdet = np.empty(1)
    bad = _factor_grid(t1, t2, config.noise_sd ** 2, T, L0, L1, L2, logdet)
    if bad:
        raise NumericError("MA covariance is not positive definite at these parameters")
    out = np.empty(1)
    _loglik_grid(x, L0, L1, L2, logdet, out)
    return float(out[0])


def _posterior_from_marginals(lm1: float, lm2: float) -> tuple[float, float]:
    p1 = 1.0 / (1.0 + math.exp(min(lm2 - lm1, 700.0)))
    return p1, 1.0 - p1


def exact_posterior(series: np.ndarray, config: ToyConfig,
                    check_refinement: bool = True) -> ExactPosterior:
    """Model posteriors by deterministic quadrature (uniform model prior).

    With ``check_refinement`` the integrals are recomputed at double
    resolution; the posterior shift is carried in ``refinement_gap`` and
    flags non-convergence through :attr:`ExactPosterior.converged`.
    """
    x = np.ascontiguousarray(series, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != config.series_length:
        raise ValueError(f"expected a series of length {config.series_length}")
    lm1, lm2 = _quadrature(config).log_marginals(x)
    p1, p2 = _posterior_from_marginals(lm1, lm2)
    gap = None
    if check_refinement:
        hm1, hm2 = _quadrature(config, scale=2).log_marginals(x)
        h1, _ = _posterior_from_marginals(hm1, hm2)
        gap = abs(p1 - h1)
    return ExactPosterior(p1, p2, lm1, lm2, gap)


def exact_posterior_batch(series: np.ndarray, config: ToyConfig,
                          check_refinement: bool = False,
                          threads: int = 1) -> list[ExactPosterior]:
    """exact_posterior over the rows of a series matrix (thread-parallel).

    Refinement checking defaults off here: batch callers (oracle error
    rates, discrepancy experiments) pay a 5x node count for it, and the
    per-series contract is unchanged when enabled.
    """
    X = np.ascontiguousarray(series, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a (n, T) series matrix")
    _quadrature(config)
    if check_refinement:
        _quadrature(config, scale=2)

    def work(i):
        return exact_posterior(X[i], config, check_refinement)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, range(X.shape[0])))
    return [work(i) for i in range(X.shape[0])]


def bayes_classify_batch(series: np.ndarray, config: ToyConfig,
                         threads: int = 1) -> np.ndarray:
    """MAP model per series from the exact posterior; ties go to model 1."""
    posts = exact_posterior_batch(series, config, threads=threads)
    return np.array([1 if p.p_ma1 >= 0.5 else 2 for p in posts], dtype=np.int64)


# ---- reference-table generation ---------------------------------------------------


@dataclass(frozen=True)
class ToyDataset:
    """A simulated prior-predictive sample with the raw series retained."""

    models: np.ndarray       # (n,) 1-based
    params: np.ndarray       # (n, 2) theta1, theta2 (0 for order 1)
    series: np.ndarray       # (n, T)
    config: ToyConfig

    def table(self, n_lags: int | None = None,
              kind: str = AUTOCORRELATION) -> ReferenceTable:
        L = self.config.n_lags if n_lags is None else int(n_lags)
        summ = summarize_batch(self.series, L, kind)
        prefix = summary_prefix(kind)
        names = [f"{prefix}{k}" for k in range(1, L + 1)]
        return ReferenceTable(self.models, summ, names, self.params,
                              ["theta1", "theta2"], n_models=2)


def generate_dataset(n: int, config: ToyConfig, seed: int) -> ToyDataset:
    """Draw n records i.i.d. from the prior predictive (uniform model prior).

    One vectorized pass with a fixed draw layout, so a seed fully
    determines the dataset regardless of execution environment.
    """
    if n <= 0:
        raise ValueError("record count must be positive")
    rng = rng_for(seed, "toy-table")
    models = rng.integers(1, 3, size=n)
    t1_m1 = rng.uniform(-1.0, 1.0, size=n)
    t1_m2, t2_m2 = _sample_triangle(rng, n)
    theta1 = np.where(models == 1, t1_m1, t1_m2)
    theta2 = np.where(models == 1, 0.0, t2_m2)
    series = _simulate_batch(theta1, theta2, config.series_length,
                             config.noise_sd, rng)
    params = np.column_stack([theta1, theta2])
    return ToyDataset(models, params, series, config)


def generate_table(n: int, config: ToyConfig, seed: int,
                   n_lags: int | None = None,
                   kind: str = AUTOCORRELATION) -> ReferenceTable:
    """Reference table of n prior-predictive records (summaries only)."""
    return generate_dataset(n, config, seed).table(n_lags, kind)


# ---- summary-based posterior (kernel smoothing) -----------------------------------


def _silverman_bandwidths(pool: np.ndarray) -> np.ndarray:
    n, d = pool.shape
    factor = (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * n ** (-1.0 / (d + 4.0))
    sd = pool.std(axis=0)
    if np.any(sd == 0.0):
        raise DegenerateInputError("pool has a zero-variance summary column")
    return factor * sd


def summary_posterior_batch(queries: np.ndarray, pool: ReferenceTable) -> np.ndarray:
    """P(model = 2 | summaries) by Nadaraya-Watson regression on the pool.

    Gaussian product kernel with per-dimension Silverman bandwidths.
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    S = pool.summaries
    if Q.shape[1] != S.shape[1]:
        raise ValueError(
            f"query width {Q.shape[1]} does not match pool width {S.shape[1]}")
    h = _silverman_bandwidths(S)
    Sh = S / h
    Qh = Q / h
    ind2 = (pool.models == 2).astype(np.float64)
    ones = np.ones_like(ind2)
    out = np.empty(Q.shape[0])
    chunk = max(1, int(2e7 // max(S.shape[0], 1)))
    for a in range(0, Q.shape[0], chunk):
        q = Qh[a:a + chunk]
        expo = -0.5 * ((q[:, None, :] - Sh[None, :, :]) ** 2).sum(axis=2)
        mx = expo.max(axis=1)
        if np.any(mx < -745.0):
            raise DegenerateInputError(
                "all kernel weights underflow; observed point too far from the pool")
        w = np.exp(expo - mx[:, None])
        # same reduction kernel for both sums, so a one-label pool gives
        # exactly 0 or 1
        out[a:a + chunk] = (w @ ind2) / (w @ ones)
    return np.clip(out, 0.0, 1.0)


def summary_posterior(series: np.ndarray, pool: ReferenceTable,
                      n_lags: int = 2) -> float:
    """Kernel-smoothed P(model = 2) given only the first n_lags autocorrelations."""
    if pool.n_summaries != n_lags:
        raise ValueError(
            f"pool carries {pool.n_summaries} summaries, expected {n_lags}")
    q = summarize(series, n_lags)
    return float(summary_posterior_batch(q.reshape(1, -1), pool)[0])


# ---- discrepancy experiment -------------------------------------------------------


@dataclass(frozen=True)
class DiscrepancyResult:
    """Paired posteriors of MA(2): exact (whole data) vs 2-lag kernel estimate."""

    models: np.ndarray
    exact_p2: np.ndarray
    summary_p2: np.ndarray


def discrepancy_experiment(n_series: int, pool_size: int, config: ToyConfig,
                           seed: int, threads: int = 1,
                           kind: str = AUTOCOVARIANCE) -> DiscrepancyResult:
    """Fresh prior-predictive series scored by both posterior routes.

    The whole-data posterior comes from quadrature; the summary-based one
    from kernel regression of the model indicator on the first two
    lag summaries over a dedicated prior-predictive pool.
    """
    pool = generate_table(pool_size, config, derive_seed(seed, "discrepancy", "pool"),
                          n_lags=2, kind=kind)
    data = generate_dataset(n_series, config, derive_seed(seed, "discrepancy", "series"))
    exact = exact_posterior_batch(data.series, config, threads=threads)
    exact_p2 = np.array([p.p_ma2 for p in exact])
    queries = summarize_batch(data.series, 2, kind)
    summ_p2 = summary_posterior_batch(queries, pool)
    return DiscrepancyResult(data.models, exact_p2, summ_p2)
