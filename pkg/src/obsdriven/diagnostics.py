"""Goodness-of-fit tools: Pearson residuals, randomized PIT and scoring rules.

All functions take a model structure, a coefficient vector and the data and
rebuild the one-step predictive means with the same recursion (and the same
fixed X_1) used for fitting.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import stats

from obsdriven import _kernels as K
from obsdriven.data import as_array
from obsdriven.expfamily import FamilySpec, check_observations, variance_of_mean
from obsdriven.exceptions import DegenerateVarianceError, InvalidParameterError, UndefinedACFError
from obsdriven.inference import DEFAULT_CONFIG, FitConfig, fitted_means
from obsdriven.simulate import ModelSpec, acf, as_generator

__all__ = [
    "DiagnosticsReport",
    "KSResult",
    "ScoreSummary",
    "pearson_residuals",
    "pearson_from_means",
    "randomized_pit",
    "pit_from_means",
    "ks_uniform_test",
    "scores",
    "scores_from_means",
    "residual_acf",
    "pit_histogram",
    "diagnose",
]

SCORE_TAIL = 1e-10


def pearson_from_means(family: FamilySpec, x, y) -> np.ndarray:
    """(y - x) / sqrt(V(x)) elementwise."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    v = variance_of_mean(family, x)
    bad = np.flatnonzero(~(v > 0))
    if bad.size:
        raise DegenerateVarianceError(f"zero conditional variance at t={int(bad[0]) + 1}")
    return (y - x) / np.sqrt(v)


def pearson_residuals(model: ModelSpec, theta, data, cfg: FitConfig = DEFAULT_CONFIG):
    """Standardized Pearson residuals e_t = (Y_t - X_t) / sqrt(Var(Y_t | past))."""
    y = as_array(data)
    return pearson_from_means(model.family, fitted_means(model, theta, y, cfg), y)


def pit_from_means(family: FamilySpec, x, y, nu_draws=None) -> np.ndarray:
    """Randomized PIT ``F(y-1) + v * (F(y) - F(y-1))`` for given predictive means.

    For continuous families the plain ``F(y)`` is returned and ``nu_draws``
    is ignored.
    """
    from obsdriven.expfamily import cdf

    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    upper = np.asarray(cdf(family, x, y), dtype=float)
    if not family.is_discrete:
        return np.clip(upper, 0.0, 1.0)
    lower = np.where(y > 0, cdf(family, x, np.maximum(y - 1, 0)), 0.0)
    v = np.asarray(nu_draws, dtype=float)
    return np.clip(lower + v * (upper - lower), 0.0, 1.0)


def randomized_pit(model: ModelSpec, theta, data, rng=None, cfg: FitConfig = DEFAULT_CONFIG):
    y = check_observations(model.family, as_array(data))
    x = fitted_means(model, theta, y, cfg)
    v = as_generator(rng).random(y.size) if model.family.is_discrete else None
    return pit_from_means(model.family, x, y, v)


@dataclass(frozen=True)
class KSResult:
    stat: float
    pvalue: float


def ks_uniform_test(u) -> KSResult:
    """Two-sided Kolmogorov-Smirnov test against U(0, 1).

    The p-value is the asymptotic Kolmogorov survival function at
    ``sqrt(n) * D_n``.
    """
    u = np.asarray(u, dtype=float).ravel()
    if u.size == 0:
        raise InvalidParameterError("need at least one value")
    if np.any(~np.isfinite(u)) or np.any((u < 0) | (u > 1)):
        raise InvalidParameterError("values must lie in [0, 1]")
    res = stats.kstest(u, "uniform", method="asymp")
    return KSResult(float(res.statistic), float(np.clip(res.pvalue, 0.0, 1.0)))


@dataclass(frozen=True)
class ScoreSummary:
    """Mean scores over t = 2..n; ``qs`` and ``rps`` are None for continuous families."""

    ls: float
    qs: float | None
    rps: float | None

    def to_dict(self):
        return {"ls": self.ls, "qs": self.qs, "rps": self.rps}


def score_contributions_from_means(family: FamilySpec, x, y):
    """Per-step (LS, QS, RPS) rows; QS and RPS are NaN for continuous families."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.full((y.size, 3), np.nan)
    for t in range(y.size):
        if family.is_discrete:
            out[t] = K.score_terms(family.code, family.nu, x[t], y[t], SCORE_TAIL)
        else:
            out[t, 0] = -K.log_density(family.code, family.nu, x[t], y[t])
    return out


def scores_from_means(family: FamilySpec, x, y) -> ScoreSummary:
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise InvalidParameterError("scores need n >= 2")
    rows = score_contributions_from_means(family, np.asarray(x)[1:], y[1:])
    mean = rows.mean(axis=0)
    if not family.is_discrete:
        return ScoreSummary(float(mean[0]), None, None)
    return ScoreSummary(*(float(v) for v in mean))


def scores(model: ModelSpec, theta, data, cfg: FitConfig = DEFAULT_CONFIG) -> ScoreSummary:
    """Average LS, QS and RPS of the one-step predictive laws over t = 2..n."""
    y = check_observations(model.family, as_array(data))
    return scores_from_means(model.family, fitted_means(model, theta, y, cfg), y)


def residual_acf(residuals, max_lag: int) -> np.ndarray:
    return acf(residuals, max_lag)


def pit_histogram(pit, n_bins: int = 10):
    """Bin edges and relative frequencies (density scale) of PIT values."""
    pit = np.asarray(pit, dtype=float)
    counts, edges = np.histogram(pit, bins=n_bins, range=(0.0, 1.0))
    density = counts * n_bins / max(pit.size, 1)
    return edges, counts, density


@dataclass
class DiagnosticsReport:
    residuals: np.ndarray
    residual_acf: np.ndarray
    pit: np.ndarray
    ks_stat: float
    ks_pvalue: float
    ls: float
    qs: float | None
    rps: float | None

    def to_dict(self, include_series=False):
        out = {
            "schema_version": 1,
            "n": int(self.residuals.size),
            "residual_mean": float(np.mean(self.residuals)),
            "residual_variance": float(np.var(self.residuals, ddof=1)) if self.residuals.size > 1 else None,
            "residual_acf": [None if math.isnan(v) else float(v) for v in self.residual_acf],
            "ks_stat": self.ks_stat,
            "ks_pvalue": self.ks_pvalue,
            "ls": self.ls,
            "qs": self.qs,
            "rps": self.rps,
        }
        if include_series:
            out["residuals"] = self.residuals.tolist()
            out["pit"] = self.pit.tolist()
        return out


def diagnose(model: ModelSpec, theta, data, rng=None, max_lag: int = 20,
             cfg: FitConfig = DEFAULT_CONFIG) -> DiagnosticsReport:
    """Residuals, PIT/KS and scores in one pass over the fitted means."""
    f = model.family
    y = check_observations(f, as_array(data))
    x = fitted_means(model, theta, y, cfg)
    e = pearson_from_means(f, x, y)
    v = as_generator(rng).random(y.size) if f.is_discrete else None
    u = pit_from_means(f, x, y, v)
    ks = ks_uniform_test(u)
    sc = scores_from_means(f, x, y)
    lag = min(max_lag, y.size - 1)
    try:
        r = residual_acf(e, lag)
    except UndefinedACFError:
        r = np.full(lag + 1, math.nan)
    return DiagnosticsReport(e, r, u, ks.stat, ks.pvalue, sc.ls, sc.qs, sc.rps)
