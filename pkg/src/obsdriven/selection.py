"""Information criteria, knot placement and knot-count selection for spline dynamics."""

from __future__ import annotations

from dataclasses import dataclass
import enum
import itertools
import math
import warnings

import numpy as np

from obsdriven.data import as_array
from obsdriven.dynamics import ExpAR, Linear, LinearPQ, Spline
from obsdriven.exceptions import (
    FitFailedError,
    InvalidMeanError,
    InvalidParameterError,
    NoValidKnotsError,
    UnsupportedVariantError,
)
from obsdriven.inference import DEFAULT_CONFIG, FitConfig, FitResult, fit_mle
from obsdriven.simulate import ModelSpec, as_generator

__all__ = [
    "ICValues",
    "Placement",
    "Candidate",
    "SelectionResult",
    "aic_bic",
    "knots_by_quantile",
    "knots_by_gridsearch",
    "select_knot_count",
]


@dataclass(frozen=True)
class ICValues:
    aic: float
    bic: float


def aic_bic(loglik: float, p: int, n: int) -> ICValues:
    """``aic = -2 l + 2 p`` and ``bic = -2 l + p log n``."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    if p < 0:
        raise InvalidParameterError("p must be >= 0")
    return ICValues(-2.0 * loglik + 2.0 * p, -2.0 * loglik + p * math.log(n))


def _nearest_rank(sorted_y, q):
    n = sorted_y.size
    rank = int(math.floor((n + 1) * q + 0.5))
    return float(sorted_y[min(max(rank, 1), n) - 1])


def knots_by_quantile(data, K: int) -> np.ndarray:
    """Empirical ``j / (K + 1)`` quantiles, j = 1..K, by nearest rank.

    The rank of the q-quantile is ``round((n + 1) q)`` clipped to [1, n].
    Repeated quantiles (common with small counts) are merged with a warning,
    so fewer than K knots may be returned.
    """
    y = np.sort(as_array(data))
    if K < 0:
        raise InvalidParameterError("K must be >= 0")
    if K == 0:
        return np.empty(0)
    if y.size <= K:
        raise InvalidParameterError(f"need more than {K} observations")
    if y[0] == y[-1]:
        raise NoValidKnotsError("all observations are identical")
    raw = [_nearest_rank(y, j / (K + 1)) for j in range(1, K + 1)]
    knots = np.unique(raw)
    if knots.size < K:
        warnings.warn(f"duplicate quantiles merged: {K} knots requested, {knots.size} kept",
                      UserWarning, stacklevel=2)
    return knots


def _spline_template(model: ModelSpec, knots) -> ModelSpec:
    d = model.dynamics
    if isinstance(d, (ExpAR, LinearPQ)):
        raise UnsupportedVariantError("knot selection needs linear or spline dynamics")
    base = d if isinstance(d, Linear) else Linear(d.delta, d.alpha, d.beta)
    knots = tuple(float(k) for k in knots)
    if not knots:
        return model.with_dynamics(base)
    return model.with_dynamics(Spline(base.delta, base.alpha, base.beta, (0.0,) * len(knots), knots))


def _regime_counts(sorted_y, knots):
    edges = np.searchsorted(sorted_y, knots, side="right")
    return np.diff(np.concatenate(([0], edges, [sorted_y.size])))


def _admissible_placements(y, K, min_per_regime):
    values = np.unique(y)
    sorted_y = np.sort(y)
    for combo in itertools.combinations(values, K):
        if np.all(_regime_counts(sorted_y, combo) >= min_per_regime):
            yield combo


@dataclass
class GridSearchResult:
    knots: np.ndarray
    fit: FitResult
    n_candidates: int
    table: list


def knots_by_gridsearch(model: ModelSpec, data, K: int, cfg: FitConfig = DEFAULT_CONFIG,
                        min_per_regime: int = 30, rng=None) -> GridSearchResult:
    """Exhaustive search over observed values for the likelihood-maximizing knots.

    Each regime ``(xi_{k-1}, xi_k]`` must hold at least ``min_per_regime``
    observations.  Ties keep the lexicographically smaller placement.
    """
    if K not in (1, 2):
        raise InvalidParameterError("grid search supports K = 1 or 2")
    y = as_array(data)
    placements = list(_admissible_placements(y, K, min_per_regime))
    if not placements:
        raise NoValidKnotsError(
            f"no placement of {K} knots leaves {min_per_regime} observations per regime"
        )
    gens = as_generator(rng).spawn(len(placements))
    best, best_fit, table = None, None, []
    for combo, g in zip(placements, gens):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fit = fit_mle(_spline_template(model, combo), y, cfg, g)
        except (FitFailedError, InvalidMeanError):
            table.append({"knots": list(map(float, combo)), "loglik": None})
            continue
        table.append({"knots": list(map(float, combo)), "loglik": fit.loglik})
        if best_fit is None or fit.loglik > best_fit.loglik + 1e-9 * (1.0 + abs(best_fit.loglik)):
            best, best_fit = combo, fit
    if best_fit is None:
        raise FitFailedError("every grid-search fit failed")
    return GridSearchResult(np.asarray(best, dtype=float), best_fit, len(placements), table)


class Placement(str, enum.Enum):
    QUANTILE = "quantile"
    GRID = "grid"


@dataclass
class Candidate:
    K: int
    knots: np.ndarray
    fit: FitResult
    p: int
    aic: float
    bic: float

    def to_dict(self):
        return {
            "K": self.K,
            "knots": self.knots.tolist(),
            "p": self.p,
            "loglik": self.fit.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "converged": self.fit.converged,
            "theta_hat": self.fit.theta_hat.tolist(),
            "std_errors": [None if not math.isfinite(v) else float(v) for v in self.fit.std_errors],
        }


@dataclass
class SelectionResult:
    candidates: list
    chosen_by_aic: int
    chosen_by_bic: int
    placement: Placement
    p_offset: int

    @property
    def aic_choice(self) -> Candidate:
        return self.candidates[self.chosen_by_aic]

    @property
    def bic_choice(self) -> Candidate:
        return self.candidates[self.chosen_by_bic]

    def to_dict(self):
        return {
            "schema_version": 1,
            "placement": self.placement.value,
            "p_offset": self.p_offset,
            "candidates": [c.to_dict() for c in self.candidates],
            "chosen_by_aic": self.chosen_by_aic,
            "chosen_by_bic": self.chosen_by_bic,
        }


def _argmin_first(values):
    best = 0
    for i in range(1, len(values)):
        if values[i] < values[best]:
            best = i
    return best


def select_knot_count(model: ModelSpec, data, K_max: int, cfg: FitConfig = DEFAULT_CONFIG,
                      placement: Placement | str = Placement.QUANTILE, p_offset: int = 0,
                      min_per_regime: int = 30, rng=None) -> SelectionResult:
    """Fit K = 0..K_max knots and pick the AIC and BIC minimizers.

    The parameter count is ``dim(theta) + p_offset``, plus K when knots are
    grid-searched.  Candidates whose fit fails are skipped; ties go to the
    smaller K.
    """
    if K_max < 0:
        raise InvalidParameterError("K_max must be >= 0")
    placement = Placement(placement)
    y = as_array(data)
    gens = as_generator(rng).spawn(K_max + 1)
    cands, errors = [], []
    for K, g in zip(range(K_max + 1), gens):
        try:
            if K == 0:
                knots = np.empty(0)
                fit = fit_mle(_spline_template(model, knots), y, cfg, g)
            elif placement is Placement.QUANTILE:
                knots = knots_by_quantile(y, K)
                fit = fit_mle(_spline_template(model, knots), y, cfg, g)
            else:
                res = knots_by_gridsearch(model, y, K, cfg, min_per_regime, g)
                knots, fit = res.knots, res.fit
        except (FitFailedError, InvalidMeanError, NoValidKnotsError) as exc:
            errors.append(exc)
            continue
        p = fit.n_params + p_offset + (knots.size if placement is Placement.GRID else 0)
        ic = aic_bic(fit.loglik, p, fit.n)
        cands.append(Candidate(K, knots, fit, p, ic.aic, ic.bic))
    if not cands:
        raise FitFailedError("every candidate fit failed", errors=errors)
    return SelectionResult(
        cands,
        _argmin_first([c.aic for c in cands]),
        _argmin_first([c.bic for c in cands]),
        placement,
        p_offset,
    )
