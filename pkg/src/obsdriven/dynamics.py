"""Evolution rules for the conditional mean, X_t = g(X_{t-1}, Y_{t-1}).

Four variants are provided:

* :class:`Linear` -- ``delta + alpha*x + beta*y`` (INGARCH(1,1)).
* :class:`LinearPQ` -- INGARCH(p, q) with lag vectors; simulation and
  stationarity only.
* :class:`Spline` -- linear plus ``sum_k beta_k (y - knot_k)^+`` with fixed
  knots.  With no knots it is identical to :class:`Linear`.
* :class:`ExpAR` -- ``(alpha0 + alpha1 exp(-gamma x^2)) x + beta y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from obsdriven import _kernels as K
from obsdriven.expfamily import Family, FamilySpec
from obsdriven.exceptions import (
    InfiniteVarianceError,
    InvalidParameterError,
    InvalidStateError,
    UndefinedMeanError,
    UnsupportedVariantError,
)

__all__ = [
    "Linear",
    "LinearPQ",
    "Spline",
    "ExpAR",
    "StationarityReport",
    "StationaryMoments",
    "Partials",
    "step",
    "check_stationarity",
    "unconditional_mean",
    "stationary_moments",
    "partials",
    "dynamics_from_dict",
]

_EMPTY = np.zeros(0)


def _nonneg(name, v):
    if not (v >= 0) or not math.isfinite(v):
        raise InvalidParameterError(f"{name} must be finite and >= 0, got {v}")


def _pos(name, v):
    if not (v > 0) or not math.isfinite(v):
        raise InvalidParameterError(f"{name} must be finite and > 0, got {v}")


class _Dynamics:
    """Shared behaviour; subclasses are frozen dataclasses."""

    code = K.SPLINE

    @property
    def params(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def param_names(self) -> list[str]:
        raise NotImplementedError

    @property
    def knots_array(self) -> np.ndarray:
        return _EMPTY

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def with_params(self, theta):
        raise NotImplementedError

    def kernel_args(self):
        return self.code, np.ascontiguousarray(self.params, dtype=float), self.knots_array

    def default_start(self) -> float:
        """Initial state for burn-in: the lower bound x* of the mean process."""
        raise NotImplementedError


@dataclass(frozen=True)
class Linear(_Dynamics):
    delta: float
    alpha: float
    beta: float

    def __post_init__(self):
        _pos("delta", self.delta)
        _nonneg("alpha", self.alpha)
        _nonneg("beta", self.beta)

    @property
    def params(self):
        return np.array([self.delta, self.alpha, self.beta], dtype=float)

    @property
    def param_names(self):
        return ["delta", "alpha", "beta"]

    def with_params(self, theta):
        d, a, b = (float(v) for v in theta)
        return Linear(d, a, b)

    def as_spline(self) -> "Spline":
        return Spline(self.delta, self.alpha, self.beta)

    def default_start(self):
        return self.delta / (1.0 - self.alpha) if self.alpha < 1 else self.delta

    def to_dict(self):
        return {"kind": "linear", "delta": self.delta, "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class LinearPQ(_Dynamics):
    delta: float
    alphas: tuple = ()
    betas: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        _pos("delta", self.delta)
        for i, a in enumerate(self.alphas):
            _nonneg(f"alphas[{i}]", a)
        for j, b in enumerate(self.betas):
            _nonneg(f"betas[{j}]", b)

    @property
    def params(self):
        return np.array([self.delta, *self.alphas, *self.betas], dtype=float)

    @property
    def param_names(self):
        return (
            ["delta"]
            + [f"alpha_{i + 1}" for i in range(len(self.alphas))]
            + [f"beta_{j + 1}" for j in range(len(self.betas))]
        )

    def with_params(self, theta):
        theta = [float(v) for v in theta]
        p = len(self.alphas)
        return LinearPQ(theta[0], tuple(theta[1 : 1 + p]), tuple(theta[1 + p :]))

    def kernel_args(self):
        raise UnsupportedVariantError("INGARCH(p, q) has a dedicated simulator and no likelihood")

    def default_start(self):
        sa = sum(self.alphas)
        return self.delta / (1.0 - sa) if sa < 1 else self.delta

    def to_dict(self):
        return {
            "kind": "linear_pq",
            "delta": self.delta,
            "alphas": list(self.alphas),
            "betas": list(self.betas),
        }


@dataclass(frozen=True)
class Spline(_Dynamics):
    delta: float
    alpha: float
    beta: float
    betas: tuple = ()
    knots: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "knots", tuple(float(k) for k in self.knots))
        _pos("delta", self.delta)
        _nonneg("alpha", self.alpha)
        _nonneg("beta", self.beta)
        if len(self.betas) != len(self.knots):
            raise InvalidParameterError("need one slope change per knot")
        for b in self.betas:
            if not math.isfinite(b):
                raise InvalidParameterError("knot slopes must be finite")
        kn = np.asarray(self.knots)
        if kn.size and (kn[0] < 0 or np.any(np.diff(kn) <= 0)):
            raise InvalidParameterError("knots must be non-negative and strictly increasing")

    @property
    def n_knots(self) -> int:
        return len(self.knots)

    @property
    def params(self):
        return np.array([self.delta, self.alpha, self.beta, *self.betas], dtype=float)

    @property
    def param_names(self):
        return ["delta", "alpha", "beta"] + [f"beta_{k + 1}" for k in range(self.n_knots)]

    @property
    def knots_array(self):
        return np.asarray(self.knots, dtype=float)

    def with_params(self, theta):
        theta = [float(v) for v in theta]
        return Spline(theta[0], theta[1], theta[2], tuple(theta[3:]), self.knots)

    def with_knots(self, knots, betas=None) -> "Spline":
        knots = tuple(knots)
        if betas is None:
            betas = (0.0,) * len(knots)
        return Spline(self.delta, self.alpha, self.beta, tuple(betas), knots)

    def default_start(self):
        return self.delta / (1.0 - self.alpha) if self.alpha < 1 else self.delta

    def regime_slopes(self) -> np.ndarray:
        """Slope in y on each regime: beta + sum_{k<=s} beta_k, s = 0..K."""
        return self.beta + np.concatenate([[0.0], np.cumsum(self.betas)])

    def to_dict(self):
        return {
            "kind": "spline",
            "delta": self.delta,
            "alpha": self.alpha,
            "beta": self.beta,
            "betas": list(self.betas),
            "knots": list(self.knots),
        }


@dataclass(frozen=True)
class ExpAR(_Dynamics):
    alpha0: float
    alpha1: float
    gamma: float
    beta: float
    code: int = field(default=K.EXPAR, init=False, repr=False)

    def __post_init__(self):
        for name in ("alpha0", "alpha1", "gamma", "beta"):
            _pos(name, getattr(self, name))

    @property
    def params(self):
        return np.array([self.alpha0, self.alpha1, self.gamma, self.beta], dtype=float)

    @property
    def param_names(self):
        return ["alpha0", "alpha1", "gamma", "beta"]

    def with_params(self, theta):
        return ExpAR(*(float(v) for v in theta))

    def default_start(self):
        # g(0, 0) = 0 is absorbing, so start away from the origin
        return 1.0

    def to_dict(self):
        return {
            "kind": "expar",
            "alpha0": self.alpha0,
            "alpha1": self.alpha1,
            "gamma": self.gamma,
            "beta": self.beta,
        }


def dynamics_from_dict(d: dict):
    kind = d["kind"]
    if kind == "linear":
        return Linear(d["delta"], d["alpha"], d["beta"])
    if kind == "linear_pq":
        return LinearPQ(d["delta"], tuple(d.get("alphas", ())), tuple(d.get("betas", ())))
    if kind == "spline":
        return Spline(
            d["delta"], d["alpha"], d["beta"], tuple(d.get("betas", ())), tuple(d.get("knots", ()))
        )
    if kind == "expar":
        return ExpAR(d["alpha0"], d["alpha1"], d["gamma"], d["beta"])
    raise InvalidParameterError(f"unknown dynamics kind {kind!r}")


def _collapse(d):
    """Zero-knot splines are linear models."""
    if isinstance(d, Spline) and d.n_knots == 0:
        return Linear(d.delta, d.alpha, d.beta)
    return d


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def step(d, x, y) -> float:
    """One application of the evolution rule.

    For :class:`LinearPQ`, ``x`` and ``y`` are sequences of lagged means and
    observations, most recent first.

    Raises
    ------
    InvalidStateError
        If the result is negative.  Zero is returned as is; it is only
        reachable by :class:`ExpAR` at the origin.
    """
    if isinstance(d, LinearPQ):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        ys = np.atleast_1d(np.asarray(y, dtype=float))
        if xs.size < len(d.alphas) or ys.size < len(d.betas):
            raise InvalidParameterError("not enough lags supplied")
        v = d.delta + float(np.dot(d.alphas, xs[: len(d.alphas)]))
        v += float(np.dot(d.betas, ys[: len(d.betas)]))
    else:
        code, theta, knots = d.kernel_args()
        v = K.g_eval(code, theta, knots, float(x), float(y))
    if not v >= 0:
        raise InvalidStateError(f"evolution rule produced a negative mean {v}")
    return v


@dataclass(frozen=True)
class StationarityReport:
    """Outcome of the contraction and finite-variance checks.

    ``clt_ok`` is None where no closed-form sufficient condition is known.
    """

    is_contracting: bool
    a_coeff: float
    b_coeff: float
    clt_ok: bool | None
    details: dict

    def to_dict(self):
        return {
            "is_contracting": self.is_contracting,
            "a_coeff": self.a_coeff,
            "b_coeff": self.b_coeff,
            "clt_ok": self.clt_ok,
            "details": dict(self.details),
        }


def _linear_clt(alpha, beta, f: FamilySpec, contracting):
    phi = alpha + beta
    if f.kind is Family.POISSON:
        return bool(contracting)
    nu = f.nuisance
    return bool(contracting and phi * phi + beta * beta / nu < 1)


def check_stationarity(d, f: FamilySpec | None = None) -> StationarityReport:
    """Contraction condition and finite-variance (CLT) condition.

    The contraction coefficients (a, b) bound
    ``|g(x,y) - g(x',y')| <= a|x-x'| + b|y-y'|``.
    """
    d = _collapse(d)
    details = {}
    clt = None
    if isinstance(d, Linear):
        a, b = d.alpha, d.beta
        details["alpha_plus_beta_lt_1"] = a + b < 1
        contracting = details["alpha_plus_beta_lt_1"]
        if f is not None:
            clt = _linear_clt(a, b, f, contracting)
    elif isinstance(d, LinearPQ):
        a, b = sum(d.alphas), sum(d.betas)
        details["sum_coefficients_lt_1"] = a + b < 1
        contracting = details["sum_coefficients_lt_1"]
    elif isinstance(d, Spline):
        slopes = d.regime_slopes()
        a = d.alpha
        b = float(np.max(np.abs(slopes)))
        details["alpha_plus_beta_lt_1"] = d.alpha + d.beta < 1
        details["regime_slopes_nonnegative"] = bool(np.all(slopes[1:] >= 0))
        details["regime_sums_lt_1"] = bool(np.all(d.alpha + slopes[1:] < 1))
        contracting = all(details.values())
    elif isinstance(d, ExpAR):
        a, b = d.alpha0 + d.alpha1, d.beta
        details["alpha0_alpha1_beta_lt_1"] = a + b < 1
        contracting = details["alpha0_alpha1_beta_lt_1"]
    else:
        raise UnsupportedVariantError(f"unknown dynamics {type(d).__name__}")
    if f is not None and f.kind is Family.BINOMIAL:
        m = f.nuisance
        if isinstance(d, (Linear, Spline)):
            top = K.g_eval(K.SPLINE, d.params, d.knots_array, m, m)
            details["binomial_mean_below_m"] = bool(top <= m)
        elif isinstance(d, LinearPQ):
            details["binomial_mean_below_m"] = bool(d.delta + (a + b) * m <= m)
        else:
            details["binomial_mean_below_m"] = bool((a + b) * m <= m)
        contracting = contracting and details["binomial_mean_below_m"]
    return StationarityReport(bool(contracting), float(a), float(b), clt, details)


def unconditional_mean(d) -> float:
    """Stationary mean delta / (1 - sum(alpha) - sum(beta)) of a linear model."""
    d = _collapse(d)
    if isinstance(d, Linear):
        phi = d.alpha + d.beta
    elif isinstance(d, LinearPQ):
        phi = sum(d.alphas) + sum(d.betas)
    else:
        raise UnsupportedVariantError(
            f"no closed-form stationary mean for {type(d).__name__} dynamics"
        )
    if not phi < 1:
        raise UndefinedMeanError(f"coefficient sum {phi} >= 1: stationary mean is undefined")
    return d.delta / (1.0 - phi)


@dataclass(frozen=True)
class StationaryMoments:
    mean: float
    var_x: float
    var_y: float


def stationary_moments(d, f: FamilySpec) -> StationaryMoments:
    """Closed-form stationary mean and variances of a linear model.

    Derived from ``Var X = alpha^2 Var X + beta^2 Var Y + 2 alpha beta Var X``
    together with ``Var Y = E V(X) + Var X``, where V is the variance
    function of the family.
    """
    d = _collapse(d)
    if not isinstance(d, Linear):
        raise UnsupportedVariantError("closed-form moments exist only for linear dynamics")
    rep = check_stationarity(d, f)
    if not rep.clt_ok:
        raise InfiniteVarianceError("finite-variance condition fails for these coefficients")
    mu = unconditional_mean(d)
    a, b = d.alpha, d.beta
    phi2 = (a + b) ** 2
    kind = f.kind
    if kind is Family.POISSON:
        var_x = b * b * mu / (1 - phi2)
        var_y = mu * (1 - phi2 + b * b) / (1 - phi2)
    elif kind in (Family.NEGBINOMIAL, Family.GEOMETRIC):
        r = f.nuisance
        var_x = b * b * mu * (1 + mu / r) / (1 - phi2 - b * b / r)
        var_y = mu * (1 + mu / r) + var_x * (1 + 1 / r)
    elif kind is Family.BINOMIAL:
        m = f.nuisance
        var_x = b * b * mu * (1 - mu / m) / (1 - phi2 + b * b / m)
        var_y = mu * (1 - mu / m) + var_x * (1 - 1 / m)
    else:
        kappa = f.nuisance
        var_x = (b * b * mu * mu / kappa) / (1 - phi2 - b * b / kappa)
        var_y = (1 / kappa + 1) * var_x + mu * mu / kappa
    return StationaryMoments(mu, var_x, var_y)


@dataclass(frozen=True)
class Partials:
    d_dx: float
    d_dtheta: np.ndarray


def partials(d, x, y) -> Partials:
    """dg/dx and dg/dtheta at (x, y), knots held fixed."""
    if isinstance(d, LinearPQ):
        raise UnsupportedVariantError("partials are not provided for INGARCH(p, q)")
    code, theta, knots = d.kernel_args()
    n = theta.size
    gth = np.zeros(n)
    gx, _ = K.g_derivs(code, theta, knots, float(x), float(y), gth, np.zeros(n), np.zeros((n, n)))
    return Partials(float(gx), gth)
