"""One-parameter exponential families with non-negative support.

Each family is described by a :class:`FamilySpec`.  Densities take the form
``exp(eta*y - A(eta)) h(y)`` with mean ``B(eta) = A'(eta)`` and variance
``B'(eta)``.  Everything except :func:`mean_from_natural`,
:func:`variance`, :func:`log_density` and :func:`log_kernel` is
parameterized by the mean ``x = B(eta)``, which is the state carried by the
time series models.

Natural parameterizations used here:

==============  ====================  =========================
family          eta                   mean B(eta)
==============  ====================  =========================
Poisson         log(lambda)           exp(eta)
NegBinomial(r)  log(1 - p)            r e^eta / (1 - e^eta)
Binomial(m)     logit(p)              m / (1 + e^-eta)
Gamma(kappa)    -1 / scale            -kappa / eta
==============  ====================  =========================
"""

from dataclasses import dataclass
import enum
import math

import numpy as np

from obsdriven import _kernels as K
from obsdriven.exceptions import (
    InfiniteQuantileError,
    InvalidMeanError,
    InvalidObservationError,
    InvalidParameterError,
)

__all__ = [
    "Family",
    "FamilySpec",
    "Support",
    "mean_from_natural",
    "natural_from_mean",
    "variance",
    "variance_of_mean",
    "log_density",
    "log_kernel",
    "cdf",
    "quantile",
    "sample",
]


class Family(str, enum.Enum):
    POISSON = "poisson"
    NEGBINOMIAL = "negbinomial"
    BINOMIAL = "binomial"
    GEOMETRIC = "geometric"
    GAMMA = "gamma"


class Support(str, enum.Enum):
    NONNEGATIVE_INTEGER = "nonnegative_integer"
    NONNEGATIVE_REAL = "nonnegative_real"


_CODES = {
    Family.POISSON: K.POISSON,
    Family.NEGBINOMIAL: K.NEGBIN,
    Family.GEOMETRIC: K.NEGBIN,
    Family.BINOMIAL: K.BINOMIAL,
    Family.GAMMA: K.GAMMA,
}

_NUISANCE_NAME = {
    Family.NEGBINOMIAL: "r",
    Family.BINOMIAL: "m",
    Family.GAMMA: "kappa",
}


@dataclass(frozen=True)
class FamilySpec:
    """A one-parameter family plus its fixed nuisance constant.

    Parameters
    ----------
    kind : Family
        Which family.
    nuisance : float, optional
        ``r`` for negative binomial, ``m`` for binomial, ``kappa`` for gamma.
        Ignored for Poisson; forced to 1 for geometric.
    """

    kind: Family
    nuisance: float | None = None

    def __post_init__(self):
        kind = Family(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Family.POISSON:
            object.__setattr__(self, "nuisance", None)
            return
        if kind is Family.GEOMETRIC:
            object.__setattr__(self, "nuisance", 1.0)
            return
        nu = self.nuisance
        if nu is None or not (nu > 0) or not math.isfinite(nu):
            raise InvalidParameterError(
                f"{_NUISANCE_NAME[kind]} must be a positive finite number, got {nu!r}"
            )
        if kind is Family.BINOMIAL and float(nu) != int(nu):
            raise InvalidParameterError(f"m must be a positive integer, got {nu!r}")
        object.__setattr__(self, "nuisance", float(nu))

    @classmethod
    def poisson(cls):
        return cls(Family.POISSON)

    @classmethod
    def negbinomial(cls, r):
        return cls(Family.NEGBINOMIAL, r)

    @classmethod
    def geometric(cls):
        return cls(Family.GEOMETRIC)

    @classmethod
    def binomial(cls, m):
        return cls(Family.BINOMIAL, m)

    @classmethod
    def gamma(cls, kappa):
        return cls(Family.GAMMA, kappa)

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def nu(self) -> float:
        """Nuisance constant as passed to the kernels (0 when absent)."""
        return 0.0 if self.nuisance is None else self.nuisance

    @property
    def support(self) -> Support:
        if self.kind is Family.GAMMA:
            return Support.NONNEGATIVE_REAL
        return Support.NONNEGATIVE_INTEGER

    @property
    def is_discrete(self) -> bool:
        return self.support is Support.NONNEGATIVE_INTEGER

    @property
    def upper_mean(self) -> float:
        """Supremum of the mean range (m for binomial, inf otherwise)."""
        return self.nuisance if self.kind is Family.BINOMIAL else math.inf

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind in _NUISANCE_NAME:
            out[_NUISANCE_NAME[self.kind]] = self.nuisance
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        kind = Family(d["kind"])
        name = _NUISANCE_NAME.get(kind)
        return cls(kind, d.get(name) if name else None)


def _check_eta(f: FamilySpec, eta: float) -> None:
    if not math.isfinite(eta):
        raise InvalidParameterError(f"natural parameter must be finite, got {eta}")
    if f.code in (K.NEGBIN, K.GAMMA) and not eta < 0:
        raise InvalidParameterError(f"{f.kind.value} natural parameter must be < 0, got {eta}")


def check_mean(f: FamilySpec, x: float) -> None:
    if not K.mean_in_range(f.code, f.nu, float(x)):
        hi = "m" if f.kind is Family.BINOMIAL else "inf"
        raise InvalidMeanError(f"mean {x} outside the range (0, {hi}) of {f.kind.value}")


def check_observations(f: FamilySpec, y) -> np.ndarray:
    """Validate observations against the support; return a float array."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise InvalidObservationError("observations must be finite and non-negative")
    if f.is_discrete:
        if np.any(y != np.floor(y)):
            raise InvalidObservationError(f"{f.kind.value} observations must be integers")
        if f.kind is Family.BINOMIAL and np.any(y > f.nuisance):
            raise InvalidObservationError(f"binomial observations must not exceed m={f.nuisance:g}")
    return y


def mean_from_natural(f: FamilySpec, eta: float) -> float:
    """B(eta), the mean of the family at natural parameter ``eta``."""
    eta = float(eta)
    _check_eta(f, eta)
    return K.mean_of_eta(f.code, f.nu, eta)


def natural_from_mean(f: FamilySpec, x: float) -> float:
    """Inverse mean map B^{-1}(x)."""
    x = float(x)
    check_mean(f, x)
    return K.eta_of_mean(f.code, f.nu, x)


def variance(f: FamilySpec, eta: float) -> float:
    """B'(eta), the variance at natural parameter ``eta``."""
    return K.var_of_mean(f.code, f.nu, mean_from_natural(f, eta))


def variance_of_mean(f: FamilySpec, x):
    """Variance function V(x) = B'(B^{-1}(x)), vectorized over ``x``."""
    x = np.asarray(x, dtype=float)
    nu = f.nu
    if f.code == K.POISSON:
        v = x.copy()
    elif f.code == K.NEGBIN:
        v = x + x * x / nu
    elif f.code == K.BINOMIAL:
        v = x - x * x / nu
    else:
        v = x * x / nu
    return v if v.ndim else float(v)


def log_kernel(f: FamilySpec, eta: float, y: float) -> float:
    """eta*y - A(eta): the log density without the base measure term log h(y).

    This is the per-observation contribution to the model log-likelihood.
    """
    x = mean_from_natural(f, eta)
    y = float(check_observations(f, y))
    return K.log_kernel(f.code, f.nu, x, y)


def log_density(f: FamilySpec, eta: float, y: float) -> float:
    """Full log density (with respect to counting or Lebesgue measure)."""
    x = mean_from_natural(f, eta)
    y = float(check_observations(f, y))
    return K.log_density(f.code, f.nu, x, y)


def _broadcast(x, y):
    xb, yb = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    shape = xb.shape
    return np.ascontiguousarray(xb).ravel(), np.ascontiguousarray(yb).ravel(), shape


def log_density_mean(f: FamilySpec, x, y):
    """Full log density parameterized by the mean, vectorized."""
    xs, ys, shape = _broadcast(x, y)
    for xi in np.unique(xs):
        check_mean(f, xi)
    check_observations(f, ys)
    out = np.empty(xs.size)
    K.log_density_array(f.code, f.nu, xs, ys, out)
    out = out.reshape(shape)
    return out if out.ndim else float(out)


def cdf(f: FamilySpec, x, y):
    """F_x(y) = P(Y <= y) for the family member with mean ``x``.

    Vectorized over ``x`` and ``y``; values below the support give 0.
    """
    xs, ys, shape = _broadcast(x, y)
    for xi in np.unique(xs):
        check_mean(f, xi)
    out = np.empty(xs.size)
    K.cdf_array(f.code, f.nu, xs, ys, out)
    out = out.reshape(shape)
    return out if out.ndim else float(out)


def quantile(f: FamilySpec, x, u):
    """Generalized inverse inf{t >= 0 : F_x(t) >= u}.

    Raises
    ------
    InfiniteQuantileError
        If ``u == 1`` and the support is unbounded.
    """
    xs, us, shape = _broadcast(x, u)
    for xi in np.unique(xs):
        check_mean(f, xi)
    if np.any((us < 0) | (us > 1)) or not np.all(np.isfinite(us)):
        raise InvalidParameterError("quantile levels must lie in [0, 1]")
    if np.any(us == 1.0):
        if f.kind is not Family.BINOMIAL:
            raise InfiniteQuantileError(f"the 1-quantile of {f.kind.value} is infinite")
    out = np.empty(xs.size)
    K.quantile_array(f.code, f.nu, xs, us, out)
    if f.kind is Family.BINOMIAL:
        out[us == 1.0] = f.nuisance
    out = out.reshape(shape)
    return out if out.ndim else float(out)


def sample(f: FamilySpec, x, rng: np.random.Generator, size=None):
    """Draw by inversion: ``quantile(f, x, U)`` with ``U ~ Uniform[0, 1)``."""
    u = rng.random(size if size is not None else np.shape(x))
    return quantile(f, np.broadcast_to(np.asarray(x, dtype=float), np.shape(u)), u)
