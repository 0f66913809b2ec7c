"""Forward simulation and coupled-chain checks of the stability theory.

Every simulated observation is produced by inversion, ``Y_t = F_{X_t}^{-1}(U_t)``
with ``U_t`` uniform, so two chains fed the same uniforms form the monotone
coupling used by :func:`gmc_estimate` and :func:`mixing_bound_check`.

Random streams
--------------
Functions take a :class:`numpy.random.Generator` (or an integer seed).
Independent sub-streams are derived with :func:`split_rng`, which calls
``SeedSequence.spawn`` on the generator's seed sequence; child ``i`` depends
only on the parent seed and ``i``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import enum
import math
import warnings

import numpy as np

from obsdriven import _kernels as K
from obsdriven.dynamics import (
    LinearPQ,
    check_stationarity,
    dynamics_from_dict,
    unconditional_mean,
)
from obsdriven.expfamily import FamilySpec, check_mean
from obsdriven.exceptions import (
    InvalidParameterError,
    InvalidStateError,
    NonContractingError,
    UndefinedACFError,
    UnsupportedVariantError,
)

__all__ = [
    "InitPolicy",
    "ModelSpec",
    "SimPath",
    "simulate_path",
    "gmc_estimate",
    "mixing_bound_check",
    "acf",
    "batch_means_se",
    "as_generator",
    "split_rng",
    "DEFAULT_BURN_IN",
]

DEFAULT_BURN_IN = 500


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def split_rng(rng, n: int) -> list[np.random.Generator]:
    """``n`` independent child generators of ``rng`` (a Generator or seed)."""
    return as_generator(rng).spawn(n)


class InitKind(str, enum.Enum):
    FIXED = "fixed"
    UNCONDITIONAL_MEAN = "unconditional_mean"
    BURN_IN = "burn_in"


@dataclass(frozen=True)
class InitPolicy:
    """How X_1 is chosen when simulating.

    ``fixed``: X_1 = ``x1``.  ``unconditional_mean``: X_1 is the stationary
    mean (linear models only).  ``burn_in``: start at the lower bound of the
    mean process and discard ``n_burn`` steps.
    """

    kind: InitKind = InitKind.BURN_IN
    x1: float | None = None
    n_burn: int = DEFAULT_BURN_IN

    def __post_init__(self):
        object.__setattr__(self, "kind", InitKind(self.kind))
        if self.kind is InitKind.FIXED and self.x1 is None:
            raise InvalidParameterError("fixed initialization needs x1")
        if self.n_burn < 0:
            raise InvalidParameterError("n_burn must be >= 0")

    @classmethod
    def fixed(cls, x1):
        return cls(InitKind.FIXED, x1=float(x1), n_burn=0)

    @classmethod
    def unconditional_mean(cls):
        return cls(InitKind.UNCONDITIONAL_MEAN, n_burn=0)

    @classmethod
    def burn_in(cls, n_burn=DEFAULT_BURN_IN):
        return cls(InitKind.BURN_IN, n_burn=int(n_burn))

    def to_dict(self):
        out = {"policy": self.kind.value}
        if self.kind is InitKind.FIXED:
            out["x1"] = self.x1
        if self.kind is InitKind.BURN_IN:
            out["n_burn"] = self.n_burn
        return out

    @classmethod
    def from_dict(cls, d):
        kind = InitKind(d.get("policy", "burn_in"))
        if kind is InitKind.FIXED:
            return cls.fixed(d["x1"])
        if kind is InitKind.UNCONDITIONAL_MEAN:
            return cls.unconditional_mean()
        return cls.burn_in(d.get("n_burn", DEFAULT_BURN_IN))


@dataclass(frozen=True)
class ModelSpec:
    family: FamilySpec
    dynamics: object
    init: InitPolicy = field(default_factory=InitPolicy)

    def with_dynamics(self, dynamics) -> "ModelSpec":
        return ModelSpec(self.family, dynamics, self.init)

    def with_family(self, family) -> "ModelSpec":
        return ModelSpec(family, self.dynamics, self.init)

    def to_dict(self):
        return {
            "family": self.family.to_dict(),
            "dynamics": self.dynamics.to_dict(),
            "init": self.init.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        init = InitPolicy.from_dict(d["init"]) if "init" in d else InitPolicy()
        return cls(FamilySpec.from_dict(d["family"]), dynamics_from_dict(d["dynamics"]), init)


@dataclass(frozen=True)
class SimPath:
    """A simulated path; ``x[t]`` is the conditional mean of ``y[t]``."""

    y: np.ndarray
    x: np.ndarray
    seed: int | None = None

    def __len__(self):
        return self.y.size

    def to_csv(self, path, discrete=True):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "y", "x"])
            for t, (yt, xt) in enumerate(zip(self.y, self.x), start=1):
                w.writerow([t, int(yt) if discrete else repr(float(yt)), repr(float(xt))])


def _start_state(model: ModelSpec):
    pol = model.init
    if pol.kind is InitKind.FIXED:
        check_mean(model.family, pol.x1)
        return pol.x1, 0
    if pol.kind is InitKind.UNCONDITIONAL_MEAN:
        return unconditional_mean(model.dynamics), 0
    return model.dynamics.default_start(), pol.n_burn


def _require_contracting(model, force):
    rep = check_stationarity(model.dynamics, model.family)
    if not rep.is_contracting:
        msg = f"dynamics are not contracting ({rep.details})"
        if not force:
            raise NonContractingError(msg)
        warnings.warn(msg + "; simulating anyway", RuntimeWarning, stacklevel=3)
    return rep


def simulate_path(model: ModelSpec, n: int, rng=None, force: bool = False) -> SimPath:
    """Simulate ``n`` observations after the burn-in of ``model.init``.

    Parameters
    ----------
    model : ModelSpec
    n : int
        Number of retained steps.
    rng : Generator or int, optional
        Random stream or seed.  One uniform is consumed per step, burn-in
        included.
    force : bool
        Simulate non-contracting dynamics with a warning instead of raising
        :class:`NonContractingError`.
    """
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = as_generator(rng)
    _require_contracting(model, force)
    x0, n_burn = _start_state(model)
    total = n_burn + int(n)
    u = gen.random(total)
    y = np.empty(total)
    x = np.empty(total)
    f = model.family
    d = model.dynamics
    if isinstance(d, LinearPQ):
        bad = K.simulate_pq(
            f.code, f.nu, d.delta, np.asarray(d.alphas, float), np.asarray(d.betas, float),
            float(x0), u, y, x,
        )
    else:
        code, theta, knots = d.kernel_args()
        bad = K.simulate(f.code, f.nu, code, theta, knots, float(x0), u, y, x)
    if bad:
        raise InvalidStateError(f"conditional mean left the admissible range at step {bad}")
    return SimPath(y[n_burn:].copy(), x[n_burn:].copy(), None if seed is None else int(seed))


@dataclass(frozen=True)
class GMCReport:
    """Coupled-chain contraction estimate.

    ``mean_abs_diff[n]`` estimates E|X_n(x0) - X_n(x0')| for n = 0..n_steps.
    """

    mean_abs_diff: np.ndarray
    se: np.ndarray
    bound: np.ndarray
    contraction: float
    decay_rate: float
    starts: tuple

    @property
    def within_bound(self) -> np.ndarray:
        return self.mean_abs_diff <= self.bound + 3 * self.se

    def to_dict(self):
        return {
            "starts": list(self.starts),
            "contraction": self.contraction,
            "decay_rate": self.decay_rate,
            "log_contraction": math.log(self.contraction) if self.contraction > 0 else None,
            "mean_abs_diff": self.mean_abs_diff.tolist(),
            "se": self.se.tolist(),
            "bound": self.bound.tolist(),
        }


def _log_linear_slope(values):
    n = np.arange(values.size, dtype=float)
    keep = (values > 0) & (n > 0)
    if keep.sum() < 2:
        return -math.inf
    return float(np.polyfit(n[keep], np.log(values[keep]), 1)[0])


def gmc_estimate(model: ModelSpec, n_steps: int, n_rep: int, rng=None, starts=None) -> GMCReport:
    """Estimate E|X_n(x0) - X_n(x0')| by pairs of chains sharing uniforms.

    Parameters
    ----------
    starts : (float, float), optional
        Initial states; defaults to the lower bound of the mean process and
        that value plus 9.
    """
    d = model.dynamics
    if isinstance(d, LinearPQ):
        raise UnsupportedVariantError("coupled chains need a first-order evolution rule")
    rep = check_stationarity(d, model.family)
    if starts is None:
        lo = d.default_start()
        starts = (lo, lo + 9.0)
    xa, xb = (float(s) for s in starts)
    check_mean(model.family, xa)
    check_mean(model.family, xb)
    gen = as_generator(rng)
    u = gen.random((int(n_rep), int(n_steps)))
    out = np.empty((int(n_rep), int(n_steps) + 1))
    f = model.family
    code, theta, knots = d.kernel_args()
    K.coupled_distance(f.code, f.nu, code, theta, knots, xa, xb, u, out)
    mean = out.mean(axis=0)
    se = out.std(axis=0, ddof=1) / math.sqrt(n_rep) if n_rep > 1 else np.zeros_like(mean)
    c = rep.a_coeff + rep.b_coeff
    bound = c ** np.arange(n_steps + 1) * abs(xa - xb)
    return GMCReport(mean, se, bound, c, _log_linear_slope(mean), (xa, xb))


@dataclass(frozen=True)
class MixingReport:
    """Disagreement of coupled observation chains started independently.

    ``disagreement[i]`` estimates P(Y'_n != Y''_n) for n = i + 1, and
    ``tail_sums[i]`` the truncated sum over k >= 0 of P(Y'_{n+k} != Y''_{n+k}).
    """

    disagreement: np.ndarray
    tail_sums: np.ndarray
    tail_se: np.ndarray
    bound: np.ndarray
    contraction: float

    @property
    def holds(self) -> np.ndarray:
        return self.tail_sums <= self.bound + 3 * self.tail_se

    def to_dict(self):
        return {
            "contraction": self.contraction,
            "disagreement": self.disagreement.tolist(),
            "tail_sums": self.tail_sums.tolist(),
            "tail_se": self.tail_se.tolist(),
            "bound": self.bound.tolist(),
            "holds": self.holds.tolist(),
        }


def mixing_bound_check(
    model: ModelSpec, n_steps: int, n_rep: int, rng=None, n_burn: int = DEFAULT_BURN_IN
) -> MixingReport:
    """Check the absolute-regularity bound (a+b)^n / (1 - (a+b)).

    Each pair of chains is burned in on independent streams (approximating
    independent stationary starts) and then driven by shared uniforms.
    """
    f = model.family
    d = model.dynamics
    if not f.is_discrete:
        raise UnsupportedVariantError("the coupling bound applies to discrete families only")
    if isinstance(d, LinearPQ):
        raise UnsupportedVariantError("coupled chains need a first-order evolution rule")
    rep = check_stationarity(d, f)
    c = rep.a_coeff + rep.b_coeff
    gen = as_generator(rng)
    code, theta, knots = d.kernel_args()
    x0 = float(d.default_start())
    n_rep, n_steps = int(n_rep), int(n_steps)
    chunk = max(1, 4_000_000 // (2 * n_burn + n_steps))
    sums = np.zeros(n_steps)
    sq_tail = np.zeros(n_steps)
    tail_acc = np.zeros(n_steps)
    done = 0
    while done < n_rep:
        m = min(chunk, n_rep - done)
        ua = gen.random((m, n_burn))
        ub = gen.random((m, n_burn))
        u = gen.random((m, n_steps))
        out = np.empty((m, n_steps))
        K.coupled_disagreement(f.code, f.nu, code, theta, knots, x0, ua, ub, u, out)
        tails = np.cumsum(out[:, ::-1], axis=1)[:, ::-1]
        sums += out.sum(axis=0)
        tail_acc += tails.sum(axis=0)
        sq_tail += (tails**2).sum(axis=0)
        done += m
    disagreement = sums / n_rep
    tail_mean = tail_acc / n_rep
    var = np.maximum(sq_tail / n_rep - tail_mean**2, 0.0) * n_rep / max(n_rep - 1, 1)
    tail_se = np.sqrt(var / n_rep)
    n_idx = np.arange(1, n_steps + 1)
    bound = c**n_idx / (1 - c) if c < 1 else np.full(n_steps, np.inf)
    return MixingReport(disagreement, tail_mean, tail_se, bound, c)


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 0..max_lag (biased estimator)."""
    y = np.asarray(series, dtype=float)
    n = y.size
    if max_lag < 0 or n <= max_lag:
        raise InvalidParameterError(f"need more than max_lag={max_lag} observations, got {n}")
    z = y - y.mean()
    c0 = float(np.dot(z, z))
    if c0 <= 0:
        raise UndefinedACFError("autocorrelation of a constant series is undefined")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for h in range(1, max_lag + 1):
        out[h] = float(np.dot(z[:-h], z[h:])) / c0
    return out


def batch_means_se(series, n_batches: int = 30) -> float:
    """Standard error of the mean of a dependent series by batch means."""
    y = np.asarray(series, dtype=float)
    if y.size < n_batches:
        raise InvalidParameterError("fewer observations than batches")
    size = y.size // n_batches
    means = y[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))
