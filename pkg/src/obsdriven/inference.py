"""Conditional maximum likelihood for observation-driven models.

The log-likelihood drops the base measure: ``l(theta) = sum_t eta_t Y_t -
A(eta_t)`` with ``eta_t = B^{-1}(X_t(theta))``.  Derivatives are carried in
mean space.  With V the variance function of the family,

    dl_t/dtheta = (Y_t - X_t) / V(X_t) * dX_t/dtheta

and ``dX_t/dtheta`` (and its second derivative) follow from differentiating
the evolution rule, starting from zero because X_1 is held fixed.  The
plug-in information ``sum_t dX_t dX_t^T / V(X_t)`` estimates n times the
asymptotic precision.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import linalg

from obsdriven import _kernels as K
from obsdriven.data import as_array
from obsdriven.dynamics import ExpAR, Linear, LinearPQ, Spline
from obsdriven.expfamily import Family, check_observations
from obsdriven.exceptions import (
    FitFailedError,
    InvalidMeanError,
    InvalidParameterError,
    RankDeficientError,
    UnsupportedVariantError,
)
from obsdriven.simulate import ModelSpec, acf, as_generator

__all__ = [
    "FitConfig",
    "FitResult",
    "ProfileResult",
    "loglik",
    "score",
    "hessian",
    "information",
    "score_contributions",
    "fitted_means",
    "fit_mle",
    "asymptotic_covariance",
    "profile_r",
]


@dataclass(frozen=True)
class FitConfig:
    """Optimizer and parameter-space settings.

    Parameters
    ----------
    init_theta : sequence of float, optional
        Starting value; method-of-moments when omitted.
    x1_policy : "sample_mean" or float
        Fixed initial conditional mean.
    max_iter : int
    grad_tol : float
        Convergence threshold on the sup-norm of the projected score over n.
    epsilon : float
        Margin in ``epsilon <= alpha + beta <= 1 - epsilon``.
    delta_bounds : (float, float)
        Box for the intercept.
    n_starts : int
        Number of multistart initial values (the first is unperturbed).
    threads : int
        Worker threads for multistart.
    """

    init_theta: tuple | None = None
    x1_policy: str | float = "sample_mean"
    max_iter: int = 200
    grad_tol: float = 1e-8
    epsilon: float = 1e-4
    delta_bounds: tuple = (1e-6, math.inf)
    n_starts: int = 5
    threads: int = 1

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise InvalidParameterError("grad_tol must be positive")
        if not 0 < self.epsilon < 0.5:
            raise InvalidParameterError("epsilon must be in (0, 0.5)")
        lo, hi = self.delta_bounds
        if not 0 < lo <= hi:
            raise InvalidParameterError("delta bounds must satisfy 0 < lower <= upper")
        if self.n_starts < 1 or self.max_iter < 1:
            raise InvalidParameterError("n_starts and max_iter must be >= 1")
        if not (self.x1_policy == "sample_mean" or isinstance(self.x1_policy, (int, float))):
            raise InvalidParameterError("x1_policy must be 'sample_mean' or a number")

    def to_dict(self):
        return {
            "init_theta": None if self.init_theta is None else list(self.init_theta),
            "x1_policy": self.x1_policy,
            "max_iter": self.max_iter,
            "grad_tol": self.grad_tol,
            "epsilon": self.epsilon,
            "delta_bounds": [self.delta_bounds[0], _json_float(self.delta_bounds[1])],
            "n_starts": self.n_starts,
            "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "delta_bounds" in d:
            lo, hi = d["delta_bounds"]
            d["delta_bounds"] = (float(lo), math.inf if hi is None else float(hi))
        if d.get("init_theta") is not None:
            d["init_theta"] = tuple(d["init_theta"])
        return cls(**d)


def _json_float(v):
    return None if v is None or not math.isfinite(v) else float(v)


DEFAULT_CONFIG = FitConfig()


# ---------------------------------------------------------------------------
# likelihood recursions
# ---------------------------------------------------------------------------


def _resolve_x1(y, cfg):
    if cfg.x1_policy == "sample_mean":
        return float(y.mean()) if y.size else 1.0
    return float(cfg.x1_policy)


@dataclass
class _Eval:
    ll: float
    bad: int
    grad: np.ndarray
    hess: np.ndarray
    info: np.ndarray
    xs: np.ndarray
    steps: np.ndarray


class _Recursion:
    """Bound likelihood evaluator for one (model structure, data) pair."""

    def __init__(self, model: ModelSpec, y, cfg: FitConfig):
        if isinstance(model.dynamics, LinearPQ):
            raise UnsupportedVariantError("likelihood inference is not provided for INGARCH(p, q)")
        f = model.family
        self.fam = f.code
        self.nu = f.nu
        self.dyn, theta, self.knots = model.dynamics.kernel_args()
        self.d = theta.size
        self.y = check_observations(f, as_array(y))
        self.n = self.y.size
        self.x1 = _resolve_x1(self.y, cfg)

    def __call__(self, theta, order=0, steps=False) -> _Eval:
        theta = np.ascontiguousarray(theta, dtype=float)
        if theta.size != self.d:
            raise InvalidParameterError(f"expected {self.d} parameters, got {theta.size}")
        d, n = self.d, self.n
        grad = np.zeros(d)
        hess = np.zeros((d, d))
        info = np.zeros((d, d))
        xs = np.zeros(n)
        st = np.zeros((n if steps else 0, d))
        ll, bad = K.recursion(
            self.fam, self.nu, self.dyn, theta, self.knots, self.y, self.x1, order,
            xs, grad, hess, info, st,
        )
        return _Eval(ll, bad, grad, hess, info, xs, st)

    def checked(self, theta, order=0, steps=False) -> _Eval:
        ev = self(theta, order, steps)
        if ev.bad:
            raise InvalidMeanError(
                f"conditional mean left the range of the mean function at t={ev.bad}", t=ev.bad
            )
        return ev


def _theta_of(model, theta):
    return model.dynamics.params if theta is None else np.asarray(theta, dtype=float)


def loglik(model: ModelSpec, theta, data, cfg: FitConfig = DEFAULT_CONFIG) -> float:
    """Conditional log-likelihood without the log h(y) terms.

    ``theta=None`` evaluates at the coefficients stored in ``model``.
    """
    rec = _Recursion(model, data, cfg)
    return rec.checked(_theta_of(model, theta), 0).ll


def score(model: ModelSpec, theta, data, cfg: FitConfig = DEFAULT_CONFIG) -> np.ndarray:
    rec = _Recursion(model, data, cfg)
    return rec.checked(_theta_of(model, theta), 1).grad


def hessian(model: ModelSpec, theta, data, cfg: FitConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Analytic Hessian from the second-derivative recursion.

    The recursion builds each term symmetrically, so no symmetrization is
    applied; asymmetry is at the level of rounding.
    """
    rec = _Recursion(model, data, cfg)
    return rec.checked(_theta_of(model, theta), 2).hess


def information(model: ModelSpec, theta, data, cfg: FitConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Plug-in information sum_t dX_t dX_t^T / V(X_t)."""
    rec = _Recursion(model, data, cfg)
    return rec.checked(_theta_of(model, theta), 1).info


def score_contributions(model: ModelSpec, theta, data, cfg: FitConfig = DEFAULT_CONFIG):
    """Per-step score increments, an (n, d) array whose column sums are the score."""
    rec = _Recursion(model, data, cfg)
    return rec.checked(_theta_of(model, theta), 1, steps=True).steps


def fitted_means(model: ModelSpec, theta, data, cfg: FitConfig = DEFAULT_CONFIG) -> np.ndarray:
    rec = _Recursion(model, data, cfg)
    return rec.checked(_theta_of(model, theta), 0).xs


# ---------------------------------------------------------------------------
# parameter space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Constraints:
    """Linear inequalities ``C @ theta <= b`` with readable names."""

    C: np.ndarray
    b: np.ndarray
    names: list


def _build_constraints(model: ModelSpec, cfg: FitConfig) -> _Constraints:
    d = model.dynamics
    f = model.family
    eps = cfg.epsilon
    rows, rhs, names = [], [], []
    dim = d.n_params

    def add(coef, bound, name):
        v = np.zeros(dim)
        for i, c in coef.items():
            v[i] = c
        rows.append(v)
        rhs.append(bound)
        names.append(name)

    if isinstance(d, (Linear, Spline)):
        lo, hi = cfg.delta_bounds
        add({0: -1.0}, -lo, "delta >= delta_L")
        if math.isfinite(hi):
            add({0: 1.0}, hi, "delta <= delta_U")
        add({1: -1.0}, 0.0, "alpha >= 0")
        add({2: -1.0}, 0.0, "beta >= 0")
        add({1: -1.0, 2: -1.0}, -eps, "alpha + beta >= epsilon")
        add({1: 1.0, 2: 1.0}, 1.0 - eps, "alpha + beta <= 1 - epsilon")
        n_knots = dim - 3
        for s in range(1, n_knots + 1):
            slope = {2: 1.0, **{2 + k: 1.0 for k in range(1, s + 1)}}
            add({i: -c for i, c in slope.items()}, 0.0, f"regime {s} slope >= 0")
            add({1: 1.0, **slope}, 1.0 - eps, f"alpha + regime {s} slope <= 1 - epsilon")
        if f.kind is Family.BINOMIAL:
            m = f.nuisance
            gth = np.zeros(dim)
            K.g_derivs(K.SPLINE, np.zeros(dim), d.knots_array, m, m, gth, np.zeros(dim),
                       np.zeros((dim, dim)))
            add(dict(enumerate(gth)), m * (1.0 - eps), "g(m, m) < m")
    elif isinstance(d, ExpAR):
        for i, name in enumerate(d.param_names):
            add({i: -1.0}, -1e-8, f"{name} > 0")
        add({0: 1.0, 1: 1.0, 3: 1.0}, 1.0 - eps, "alpha0 + alpha1 + beta <= 1 - epsilon")
    else:
        raise UnsupportedVariantError(f"no parameter space for {type(d).__name__}")
    return _Constraints(np.array(rows), np.array(rhs), names)


def _interior_point(model, y, cfg):
    d = model.dynamics
    ybar = max(float(np.mean(y)), 1e-3) if y.size else 1.0
    if isinstance(d, ExpAR):
        return np.array([0.3, 0.2, 1.0 / ybar**2, 0.3])
    lo, hi = cfg.delta_bounds
    delta = min(max(0.4 * ybar, 2 * lo), 0.5 * (lo + hi) if math.isfinite(hi) else math.inf)
    return np.array([delta, 0.3, 0.3] + [0.0] * (d.n_params - 3))


def _pull_inside(theta, center, cons: _Constraints, margin=0.99):
    """Largest step from ``center`` toward ``theta`` that keeps strict feasibility."""
    direction = theta - center
    slack = cons.b - cons.C @ center
    rate = cons.C @ direction
    t = 1.0
    pos = rate > 0
    if np.any(pos):
        t = min(1.0, margin * float(np.min(slack[pos] / rate[pos])))
    return center + max(t, 0.0) * direction


def _moment_start(model, y):
    """Method-of-moments start from the ARMA(1,1) structure of linear models."""
    d = model.dynamics
    ybar = float(np.mean(y))
    phi, alpha = 0.5, 0.25
    try:
        r = acf(y, 2)
        if r[1] > 0.02 and r[2] > 0:
            phi = float(np.clip(r[2] / r[1], 0.05, 0.95))
            rho1 = min(r[1], phi)

            def rho(a):
                return (1 - a * phi) * (phi - a) / (1 + a * a - 2 * a * phi)

            lo, hi = 0.0, phi
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if rho(mid) > rho1:
                    lo = mid
                else:
                    hi = mid
            alpha = 0.5 * (lo + hi)
        else:
            phi, alpha = 0.3, 0.15
    except Exception:
        pass
    beta = max(phi - alpha, 0.02)
    if isinstance(d, ExpAR):
        return np.array([0.8 * alpha, 0.2 * alpha + 0.01, 1.0 / max(ybar, 1e-3) ** 2, beta])
    delta = ybar * (1 - alpha - beta)
    return np.array([delta, alpha, beta] + [0.0] * (d.n_params - 3))


def _starts(model, y, cfg, rng, cons):
    center = _interior_point(model, y, cfg)
    first = np.asarray(cfg.init_theta, dtype=float) if cfg.init_theta is not None else _moment_start(model, y)
    out = [_pull_inside(first, center, cons)]
    for _ in range(cfg.n_starts - 1):
        jitter = first.copy()
        jitter *= np.exp(rng.normal(0.0, 0.25, size=first.size))
        if not isinstance(model.dynamics, ExpAR) and first.size > 3:
            jitter[3:] = rng.normal(0.0, 0.05, size=first.size - 3)
        out.append(_pull_inside(jitter, center, cons))
    return out


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class _Trace:
    theta: np.ndarray
    ev: _Eval
    converged: bool
    n_iter: int
    active: list
    projected_norm: float


def _null_space(A, dim):
    if A.shape[0] == 0:
        return np.eye(dim)
    return linalg.null_space(A)


def _ascent_direction(g, H, Z):
    gz = Z.T @ g
    if gz.size == 0:
        return np.zeros_like(g)
    Hz = -(Z.T @ H @ Z)
    Hz = 0.5 * (Hz + Hz.T)
    w, V = np.linalg.eigh(Hz)
    scale = max(float(np.max(np.abs(w))), 1e-12)
    w = np.maximum(np.abs(w), 1e-10 * scale)
    p = Z @ (V @ ((V.T @ gz) / w))
    if g @ p <= 0:
        p = Z @ gz
    return p


def _maximize(rec: _Recursion, theta0, cons: _Constraints, cfg: FitConfig) -> _Trace:
    """Damped Newton ascent with an active set for linear inequalities."""
    n = max(rec.n, 1)
    dim = theta0.size
    theta = theta0.copy()
    C, b = cons.C, cons.b
    active: list[int] = [i for i in range(b.size) if C[i] @ theta >= b[i] - 1e-12]
    ev = rec(theta, 2)
    if ev.bad:
        raise InvalidMeanError("starting value gives an invalid conditional mean", t=ev.bad)
    converged = False
    proj = math.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        g = ev.grad
        A = C[active]
        Z = _null_space(A, dim)
        proj = float(np.max(np.abs(Z @ (Z.T @ g)))) / n if Z.shape[1] else 0.0
        if proj < cfg.grad_tol:
            if not active:
                converged = True
                break
            lam = np.linalg.lstsq(A.T, g, rcond=None)[0]
            worst = int(np.argmin(lam))
            if lam[worst] >= -cfg.grad_tol * n:
                converged = True
                break
            active.pop(worst)
            continue
        p = _ascent_direction(g, ev.hess, Z)
        slack = b - C @ theta
        rate = C @ p
        t_max, blocking = math.inf, None
        for i in range(b.size):
            if i not in active and rate[i] > 1e-14:
                ti = max(slack[i], 0.0) / rate[i]
                if ti < t_max:
                    t_max, blocking = ti, i
        t = min(1.0, t_max)
        slope = float(g @ p)
        # gains below summation round-off cannot be resolved by the ratio test
        noise = 64 * np.finfo(float).eps * (abs(ev.ll) + n)
        accepted = None
        for _ in range(60):
            cand = theta + t * p
            trial = rec(cand, 0)
            gain = 1e-4 * t * slope
            if not trial.bad and trial.ll >= ev.ll + (gain if gain > noise else -noise):
                accepted = cand
                break
            t *= 0.5
        if accepted is None:
            # no ascent possible along p: stationary up to rounding
            converged = proj < 1e3 * cfg.grad_tol
            break
        if blocking is not None and t == t_max:
            active.append(blocking)
            accepted = accepted - C[blocking] * (C[blocking] @ accepted - b[blocking]) / (
                C[blocking] @ C[blocking]
            )
        step_size = float(np.max(np.abs(accepted - theta)))
        theta = accepted
        ev = rec(theta, 2)
        if step_size < 1e-15 * (1 + float(np.max(np.abs(theta)))):
            g = ev.grad
            Z = _null_space(C[active], dim)
            proj = float(np.max(np.abs(Z @ (Z.T @ g)))) / n if Z.shape[1] else 0.0
            converged = proj < cfg.grad_tol
            break
    return _Trace(theta, ev, converged, it, sorted(active), proj)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    """Maximum likelihood fit.

    ``info_matrix`` is the plug-in information summed over time (n times the
    per-observation estimate) and ``cov`` its inverse.
    """

    model: ModelSpec
    theta_hat: np.ndarray
    param_names: list
    loglik: float
    score_norm: float
    projected_score_norm: float
    info_matrix: np.ndarray
    cov: np.ndarray
    std_errors: np.ndarray
    fitted_means: np.ndarray
    converged: bool
    n_iter: int
    n: int
    x1: float
    active_constraints: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return self.theta_hat.size

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.n_params

    @property
    def bic(self) -> float:
        return -2.0 * self.loglik + self.n_params * math.log(max(self.n, 1))

    def to_dict(self, include_means=False):
        out = {
            "schema_version": 1,
            "family": self.model.family.to_dict(),
            "dynamics": self.model.dynamics.to_dict(),
            "param_names": list(self.param_names),
            "theta_hat": self.theta_hat.tolist(),
            "std_errors": [_json_float(v) for v in self.std_errors],
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "n": self.n,
            "x1": self.x1,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "score_norm": self.score_norm,
            "projected_score_norm": self.projected_score_norm,
            "info_matrix": self.info_matrix.tolist(),
            "cov": [[_json_float(v) for v in row] for row in self.cov],
            "active_constraints": list(self.active_constraints),
            "flags": dict(self.flags),
        }
        if include_means:
            out["fitted_means"] = self.fitted_means.tolist()
        return out


def _covariance(info):
    """Inverse of a symmetric positive-definite information matrix."""
    info = 0.5 * (info + info.T)
    try:
        c, low = linalg.cho_factor(info)
    except linalg.LinAlgError:
        w, V = np.linalg.eigh(info)
        null = V[:, int(np.argmin(w))]
        raise RankDeficientError(
            f"information matrix is singular; null direction {np.round(null, 6).tolist()}",
            null_direction=null,
        ) from None
    cov = linalg.cho_solve((c, low), np.eye(info.shape[0]))
    w = np.linalg.eigvalsh(info)
    if w[0] <= 1e-12 * w[-1]:
        V = np.linalg.eigh(info)[1]
        raise RankDeficientError("information matrix is numerically singular",
                                 null_direction=V[:, 0])
    return 0.5 * (cov + cov.T)


def asymptotic_covariance(fit: FitResult) -> np.ndarray:
    """Inverse plug-in information, the estimated covariance of theta_hat.

    Raises
    ------
    RankDeficientError
        If the information matrix is singular; ``null_direction`` names the
        offending parameter combination.
    """
    if not fit.converged:
        warnings.warn("covariance evaluated at a non-converged fit", RuntimeWarning, stacklevel=2)
    return _covariance(fit.info_matrix)


def _advisory_flags(model, theta, xs, cons, active, cfg):
    flags = {}
    names = [cons.names[i] for i in active]
    upper = [nm for nm in names if "<= 1 - epsilon" in nm]
    flags["near_unit_root"] = bool(upper)
    if flags["near_unit_root"]:
        warnings.warn(
            "estimate lies on the alpha + beta = 1 - epsilon boundary (IGARCH-like); "
            "finite-variance conditions do not hold",
            RuntimeWarning,
            stacklevel=3,
        )
    d = model.dynamics
    if isinstance(d, Linear):
        from obsdriven.dynamics import check_stationarity

        rep = check_stationarity(_safe_with_params(d, theta), model.family)
        flags["finite_variance_condition"] = rep.clt_ok
    return flags


def fit_mle(model: ModelSpec, data, cfg: FitConfig = DEFAULT_CONFIG, rng=None) -> FitResult:
    """Maximize the conditional log-likelihood over the admissible space.

    The structure (family, knots, variant) comes from ``model``; its
    coefficients are ignored unless ``cfg.init_theta`` is unset and they
    are needed as a template.  Multistart values are perturbations of a
    method-of-moments start drawn from ``rng``.

    Returns
    -------
    FitResult
        ``converged`` is False when the projected score did not fall below
        ``cfg.grad_tol`` within ``cfg.max_iter`` iterations; the best
        iterate is still returned.
    """
    rec = _Recursion(model, data, cfg)
    dim = rec.d
    if rec.n < 10 * dim:
        raise InvalidParameterError(f"need at least {10 * dim} observations for {dim} parameters")
    cons = _build_constraints(model, cfg)
    gen = as_generator(0 if rng is None else rng)
    starts = _starts(model, rec.y, cfg, gen, cons)

    def run(theta0):
        try:
            return _maximize(rec, theta0, cons, cfg)
        except InvalidMeanError as exc:
            return exc

    if cfg.threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            traces = list(pool.map(run, starts))
    else:
        traces = [run(s) for s in starts]
    good = [tr for tr in traces if isinstance(tr, _Trace)]
    if not good:
        raise FitFailedError("all starting values failed", errors=traces)
    best = max(good, key=lambda tr: (tr.ev.ll, tr.converged))
    theta = best.theta
    ev = rec(theta, 2)
    try:
        cov = _covariance(ev.info)
    except RankDeficientError:
        cov = np.full((dim, dim), np.nan)
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    flags = _advisory_flags(model, theta, ev.xs, cons, best.active, cfg)
    return FitResult(
        model=model.with_dynamics(_safe_with_params(model.dynamics, theta)),
        theta_hat=theta,
        param_names=list(model.dynamics.param_names),
        loglik=float(ev.ll),
        score_norm=float(np.max(np.abs(ev.grad))) / rec.n,
        projected_score_norm=best.projected_norm,
        info_matrix=ev.info,
        cov=cov,
        std_errors=se,
        fitted_means=ev.xs,
        converged=bool(best.converged),
        n_iter=best.n_iter,
        n=rec.n,
        x1=rec.x1,
        active_constraints=[cons.names[i] for i in best.active],
        flags=flags,
    )


def _safe_with_params(d, theta):
    """Rebuild the dynamics, clipping tiny negative round-off on bounds."""
    theta = np.array(theta, dtype=float)
    if isinstance(d, (Linear, Spline)):
        theta[1:3] = np.maximum(theta[1:3], 0.0)
    return d.with_params(theta)


@dataclass
class ProfileResult:
    r_hat: float
    r_grid: list
    logliks: list
    fits: dict

    def table(self):
        return [{"r": r, "loglik": ll} for r, ll in zip(self.r_grid, self.logliks)]


def profile_r(model: ModelSpec, data, r_grid, cfg: FitConfig = DEFAULT_CONFIG, rng=None):
    """Profile the negative binomial dispersion over ``r_grid``.

    Each r gets its own fit; the maximizer is returned, ties going to the
    smaller r.  Failed fits are recorded with loglik ``-inf``.  Because the
    base measure h(y) of the negative binomial depends on r, the compared
    values are full log-likelihoods, not the kernels maximized by each fit.
    """
    if model.family.kind not in (Family.NEGBINOMIAL, Family.GEOMETRIC):
        raise UnsupportedVariantError("profile likelihood over r needs a negative binomial family")
    grid = sorted(float(r) for r in r_grid)
    if not grid:
        raise InvalidParameterError("r_grid is empty")
    from obsdriven.expfamily import FamilySpec

    fits, lls, errors = {}, [], []
    seeds = as_generator(0 if rng is None else rng).spawn(len(grid))
    for r, sub in zip(grid, seeds):
        try:
            fit = fit_mle(model.with_family(FamilySpec.negbinomial(r)), data, cfg, sub)
        except (FitFailedError, InvalidMeanError, InvalidParameterError) as exc:
            errors.append(exc)
            lls.append(-math.inf)
            continue
        fits[r] = fit
        base = sum(K.log_base(K.NEGBIN, r, float(v)) for v in as_array(data))
        lls.append(fit.loglik + base)
    if not fits:
        raise FitFailedError("every profile fit failed", errors=errors)
    best = 0
    for i in range(1, len(grid)):
        if lls[i] > lls[best]:
            best = i
    return ProfileResult(grid[best], grid, lls, fits)
