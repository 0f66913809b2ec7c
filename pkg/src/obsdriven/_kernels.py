"""Compiled scalar kernels shared by every module.

Family and dynamics are dispatched on small integer codes so one compiled
function serves all variants.  Everything here works in mean space: the
conditional mean ``x`` is the state carried by the recursions, and the
natural parameter is only formed where the log-likelihood needs it.

Family codes: 0 Poisson, 1 negative binomial (nuisance r), 2 binomial
(nuisance m), 3 gamma (nuisance shape kappa).  Dynamics codes: 0 piecewise
linear (linear is the zero-knot case), 1 exponential autoregression.
"""

import math

import numpy as np
from numba import njit

POISSON = 0
NEGBIN = 1
BINOMIAL = 2
GAMMA = 3

SPLINE = 0
EXPAR = 1

_FPMIN = 1e-300
_EPS = 1e-16

jit = njit(cache=True, nogil=True)


# ---------------------------------------------------------------------------
# exponential family
# ---------------------------------------------------------------------------


@jit
def mean_in_range(fam, nu, x):
    if not (x > 0.0) or not math.isfinite(x):
        return False
    if fam == BINOMIAL:
        return x < nu
    return True


@jit
def eta_of_mean(fam, nu, x):
    if fam == POISSON:
        return math.log(x)
    if fam == NEGBIN:
        return math.log(x / (x + nu))
    if fam == BINOMIAL:
        return math.log(x / (nu - x))
    return -nu / x


@jit
def mean_of_eta(fam, nu, eta):
    if fam == POISSON:
        return math.exp(eta)
    if fam == NEGBIN:
        return nu * math.exp(eta) / (-math.expm1(eta))
    if fam == BINOMIAL:
        if eta >= 0.0:
            return nu / (1.0 + math.exp(-eta))
        e = math.exp(eta)
        return nu * e / (1.0 + e)
    return -nu / eta


@jit
def var_of_mean(fam, nu, x):
    """Variance function V(x) = B'(eta) at B(eta) = x."""
    if fam == POISSON:
        return x
    if fam == NEGBIN:
        return x + x * x / nu
    if fam == BINOMIAL:
        return x - x * x / nu
    return x * x / nu


@jit
def dvar_of_mean(fam, nu, x):
    """dV/dx, so that B''(eta) = V'(x) V(x)."""
    if fam == POISSON:
        return 1.0
    if fam == NEGBIN:
        return 1.0 + 2.0 * x / nu
    if fam == BINOMIAL:
        return 1.0 - 2.0 * x / nu
    return 2.0 * x / nu


@jit
def cumulant(fam, nu, eta):
    if fam == POISSON:
        return math.exp(eta)
    if fam == NEGBIN:
        return -nu * math.log1p(-math.exp(eta))
    if fam == BINOMIAL:
        if eta > 0.0:
            return nu * (eta + math.log1p(math.exp(-eta)))
        return nu * math.log1p(math.exp(eta))
    return -nu * math.log(-eta)


@jit
def log_kernel(fam, nu, x, y):
    """eta*y - A(eta) evaluated at mean x, written to avoid cancellation."""
    if fam == POISSON:
        return y * math.log(x) - x
    if fam == NEGBIN:
        return y * math.log(x / (x + nu)) - nu * math.log1p(x / nu)
    if fam == BINOMIAL:
        return y * math.log(x / (nu - x)) + nu * math.log1p(-x / nu)
    return -nu * y / x - nu * math.log(x / nu)


@jit
def log_base(fam, nu, y):
    """log h(y)."""
    if fam == POISSON:
        return -math.lgamma(y + 1.0)
    if fam == NEGBIN:
        return math.lgamma(y + nu) - math.lgamma(nu) - math.lgamma(y + 1.0)
    if fam == BINOMIAL:
        return math.lgamma(nu + 1.0) - math.lgamma(y + 1.0) - math.lgamma(nu - y + 1.0)
    if nu == 1.0:
        return -math.lgamma(nu)
    if y <= 0.0:
        return -math.inf if nu > 1.0 else math.inf
    return (nu - 1.0) * math.log(y) - math.lgamma(nu)


@jit
def log_density(fam, nu, x, y):
    return log_kernel(fam, nu, x, y) + log_base(fam, nu, y)


@jit
def gammainc_lower(a, z):
    """Regularized lower incomplete gamma P(a, z)."""
    if z <= 0.0:
        return 0.0
    lead = -z + a * math.log(z) - math.lgamma(a)
    if z < a + 1.0:
        ap = a
        term = 1.0 / a
        total = term
        for _ in range(100000):
            ap += 1.0
            term *= z / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return min(1.0, total * math.exp(lead))
    # continued fraction for the upper tail (modified Lentz)
    b = z + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        de = d * c
        h *= de
        if abs(de - 1.0) < _EPS:
            break
    return max(0.0, 1.0 - math.exp(lead) * h)


@jit
def _gamma_std_quantile(a, u):
    """Smallest z with P(a, z) >= u, by safeguarded Newton."""
    if u <= 0.0:
        return 0.0
    lo = 0.0
    hi = max(a, 1.0)
    while gammainc_lower(a, hi) < u:
        lo = hi
        hi *= 2.0
        if hi > 1e300:
            return math.inf
    z = 0.5 * (lo + hi)
    lga = math.lgamma(a)
    for _ in range(200):
        f = gammainc_lower(a, z) - u
        if f < 0.0:
            lo = z
        else:
            hi = z
        dens = math.exp((a - 1.0) * math.log(z) - z - lga) if z > 0.0 else 0.0
        znew = z - f / dens if dens > 0.0 else -1.0
        if not (lo < znew < hi):
            znew = 0.5 * (lo + hi)
        if abs(znew - z) <= 1e-15 * max(z, 1e-300):
            z = znew
            break
        z = znew
        if hi - lo <= 1e-15 * hi:
            break
    return z


@jit
def _support_cap(fam, nu, x):
    if fam == BINOMIAL:
        return nu
    return math.floor(x + 50.0 * math.sqrt(var_of_mean(fam, nu, x)) + 10.0)


@jit
def cdf(fam, nu, x, y):
    if y < 0.0:
        return 0.0
    if fam == GAMMA:
        return gammainc_lower(nu, y * nu / x)
    k = math.floor(y)
    if fam == BINOMIAL and k >= nu:
        return 1.0
    total = 0.0
    for j in range(int(k) + 1):
        term = math.exp(log_density(fam, nu, x, float(j)))
        total += term
        if total >= 1.0:
            return 1.0
        if j > x and term < 1e-20:
            break
    return total


@jit
def quantile(fam, nu, x, u):
    """inf{t >= 0 : F_x(t) >= u}; discrete families by forward summation."""
    if u <= 0.0:
        return 0.0
    if fam == GAMMA:
        return _gamma_std_quantile(nu, u) * x / nu
    cap = _support_cap(fam, nu, x)
    total = 0.0
    k = 0.0
    while True:
        total += math.exp(log_density(fam, nu, x, k))
        if total >= u or k >= cap:
            return k
        k += 1.0


@jit
def cdf_array(fam, nu, x, y, out):
    for i in range(x.size):
        out[i] = cdf(fam, nu, x[i], y[i])


@jit
def quantile_array(fam, nu, x, u, out):
    for i in range(x.size):
        out[i] = quantile(fam, nu, x[i], u[i])


@jit
def log_density_array(fam, nu, x, y, out):
    for i in range(x.size):
        out[i] = log_density(fam, nu, x[i], y[i])


@jit
def score_terms(fam, nu, x, y, tail):
    """(LS, QS, RPS) of the predictive law with mean x at outcome y."""
    ls = -log_density(fam, nu, x, y)
    cap = _support_cap(fam, nu, x)
    if y > cap:
        cap = y
    total = 0.0
    sq = 0.0
    rps = 0.0
    py = 0.0
    k = 0.0
    while True:
        p = math.exp(log_density(fam, nu, x, k))
        total += p
        sq += p * p
        if k == y:
            py = p
        ind = 1.0 if y <= k else 0.0
        rps += (min(total, 1.0) - ind) ** 2
        if k >= cap or (k >= y and 1.0 - total < tail):
            break
        k += 1.0
    return ls, sq - 2.0 * py, rps


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


@jit
def g_eval(dyn, theta, knots, x, y):
    if dyn == SPLINE:
        v = theta[0] + theta[1] * x + theta[2] * y
        for k in range(knots.size):
            d = y - knots[k]
            if d > 0.0:
                v += theta[3 + k] * d
        return v
    return (theta[0] + theta[1] * math.exp(-theta[2] * x * x)) * x + theta[3] * y


@jit
def g_derivs(dyn, theta, knots, x, y, gth, gxth, gthth):
    """Fill first/second partials of g in theta; return (dg/dx, d2g/dx2).

    ``gth``: dg/dtheta; ``gxth``: d2g/dx dtheta; ``gthth``: d2g/dtheta2.
    """
    gth[:] = 0.0
    gxth[:] = 0.0
    gthth[:, :] = 0.0
    if dyn == SPLINE:
        gth[0] = 1.0
        gth[1] = x
        gth[2] = y
        for k in range(knots.size):
            d = y - knots[k]
            gth[3 + k] = d if d > 0.0 else 0.0
        gxth[1] = 1.0
        return theta[1], 0.0
    a0 = theta[0]
    a1 = theta[1]
    gam = theta[2]
    x2 = x * x
    e = math.exp(-gam * x2)
    gth[0] = x
    gth[1] = x * e
    gth[2] = -a1 * x2 * x * e
    gth[3] = y
    gxth[0] = 1.0
    gxth[1] = e * (1.0 - 2.0 * gam * x2)
    gxth[2] = -a1 * x2 * e * (3.0 - 2.0 * gam * x2)
    gthth[1, 2] = -x2 * x * e
    gthth[2, 1] = gthth[1, 2]
    gthth[2, 2] = a1 * x2 * x2 * x * e
    gx = a0 + a1 * e * (1.0 - 2.0 * gam * x2)
    gxx = a1 * e * (4.0 * gam * gam * x2 * x - 6.0 * gam * x)
    return gx, gxx


@jit
def recursion(fam, nu, dyn, theta, knots, y, x1, order, xs, grad, hess, info, steps):
    """Conditional log-likelihood with optional score/Hessian recursions.

    order 0: log-likelihood only; 1: adds score and plug-in information;
    2: adds the Hessian.  ``steps`` (n x d, or 0 rows) receives per-step
    score increments.  Returns (loglik, bad) where bad is the 1-based time
    at which the mean left the range of B (0 if none).
    """
    n = y.size
    d = theta.size
    grad[:] = 0.0
    hess[:, :] = 0.0
    info[:, :] = 0.0
    xd = np.zeros(d)
    xd_new = np.zeros(d)
    xdd = np.zeros((d, d))
    xdd_new = np.zeros((d, d))
    gth = np.zeros(d)
    gxth = np.zeros(d)
    gthth = np.zeros((d, d))
    keep_steps = steps.shape[0] == n
    ll = 0.0
    x = x1
    for t in range(n):
        if t > 0:
            xp = x
            yp = y[t - 1]
            x = g_eval(dyn, theta, knots, xp, yp)
            if order >= 1:
                gx, gxx = g_derivs(dyn, theta, knots, xp, yp, gth, gxth, gthth)
                if order >= 2:
                    for i in range(d):
                        for j in range(d):
                            xdd_new[i, j] = (
                                gthth[i, j]
                                + gxth[i] * xd[j]
                                + xd[i] * gxth[j]
                                + gxx * xd[i] * xd[j]
                                + gx * xdd[i, j]
                            )
                    xdd[:, :] = xdd_new
                for i in range(d):
                    xd_new[i] = gth[i] + gx * xd[i]
                xd[:] = xd_new
        if not mean_in_range(fam, nu, x):
            return -math.inf, t + 1
        xs[t] = x
        yt = y[t]
        ll += log_kernel(fam, nu, x, yt)
        if order >= 1:
            v = var_of_mean(fam, nu, x)
            r = (yt - x) / v
            for i in range(d):
                grad[i] += r * xd[i]
                if keep_steps:
                    steps[t, i] = r * xd[i]
                for j in range(d):
                    info[i, j] += xd[i] * xd[j] / v
            if order >= 2:
                c = -1.0 / v - (yt - x) * dvar_of_mean(fam, nu, x) / (v * v)
                for i in range(d):
                    for j in range(d):
                        hess[i, j] += c * xd[i] * xd[j] + r * xdd[i, j]
    return ll, 0


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


@jit
def simulate(fam, nu, dyn, theta, knots, x0, u, y_out, x_out):
    """Forward process driven by the uniform stream ``u``.

    Returns 0 on success, else the 1-based step whose state was invalid.
    """
    x = x0
    for t in range(u.size):
        if not mean_in_range(fam, nu, x):
            return t + 1
        yt = quantile(fam, nu, x, u[t])
        x_out[t] = x
        y_out[t] = yt
        x = g_eval(dyn, theta, knots, x, yt)
    return 0


@jit
def simulate_pq(fam, nu, delta, alphas, betas, x0, u, y_out, x_out):
    """INGARCH(p, q) forward process; lags before time 1 are set to x0."""
    p = alphas.size
    q = betas.size
    xh = np.full(max(p, 1), x0)
    yh = np.full(max(q, 1), x0)
    for t in range(u.size):
        if t == 0:
            x = x0
        else:
            x = delta
            for i in range(p):
                x += alphas[i] * xh[i]
            for j in range(q):
                x += betas[j] * yh[j]
        if not mean_in_range(fam, nu, x):
            return t + 1
        yt = quantile(fam, nu, x, u[t])
        x_out[t] = x
        y_out[t] = yt
        for i in range(xh.size - 1, 0, -1):
            xh[i] = xh[i - 1]
        xh[0] = x
        for j in range(yh.size - 1, 0, -1):
            yh[j] = yh[j - 1]
        yh[0] = yt
    return 0


@jit
def coupled_distance(fam, nu, dyn, theta, knots, xa, xb, u, out):
    """|X_n(xa) - X_n(xb)| for chains sharing the uniforms row by row."""
    n_rep, n_steps = u.shape
    for r in range(n_rep):
        a = xa
        b = xb
        out[r, 0] = abs(a - b)
        for s in range(n_steps):
            ya = quantile(fam, nu, a, u[r, s])
            yb = quantile(fam, nu, b, u[r, s])
            a = g_eval(dyn, theta, knots, a, ya)
            b = g_eval(dyn, theta, knots, b, yb)
            out[r, s + 1] = abs(a - b)


@jit
def coupled_disagreement(fam, nu, dyn, theta, knots, x0, ua, ub, u, out):
    """Indicators Y'_n != Y''_n for independently burned-in chain pairs.

    ``ua`` and ``ub`` (n_rep x n_burn) drive the independent burn-ins that
    approximate stationary starts; ``u`` (n_rep x n_steps) is shared.
    """
    n_rep, n_steps = u.shape
    n_burn = ua.shape[1]
    for r in range(n_rep):
        a = x0
        b = x0
        for s in range(n_burn):
            a = g_eval(dyn, theta, knots, a, quantile(fam, nu, a, ua[r, s]))
            b = g_eval(dyn, theta, knots, b, quantile(fam, nu, b, ub[r, s]))
        for s in range(n_steps):
            ya = quantile(fam, nu, a, u[r, s])
            yb = quantile(fam, nu, b, u[r, s])
            out[r, s] = 1.0 if ya != yb else 0.0
            a = g_eval(dyn, theta, knots, a, ya)
            b = g_eval(dyn, theta, knots, b, yb)
