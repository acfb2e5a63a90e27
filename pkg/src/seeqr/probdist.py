"""Chi-square distributions and parametric residual density fits.

The chi-square pieces feed the S_n test and its corrected critical value.
The parametric fits (Gaussian, Student-t, gamma, GEV) supply f_U(0) and
f_U^(k)(0) to the plug-in bandwidth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

FAMILIES = ("gaussian", "student_t", "gamma", "gev")
MAX_ITER = 500
T_DF_BOUNDS = (2.01, 100.0)


# ---------------------------------------------------------------------------
# chi-square

def chi_sq_pdf(x, d):
    """Central chi-square density with ``d`` degrees of freedom."""
    x = np.asarray(x, dtype=float)
    k = 0.5 * d
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = (k - 1.0) * np.log(x) - 0.5 * x - k * math.log(2.0) - special.gammaln(k)
        out = np.where(x > 0, np.exp(logp), 0.0)
    if d == 2:
        out = np.where(x == 0, 0.5, out)
    elif d < 2:
        out = np.where(x == 0, np.inf, out)
    return out if out.ndim else float(out)


def chi_sq_cdf(x, d):
    """Central chi-square CDF (regularized lower incomplete gamma)."""
    if d < 1:
        raise ValueError("degrees of freedom must be >= 1")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("chi-square CDF undefined for x < 0")
    out = special.gammainc(0.5 * d, 0.5 * x)
    return out if np.ndim(out) else float(out)


def chi_sq_quantile(p, d):
    """Inverse chi-square CDF by bracketed root finding."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    hi = max(1.0, float(d))
    while chi_sq_cdf(hi, d) < p:
        hi *= 2.0
    return optimize.brentq(lambda x: chi_sq_cdf(x, d) - p, 0.0, hi, xtol=1e-13, rtol=1e-15, maxiter=500)


def _poisson_weights(lam, tol=1e-14):
    """Poisson(lam/2) weights, truncated where a term falls below tol times the mode's."""
    mu = 0.5 * lam
    if mu == 0:
        return np.array([0]), np.array([1.0])
    mode = int(mu)
    # 12 standard deviations (+40 for small mu) is far past the 1e-14 cut
    half = int(12.0 * math.sqrt(mu)) + 40
    js = np.arange(max(0, mode - half), mode + half + 1)
    logw = -mu + js * math.log(mu) - special.gammaln(js + 1.0)
    keep = logw - logw.max() >= math.log(tol)
    return js[keep], np.exp(logw[keep])


def _mixture(fn, x, d, lam):
    if lam < 0:
        raise ValueError("noncentrality must be >= 0")
    js, w = _poisson_weights(lam)
    x = np.asarray(x, dtype=float)
    terms = fn(x[..., None], d + 2.0 * js)
    out = np.asarray(terms) @ w
    return out if np.ndim(out) else float(out)


def _chi_sq_pdf_dof(x, dof):
    # central density broadcast over an array of degrees of freedom
    k = 0.5 * dof
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = (k - 1.0) * np.log(x) - 0.5 * x - k * math.log(2.0) - special.gammaln(k)
        out = np.where(x > 0, np.exp(logp), np.where(dof == 2, 0.5, np.where(dof < 2, np.inf, 0.0)))
    return out


def noncentral_chi_sq_pdf(x, d, lam):
    """Noncentral chi-square density as a Poisson mixture of central densities."""
    return _mixture(_chi_sq_pdf_dof, x, d, lam)


def noncentral_chi_sq_cdf(x, d, lam):
    """Noncentral chi-square CDF, same mixture as :func:`noncentral_chi_sq_pdf`."""
    if np.any(np.asarray(x) < 0):
        raise ValueError("chi-square CDF undefined for x < 0")
    return _mixture(lambda xx, dof: special.gammainc(0.5 * dof, 0.5 * xx), x, d, lam)


# ---------------------------------------------------------------------------
# parametric densities
#
# Each family is a log-density on the residual scale, parameterised by an
# unconstrained vector so Nelder-Mead can search freely.

def _gaussian_logpdf(x, mu, sigma):
    z = (x - mu) / sigma
    return -0.5 * z * z - math.log(sigma) - 0.5 * math.log(2 * math.pi)


def _t_logpdf(x, nu, loc, scale):
    z = (x - loc) / scale
    return (special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu)
            - 0.5 * math.log(nu * math.pi) - math.log(scale)
            - 0.5 * (nu + 1) * np.log1p(z * z / nu))


def _gamma_logpdf(x, a, scale):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (a - 1) * np.log(x) - x / scale - special.gammaln(a) - a * math.log(scale)
    return np.where(x > 0, out, -np.inf)


def _gev_logpdf(x, xi, loc, scale):
    """GEV log-density with shape xi (xi > 0 heavy right tail, Frechet type)."""
    z = (x - loc) / scale
    if abs(xi) < 1e-8:
        return -math.log(scale) - z - np.exp(-z)
    t = 1.0 + xi * z
    with np.errstate(divide="ignore", invalid="ignore"):
        lt = np.log(t)
        out = -math.log(scale) - (1.0 / xi + 1.0) * lt - np.exp(-lt / xi)
    return np.where(t > 0, out, -np.inf)


@dataclass(frozen=True)
class DensityFamily:
    """A fitted parametric density for residuals.

    ``params`` are natural parameters in family order:
    gaussian (mu, sigma); student_t (nu, loc, scale); gamma (a, scale);
    gev (xi, loc, scale).  The density of a residual e is the family density
    evaluated at ``e - shift``.
    """

    family: str
    params: tuple
    shift: float = 0.0

    def logpdf(self, x):
        x = np.asarray(x, dtype=float) - self.shift
        p = self.params
        if self.family == "gaussian":
            return _gaussian_logpdf(x, *p)
        if self.family == "student_t":
            return _t_logpdf(x, *p)
        if self.family == "gamma":
            return _gamma_logpdf(x, *p)
        if self.family == "gev":
            return _gev_logpdf(x, *p)
        raise ValueError(f"unknown family {self.family!r}")

    def pdf(self, x):
        with np.errstate(over="ignore"):
            return np.exp(self.logpdf(x))

    @property
    def scale(self):
        return float(self.params[1] if self.family in ("gaussian", "gamma") else self.params[2])


@dataclass(frozen=True)
class FitResult:
    family: DensityFamily
    loglik: float
    f0: float
    f_r_minus_1_at_0: float
    converged: bool
    message: str = ""
    extra: dict = field(default_factory=dict, compare=False)


def _nelder_mead(negll, x0, scale):
    """Minimise with Nelder-Mead, restarting from the last point if the cap is hit.

    Returns (x, fun, converged).
    """
    x = np.asarray(x0, dtype=float)
    scale = np.asarray(scale, dtype=float)
    for _ in range(3):
        simplex = np.vstack([x, x + np.diag(scale)])
        res = optimize.minimize(negll, x, method="Nelder-Mead",
                                options={"maxiter": MAX_ITER, "xatol": 1e-7, "fatol": 1e-9,
                                         "initial_simplex": simplex})
        x = res.x
        if res.success:
            break
    converged = bool(res.success) and res.fun < 1e299
    return res.x, float(res.fun), converged


def _fit_gaussian(e):
    mu = float(e.mean())
    sigma = float(e.std())
    fam = DensityFamily("gaussian", (mu, sigma))
    return fam, float(fam.logpdf(e).sum()), True, ""


def _fit_t(e):
    lo, hi = T_DF_BOUNDS
    med = float(np.median(e))
    mad = float(np.median(np.abs(e - med))) * 1.4826 or float(e.std())
    kurt = float(((e - e.mean()) ** 4).mean() / e.var() ** 2) - 3.0
    nu0 = float(np.clip(4.0 + 6.0 / kurt if kurt > 0 else 30.0, lo + 0.5, hi - 1))

    # nu through a logistic map onto (lo, hi)
    def unpack(th):
        nu = lo + (hi - lo) * special.expit(th[0])
        return nu, th[1], math.exp(th[2])

    def negll(th):
        nu, loc, scale = unpack(th)
        v = -_t_logpdf(e, nu, loc, scale).sum()
        return v if np.isfinite(v) else 1e300

    th0 = [special.logit((nu0 - lo) / (hi - lo)), med, math.log(mad)]
    th, fun, ok = _nelder_mead(negll, th0, [0.5, 0.1 * mad, 0.1])
    return DensityFamily("student_t", unpack(th)), -fun, ok, ""


def _gamma_shift(e):
    spread = float(e.std())
    return float(e.min()) - 0.05 * spread


def _fit_gamma(e, shift):
    x = e - shift
    if np.any(x <= 0):
        return None, -np.inf, False, "residuals not above gamma shift"
    m, v = float(x.mean()), float(x.var())
    a0, s0 = m * m / v, v / m

    def negll(th):
        a, s = math.exp(th[0]), math.exp(th[1])
        val = -_gamma_logpdf(x, a, s).sum()
        return val if np.isfinite(val) else 1e300

    th, fun, ok = _nelder_mead(negll, [math.log(a0), math.log(s0)], [0.2, 0.2])
    return DensityFamily("gamma", (math.exp(th[0]), math.exp(th[1])), shift), -fun, ok, ""


def _fit_gev(e):
    # method-of-moments start from the Gumbel member
    sd = float(e.std())
    scale0 = sd * math.sqrt(6) / math.pi
    loc0 = float(e.mean()) - 0.5772156649 * scale0

    def negll(th):
        val = -_gev_logpdf(e, th[0], th[1], math.exp(th[2])).sum()
        return val if np.isfinite(val) else 1e300

    best = None
    for xi0 in (0.0, 0.2, -0.2):
        th, fun, ok = _nelder_mead(negll, [xi0, loc0, math.log(scale0)], [0.1, 0.1 * sd, 0.1])
        if best is None or fun < best[1]:
            best = (th, fun, ok)
    th, fun, ok = best
    return DensityFamily("gev", (float(th[0]), float(th[1]), math.exp(th[2]))), -fun, ok, ""


def mle_fit(family: str, residuals, q: float = 0.5, order: int = 3) -> FitResult:
    """Fit ``family`` to residuals by maximum likelihood.

    Returns the fitted density together with f(0) and its ``order``-th
    derivative at residual value 0.  ``q`` is accepted for interface symmetry;
    the residuals of a q-quantile fit are used on their native scale.
    """
    e = np.asarray(residuals, dtype=float).ravel()
    if e.size < 10:
        raise ValueError("need at least 10 residuals to fit a density")
    if not np.all(np.isfinite(e)) or np.ptp(e) == 0:
        raise ValueError("residuals must be finite and non-constant")

    if family == "gaussian":
        fam, ll, ok, msg = _fit_gaussian(e)
    elif family == "student_t":
        fam, ll, ok, msg = _fit_t(e)
    elif family == "gamma":
        fam, ll, ok, msg = _fit_gamma(e, _gamma_shift(e))
    elif family == "gev":
        fam, ll, ok, msg = _fit_gev(e)
    else:
        raise ValueError(f"unknown family {family!r}")

    if fam is None:
        return FitResult(DensityFamily(family, (), 0.0), -np.inf, float("nan"), float("nan"), False, msg)
    try:
        f0 = float(fam.pdf(0.0))
        fk = density_deriv_at_zero(fam, order)
    except ArithmeticError as exc:
        return FitResult(fam, ll, float("nan"), float("nan"), False, str(exc))
    ok = ok and np.isfinite(ll) and np.isfinite(fk) and f0 > 0
    return FitResult(fam, ll, f0, fk, bool(ok), msg)


# central-difference stencils: offsets -2..2 (weights / step**order)
_STENCILS = {
    1: np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
    2: np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0,
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
    4: np.array([1.0, -4.0, 6.0, -4.0, 1.0]),
}
# leading truncation order of each stencil (for Richardson)
_STENCIL_ORDER = {1: 4, 2: 4, 3: 2, 4: 2}


def _gaussian_deriv(mu, sigma, x, order):
    """d^k/dx^k of the N(mu, sigma^2) density via probabilists' Hermite polynomials."""
    z = (x - mu) / sigma
    phi = math.exp(-0.5 * z * z) / (sigma * math.sqrt(2 * math.pi))
    he = special.eval_hermitenorm(order, z)
    return (-1) ** order * he * phi / sigma ** order


def density_deriv_at_zero(fit, order: int) -> float:
    """Return f^(order)(0) of a fitted residual density.

    Gaussian uses the closed form.  Other families use Richardson-extrapolated
    five-point central differences with step max(1e-3 * scale, 1e-5).
    """
    fam = fit.family if isinstance(fit, FitResult) else fit
    if order < 0 or order > 4:
        raise ValueError("derivative order must be in 0..4")
    if fam.family == "gaussian":
        return _gaussian_deriv(fam.params[0], fam.params[1], 0.0, order)
    if order == 0:
        return float(fam.pdf(0.0))
    step = max(1e-3 * fam.scale, 1e-5)
    offsets = np.arange(-2, 3)

    def diff(hh):
        vals = fam.pdf(offsets * hh)
        if not np.all(np.isfinite(vals)):
            raise ArithmeticError("density not finite near 0")
        return float(_STENCILS[order] @ vals) / hh ** order

    # extrapolate from (2*step, step): halving the step instead would let
    # roundoff (~eps / step^order) dominate for the third derivative
    p = _STENCIL_ORDER[order]
    coarse, fine = diff(2.0 * step), diff(step)
    return (2 ** p * fine - coarse) / (2 ** p - 1)
