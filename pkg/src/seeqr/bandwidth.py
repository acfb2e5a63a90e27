"""MSE-optimal bandwidths for the SEE and the data-driven plug-in.

Notation: A and B are the standardized variance-reduction and bias vectors
of the smoothed moments,

    A = [1 - int G^2]^{1/2} f(0|Z)^{1/2} V^{-1/2} Z
    B = [int G' v^r / r!] f^{(r-1)}(0|Z) V^{-1/2} Z

with V = q(1-q) E(ZZ').  The asymptotic MSE of the standardized SEE is
d + n h^{2r} E(B)'E(B) - h tr E(AA') up to smaller terms, and its minimizer is
:func:`h_star_general`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllFitsFailed, SeeError, ZeroBias
from .estimator import solve_see
from .instruments import Dataset
from .kernels import get_kernel, kernel_constants
from .probdist import FitResult, mle_fit

FAMILIES = ("gaussian", "student_t", "gamma", "gev")
ZERO_DERIV = 1e-12
DERIV_FLOOR = 0.01


@dataclass(frozen=True)
class SmoothingMoments:
    """Population (or plug-in) moments entering the bandwidth formulas."""

    EAA: np.ndarray
    EB: np.ndarray
    V: np.ndarray
    sigma_zx: np.ndarray | None = None

    @property
    def tr_AA(self) -> float:
        return float(np.trace(self.EAA))

    @property
    def BB(self) -> float:
        return float(self.EB @ self.EB)


@dataclass
class BandwidthReport:
    h0: float
    fits: list
    candidates: dict
    selected: float
    substituted_zero_derivative: bool
    selected_family: str
    substituted: dict = field(default_factory=dict)
    initial_beta: np.ndarray | None = None
    pilot_h: float | None = None        # bandwidth the pilot residuals came from

    def fit_for(self, family: str | None = None) -> FitResult:
        family = family or self.selected_family
        for f in self.fits:
            if f.family.family == family:
                return f
        raise KeyError(family)


def _sym_sqrt(m, inverse=False):
    w, vec = np.linalg.eigh(0.5 * (m + m.T))
    if np.any(w <= 0):
        raise np.linalg.LinAlgError("matrix is not positive definite")
    p = -0.5 if inverse else 0.5
    return (vec * w ** p) @ vec.T


def initial_bandwidth(n: int, r: int) -> float:
    """Starting bandwidth (2nr)^{-1/(2r-1)} used before any density is fitted."""
    return (2.0 * n * r) ** (-1.0 / (2 * r - 1))


def h_star_general(moments: SmoothingMoments, n: int, r: int) -> float:
    """Minimizer of n h^{2r} E(B)'E(B) - h tr E(AA') over h > 0.

    Parameters
    ----------
    moments : SmoothingMoments
    n : int
        Sample size.
    r : int
        Kernel order.

    Raises
    ------
    ZeroBias
        If E(B) = 0; the objective then has no finite minimizer.
    """
    bb, tr = moments.BB, moments.tr_AA
    if bb <= 0:
        raise ZeroBias("E(B)'E(B) = 0: MSE-optimal bandwidth is infinite")
    if tr <= 0:
        raise ValueError("tr E(AA') must be positive")
    return (tr / bb / (2.0 * n * r)) ** (1.0 / (2 * r - 1))


def _guard(f_r1, f0, r):
    # f^{(r-1)}(0) and f(0)^r share units, so the zero test is scale free
    if abs(f_r1) < ZERO_DERIV * f0 ** r:
        return DERIV_FLOOR, True
    return f_r1, False


def h_star_iid(f0: float, f_r1: float, d: int, n: int, kernel="horowitz4",
               return_flag: bool = False):
    """Optimal bandwidth when U is independent of Z.

    A vanishing f^{(r-1)}(0) (below 1e-12 f(0)^r in absolute value) is
    replaced by 0.01, which keeps h finite.
    With ``return_flag`` the pair (h, substituted) is returned.
    """
    if f0 <= 0:
        raise ValueError("f(0) must be positive")
    kernel = get_kernel(kernel)
    kc = kernel_constants(kernel)
    r = kernel.r
    f_r1, flag = _guard(f_r1, f0, r)
    num = math.factorial(r) ** 2 * kc.one_minus_g_sq * f0
    den = 2.0 * r * kc.moment_r ** 2 * f_r1 ** 2
    h = (num / den * d / n) ** (1.0 / (2 * r - 1))
    return (h, flag) if return_flag else h


def intercept_ratio(z) -> float:
    """Ratio mean(Z'S^{-1}Z) / (Zbar'S^{-1}Zbar) with S = n^-1 sum ZZ'.

    Equals d exactly whenever Z contains an intercept column.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    s = z.T @ z / n
    sol = np.linalg.solve(s, z.T)          # S^{-1} Z_j in columns
    num = float(np.einsum("ij,ji->", z, sol)) / n
    zbar = z.mean(axis=0)
    den = float(zbar @ np.linalg.solve(s, zbar))
    return num / den


def h_directional(c_vectors, moments: SmoothingMoments, n: int, r: int) -> float:
    """Bandwidth minimizing the summed AMSE of c_i' sqrt(n)(beta_hat - beta).

    Each direction is mapped to u_i = (V^{1/2})' Sigma_XZ^{-1} c_i.
    """
    if moments.sigma_zx is None:
        raise ValueError("sigma_zx is required for directional bandwidths")
    c = np.atleast_2d(np.asarray(c_vectors, dtype=float))
    v_half = _sym_sqrt(moments.V)
    sigma_xz = moments.sigma_zx.T
    u = (v_half.T @ np.linalg.solve(sigma_xz, c.T)).T
    if np.any(np.linalg.norm(u, axis=1) == 0):
        raise ValueError("direction vectors must be nonzero")
    num = float(np.einsum("ij,jk,ik->", u, moments.EAA, u))
    den = float(np.sum((u @ moments.EB) ** 2))
    if den <= 0:
        raise ZeroBias("bias vanishes in every requested direction")
    return (num / den / (2.0 * n * r)) ** (1.0 / (2 * r - 1))


def estimate_moments(data: Dataset, fit: FitResult, kernel="horowitz4") -> SmoothingMoments:
    """Plug-in SmoothingMoments assuming U independent of Z with density ``fit``."""
    kernel = get_kernel(kernel)
    kc = kernel_constants(kernel)
    n, q = data.n, data.q
    s = data.z.T @ data.z / n
    v = q * (1 - q) * s
    v_ih = _sym_sqrt(v, inverse=True)
    f0 = fit.f0
    f_r1, _ = _guard(fit.f_r_minus_1_at_0, fit.f0, kernel.r)
    eaa = kc.one_minus_g_sq * f0 * v_ih @ s @ v_ih.T
    eb = kc.moment_r / math.factorial(kernel.r) * f_r1 * (v_ih @ data.z.mean(axis=0))
    sigma_zx = f0 * data.z.T @ data.x / n
    return SmoothingMoments(0.5 * (eaa + eaa.T), eb, v, sigma_zx)


def plugin_bandwidth(data: Dataset, kernel="horowitz4", families=FAMILIES) -> BandwidthReport:
    """Data-driven bandwidth from parametric fits to pilot residuals.

    Solves the SEE at h0 = (2nr)^{-1/(2r-1)}, fits each family to the
    residuals by maximum likelihood, turns each fit into a candidate via
    :func:`h_star_iid` and keeps the smallest candidate among converged fits.
    """
    kernel = get_kernel(kernel)
    r = kernel.r
    h0 = initial_bandwidth(data.n, r)
    try:
        pilot_beta = solve_see(data, h0, kernel).beta
        pilot_h = h0
    except SeeError as exc:
        # h0 is not scale aware; on wide-ranging outcomes it can sit far below
        # any solvable bandwidth.  Fall back to the smallest rung reached.
        path = getattr(exc, "path", None)
        if not path:
            raise
        pilot_h, pilot_beta = path[-1]
    resid = data.y - data.x @ pilot_beta
    fits, candidates, subs = [], {}, {}
    for fam in families:
        try:
            fit = mle_fit(fam, resid, data.q, order=r - 1)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError):
            continue
        fits.append(fit)
        if not fit.converged:
            continue
        h, flag = h_star_iid(fit.f0, fit.f_r_minus_1_at_0, data.d, data.n, kernel,
                             return_flag=True)
        if np.isfinite(h) and h > 0:
            candidates[fam] = h
            subs[fam] = flag
    if not candidates:
        raise AllFitsFailed("no residual density fit converged")
    best = min(candidates, key=candidates.get)
    return BandwidthReport(h0, fits, candidates, candidates[best], subs[best], best,
                           subs, pilot_beta, pilot_h)
