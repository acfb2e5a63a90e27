"""Smoothed estimating equations (SEE) for IV quantile regression.

The moment vector is

    m_n(b) = n^{-1/2} sum_j Z_j [G((X_j'b - Y_j)/h) - q],

which is smooth in b, so it is solved with damped Newton steps using the
analytic Jacobian.  When Newton stalls (typically at small h, where only a
handful of observations fall inside the kernel window) the solver retreats to
a larger bandwidth and walks back down a geometric ladder, warm-starting each
rung from the previous root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EndogenousNotSupported, MaxIterations, SingularJacobian
from .instruments import Dataset
from .kernels import SmoothingKernel, get_kernel, kernel_constants

HUGE_H = 5e6
STEP_CAP = 10.0


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 100
    damping: float = 0.5
    max_halvings: int = 30
    continuation: bool = True
    ladder_factor: float = 0.5
    max_expansions: int = 40

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.ladder_factor < 1:
            raise ValueError("ladder_factor must lie in (0, 1)")


@dataclass(frozen=True)
class SeeFit:
    beta: np.ndarray
    h: float
    kernel: str
    residuals: np.ndarray
    moment_norm: float
    iterations: int
    path: list = field(default_factory=list)


def see_moments(beta, data: Dataset, h: float, kernel) -> np.ndarray:
    """SEE moment vector m_n(beta), scaled by n^{-1/2}."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    kernel = get_kernel(kernel)
    v = (data.x @ np.asarray(beta, dtype=float) - data.y) / h
    return data.z.T @ (kernel.g(v) - data.q) / math.sqrt(data.n)


def see_jacobian(beta, data: Dataset, h: float, kernel) -> np.ndarray:
    """Exact derivative of :func:`see_moments` with respect to beta."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    kernel = get_kernel(kernel)
    v = (data.x @ np.asarray(beta, dtype=float) - data.y) / h
    w = kernel.g_prime(v) / h
    return (data.z * w[:, None]).T @ data.x / math.sqrt(data.n)


def iv_estimate(data: Dataset) -> np.ndarray:
    """Linear IV estimate (Z'X)^-1 Z'y; OLS when Z = X, 2SLS with projected Z."""
    zx = data.z.T @ data.x
    try:
        return np.linalg.solve(zx, data.z.T @ data.y)
    except np.linalg.LinAlgError:
        raise SingularJacobian("Z'X is singular; IV estimate undefined") from None


def _tolerance(opts, n, beta):
    return opts.tol * math.sqrt(n) * (1.0 + float(np.linalg.norm(beta)))


def _newton_step(jac, m):
    try:
        step = np.linalg.solve(jac, m)
        if np.all(np.isfinite(step)):
            return step
    except np.linalg.LinAlgError:
        pass
    if not np.any(jac):
        return None
    # rank-deficient Jacobian: minimum-norm step in the identified directions
    step, *_ = np.linalg.lstsq(jac, m, rcond=1e-12)
    return step if np.any(step) else None


def _newton(data, h, kernel, beta, opts):
    """Damped Newton on m_n at fixed h.

    Returns (beta, moment_norm, iterations, status) with status one of
    "ok", "stall", "singular", "maxiter".
    """
    beta = np.array(beta, dtype=float)
    m = see_moments(beta, data, h, kernel)
    norm = float(np.linalg.norm(m))
    # tolerance scale frozen at the start so a diverging iterate cannot loosen it
    tol = _tolerance(opts, data.n, beta)
    polish = 0
    for it in range(1, opts.max_iter + 1):
        if norm <= tol:
            polish += 1
            if polish > 3 or norm == 0.0:
                return beta, norm, it, "ok"
        jac = see_jacobian(beta, data, h, kernel)
        step = _newton_step(jac, m)
        if step is None:
            return beta, norm, it, ("ok" if norm <= tol else "singular")
        if np.linalg.norm(step) <= 1e-14 * (1.0 + np.linalg.norm(beta)):
            return beta, norm, it, ("ok" if norm <= tol else "stall")
        # trust region: fitted values may move by at most STEP_CAP bandwidths
        reach = float(np.max(np.abs(data.x @ step)))
        if reach > STEP_CAP * h:
            step = step * (STEP_CAP * h / reach)
        t = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = beta - t * step
            m_trial = see_moments(trial, data, h, kernel)
            n_trial = float(np.linalg.norm(m_trial))
            if n_trial < norm:
                break
            t *= opts.damping
        else:
            # no decrease possible: either at the rounding floor or stuck
            return beta, norm, it, ("ok" if norm <= tol else "stall")
        beta, m, norm = trial, m_trial, n_trial
    return beta, norm, opts.max_iter, ("ok" if norm <= tol else "maxiter")


def _newton_restarts(data, h, kernel, beta, opts, max_iter=25):
    """Newton, then deterministic restarts around a stalled point.

    With a higher-order G (non-monotone, G' < 0 near the window edges) the
    root branch can fold as h shrinks; the neighbouring branch is usually
    reached by shifting the fitted values by a bandwidth or two.
    """
    b, norm, it, status = _newton(data, h, kernel, beta, opts)
    if status == "ok":
        return b, norm, it, status
    total = it
    short = replace(opts, max_iter=min(opts.max_iter, max_iter))
    scale = np.maximum(np.mean(np.abs(data.x), axis=0), 1e-12)
    for mult in (1.0, -1.0, 2.0, -2.0, 4.0, -4.0):
        for k in range(data.d):
            start = b.copy()
            start[k] += mult * h / scale[k]
            b2, norm2, it2, st2 = _newton(data, h, kernel, start, short)
            total += it2
            if st2 == "ok":
                return b2, norm2, total, st2
    return b, norm, total, status


MAX_REFINE = 6
RESTART_DEPTH = 2


def _ladder(data, h_from, h_to, kernel, beta, opts, path, depth=0):
    """Walk the bandwidth down from h_from to h_to, warm-starting each rung.

    A rung that fails is retried with a gentler factor (its square root);
    perturbed restarts are used only once the rung has been refined twice.
    """
    total = 0
    h = h_from
    while h > h_to:
        h_next = max(h * opts.ladder_factor, h_to)
        solve = _newton_restarts if depth >= RESTART_DEPTH else _newton
        b, norm, it, status = solve(data, h_next, kernel, beta, opts)
        total += it
        if status != "ok":
            if depth >= MAX_REFINE:
                return None, total
            finer = replace(opts, ladder_factor=math.sqrt(opts.ladder_factor))
            b, extra = _ladder(data, h, h_next, kernel, beta, finer, path, depth + 1)
            total += extra
            if b is None:
                return None, total
        beta = b
        path.append((h_next, beta.copy()))
        h = h_next
    return beta, total


def solve_see(data: Dataset, h: float, kernel="horowitz4", init=None,
              opts: SolverOptions | None = None) -> SeeFit:
    """Solve m_n(beta) = 0 at bandwidth h.

    Starts from ``init`` (default: the IV estimate, the h -> infinity limit).
    If damped Newton stalls, bandwidth continuation is used: the smallest
    h * 2^k (k >= 1) at which Newton succeeds is found, and the solution is
    carried back down to h.
    """
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    kernel = get_kernel(kernel)
    opts = opts or SolverOptions()
    beta0 = iv_estimate(data) if init is None else np.asarray(init, dtype=float)

    beta, norm, iters, status = _newton(data, h, kernel, beta0, opts)
    path = []
    if status != "ok" and opts.continuation:
        iv = iv_estimate(data)
        for k in range(1, opts.max_expansions + 1):
            h_big = h * 2.0 ** k
            start = beta0 if k < opts.max_expansions // 2 else iv
            b, _, it, st = _newton(data, h_big, kernel, start, opts)
            iters += it
            if st == "ok":
                path.append((h_big, b.copy()))
                b, it = _ladder(data, h_big, h, kernel, b, opts, path)
                iters += it
                if b is not None:
                    beta = b
                    norm = float(np.linalg.norm(see_moments(beta, data, h, kernel)))
                    status = "ok" if norm <= _tolerance(opts, data.n, beta) else status
                break
    if status != "ok":
        # last resort: perturbed restarts at the target bandwidth itself
        b, n2, it, st = _newton_restarts(data, h, kernel, beta0, opts)
        iters += it
        if st == "ok":
            beta, norm, status = b, n2, st
    if status != "ok":
        cls = MaxIterations if status == "maxiter" else SingularJacobian
        what = "did not converge" if status == "maxiter" else "stalled"
        exc = cls(f"SEE solver {what} at h={h:g} (|m_n|={norm:.3g}); continuation failed")
        exc.path = path     # rungs that did solve, largest h first
        raise exc
    resid = data.y - data.x @ beta
    return SeeFit(beta, float(h), kernel.name, resid, norm, iters, path)


def large_h_limit(data: Dataset, h: float, kernel="horowitz4", exact: bool = False) -> np.ndarray:
    """Closed-form SEE root as h -> infinity.

    With the linearisation G(v) ~ 0.5 + G'(0) v this is the IV estimate with
    the intercept shifted by (h / G'(0)) (q - 0.5).  ``exact=True`` instead
    shifts by h * G^{-1}(q), which is the limit when the residual spread is
    negligible relative to h but (q - 0.5) h / G'(0) is not.
    """
    kernel = get_kernel(kernel)
    if not data.has_intercept:
        raise ValueError("intercept adjustment requires a leading column of ones in X")
    beta = iv_estimate(data).copy()
    if exact:
        beta[0] += h * kernel.g_inverse(data.q)
    else:
        beta[0] += h / kernel_constants(kernel).g_prime_at_zero * (data.q - 0.5)
    return beta


def tiny_bandwidth(residuals, c: float = 0.01) -> float:
    """c * range(residuals) / n, the bandwidth used as the h -> 0 stand-in."""
    residuals = np.asarray(residuals, dtype=float)
    return c * float(np.ptp(residuals)) / residuals.size


def unsmoothed_qr_reference(data: Dataset, kernel="horowitz4", h_start: float | None = None,
                            c: float = 0.01, opts: SolverOptions | None = None) -> SeeFit:
    """SEE at a tiny bandwidth, approximating the unsmoothed IV-QR estimator.

    The bandwidth is ``c * range(residuals) / n``; the root is reached by
    continuation from ``h_start`` (default: the plug-in bandwidth).
    """
    kernel = get_kernel(kernel)
    opts = opts or SolverOptions()
    if h_start is None:
        from .bandwidth import plugin_bandwidth

        h_start = plugin_bandwidth(data, kernel=kernel).selected
    start = solve_see(data, h_start, kernel, opts=opts)
    h_tiny = tiny_bandwidth(start.residuals, c)
    if h_tiny >= h_start:
        return start
    path = [(h_start, start.beta.copy())]
    beta, iters = _ladder(data, h_start, h_tiny, kernel, start.beta, opts, path)
    if beta is None:
        raise SingularJacobian(f"continuation to tiny h={h_tiny:g} failed")
    norm = float(np.linalg.norm(see_moments(beta, data, h_tiny, kernel)))
    return SeeFit(beta, h_tiny, kernel.name, data.y - data.x @ beta, norm,
                  start.iterations + iters, path)


def scf_criterion(beta, data: Dataset, h: float, kernel) -> float:
    """Smoothed check-function objective n^-1 sum u [G(u/h) - (1 - q)].

    Tends to the usual check loss as h -> 0; its gradient is :func:`scf_foc`.
    """
    kernel = get_kernel(kernel)
    u = data.y - data.x @ np.asarray(beta, dtype=float)
    return float(np.mean(u * (kernel.g(u / h) - (1.0 - data.q))))


def scf_foc(beta, data: Dataset, h: float, kernel) -> np.ndarray:
    """First-order condition of the smoothed check-function criterion."""
    kernel = get_kernel(kernel)
    u = data.y - data.x @ np.asarray(beta, dtype=float)
    v = -u / h
    w = kernel.g(v) - data.q - kernel.g_prime(v) * u / h
    return data.x.T @ w / data.n


def _scf_newton(data, h, kernel, beta, tol, max_iter):
    scale = np.maximum(np.mean(np.abs(data.x), axis=0), 1e-12)

    def jac(b):
        cols = []
        for k in range(data.d):
            e = np.zeros(data.d)
            e[k] = 1e-5 * h / scale[k]
            cols.append((scf_foc(b + e, data, h, kernel) - scf_foc(b - e, data, h, kernel)) / (2 * e[k]))
        return np.column_stack(cols)

    f = scf_foc(beta, data, h, kernel)
    norm = float(np.linalg.norm(f))
    for _ in range(max_iter):
        if norm < tol:
            break
        step = _newton_step(jac(beta), f)
        if step is None:
            break
        reach = float(np.max(np.abs(data.x @ step)))
        if reach > STEP_CAP * h:
            step = step * (STEP_CAP * h / reach)
        t = 1.0
        for _ in range(31):
            trial = beta - t * step
            f_trial = scf_foc(trial, data, h, kernel)
            if np.linalg.norm(f_trial) < norm:
                break
            t *= 0.5
        else:
            break
        beta, f, norm = trial, f_trial, float(np.linalg.norm(f_trial))
    return beta, norm


def scf_estimate(data: Dataset, h: float, kernel="horowitz4", init=None,
                 tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Smoothed-criterion-function estimator for exogenous QR (Z = X).

    Newton on :func:`scf_foc` with a central-difference Jacobian.  The
    criterion need not be convex, so every start (``init``, the SEE root and
    the IV estimate) is also run through a quasi-Newton descent on
    :func:`scf_criterion`; among stationary points found the one with the
    lowest criterion is returned.
    """
    from scipy.optimize import minimize

    if not np.array_equal(data.z, data.x):
        raise EndogenousNotSupported("SCF estimator requires Z = X")
    kernel = get_kernel(kernel)
    starts = []
    if init is not None:
        starts.append(np.asarray(init, dtype=float))
    try:
        starts.append(solve_see(data, h, kernel).beta)
    except (SingularJacobian, MaxIterations):
        pass
    starts.append(iv_estimate(data))

    best, best_val, best_norm = None, np.inf, np.inf
    for b0 in starts:
        b, norm = _scf_newton(data, h, kernel, b0.copy(), tol, max_iter)
        cands = [(b, norm)]
        if norm >= tol:
            res = minimize(scf_criterion, b0, args=(data, h, kernel), jac=scf_foc,
                           method="BFGS", options={"gtol": tol, "maxiter": 500})
            cands.append(_scf_newton(data, h, kernel, res.x, tol, max_iter))
        for b, norm in cands:
            if norm < tol:
                val = scf_criterion(b, data, h, kernel)
                if val < best_val - 1e-15:
                    best, best_val = b, val
            best_norm = min(best_norm, norm)
    if best is None:
        raise MaxIterations(f"SCF solver did not converge at h={h:g} (|foc|={best_norm:.3g})")
    return best
