"""Smoothing functions G (integrated kernels) and their constants.

Each kernel is a compactly supported, even density G' on [-1, 1] of order r,
together with its integral G.  G replaces the indicator 1{u > 0} in the
smoothed estimating equations; the constants below enter every bandwidth and
inference formula.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import quad

QUAD_TOL = 1e-12


@dataclass(frozen=True)
class SmoothingKernel:
    """An r-th order smoothing function G with derivative G'.

    ``g`` and ``g_prime`` are vectorised and defined on the whole real line:
    G is 0 below -1 and 1 above 1, G' vanishes outside [-1, 1].
    """

    name: str
    r: int
    g: Callable[[np.ndarray], np.ndarray]
    g_prime: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float] = (-1.0, 1.0)

    def __repr__(self):
        return f"SmoothingKernel({self.name!r}, r={self.r})"

    def __hash__(self):
        return hash(self.name)

    def __eq__(self, other):
        return isinstance(other, SmoothingKernel) and other.name == self.name

    def __reduce__(self):
        # closures do not pickle; rebuild from the registry in worker processes
        return (get_kernel, (self.name,))

    def g_inverse(self, p: float) -> float:
        """Solve G(v) = p for v in (-1, 1).

        Only meaningful where G is monotone around the root, which holds for
        every shipped kernel on the central branch used here.
        """
        from scipy.optimize import brentq

        if not 0.0 < p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        return brentq(lambda v: float(self.g(np.asarray(v))) - p, -1.0, 1.0,
                      xtol=1e-15, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class KernelConstants:
    moment_r: float
    one_minus_g_sq: float
    gprime_v_sq: float
    g_prime_at_zero: float


def _piecewise(inner, below=0.0, above=1.0):
    def f(u):
        u = np.asarray(u, dtype=float)
        val = inner(np.clip(u, -1.0, 1.0))
        # exact constants outside the open window, whatever the rounding of inner(+-1)
        val = np.where(u <= -1.0, below, np.where(u >= 1.0, above, val))
        return float(val) if val.ndim == 0 else val
    return f


def _horowitz_g(u):
    u2 = u * u
    return 0.5 + (105.0 / 64.0) * u * (1.0 + u2 * (-5.0 / 3.0 + u2 * (7.0 / 5.0 - 3.0 / 7.0 * u2)))


def _horowitz_gp(u):
    u2 = u * u
    return (105.0 / 64.0) * (1.0 + u2 * (-5.0 + u2 * (7.0 - 3.0 * u2)))


def horowitz_kernel() -> SmoothingKernel:
    """Fourth-order G built from the integrated Mueller polynomial kernel."""
    return SmoothingKernel(
        "horowitz4", 4,
        _piecewise(_horowitz_g, 0.0, 1.0),
        _piecewise(_horowitz_gp, 0.0, 0.0),
    )


def epanechnikov_kernel() -> SmoothingKernel:
    """Second-order G from the integrated Epanechnikov density."""
    return SmoothingKernel(
        "epanechnikov2", 2,
        _piecewise(lambda u: 0.5 + 0.75 * u - 0.25 * u ** 3, 0.0, 1.0),
        _piecewise(lambda u: 0.75 * (1.0 - u * u), 0.0, 0.0),
    )


def uniform_kernel() -> SmoothingKernel:
    """Second-order G from the uniform density; gives the Winsorized mean."""
    return SmoothingKernel(
        "uniform2", 2,
        _piecewise(lambda u: 0.5 * (u + 1.0), 0.0, 1.0),
        _piecewise(lambda u: 0.5 + 0.0 * u, 0.0, 0.0),
    )


KERNELS = {
    "horowitz4": horowitz_kernel,
    "epanechnikov2": epanechnikov_kernel,
    "uniform2": uniform_kernel,
}


def get_kernel(kernel: str | SmoothingKernel) -> SmoothingKernel:
    if isinstance(kernel, SmoothingKernel):
        return kernel
    try:
        return KERNELS[kernel]()
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}") from None


def _integrate(f, a=-1.0, b=1.0):
    val, _ = quad(f, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return val


def kernel_moment(k: int, kernel: SmoothingKernel) -> float:
    """Return the k-th moment of G' over [-1, 1]."""
    if k < 0 or k > 8:
        raise ValueError("moment order must be in 0..8")
    return _integrate(lambda v: v ** k * kernel.g_prime(v))


@lru_cache(maxsize=None)
def _constants(name: str) -> KernelConstants:
    kernel = get_kernel(name)
    one_minus = 1.0 - _integrate(lambda u: kernel.g(u) ** 2)
    if one_minus <= 0:
        raise ValueError(f"kernel {name}: 1 - int G^2 = {one_minus} <= 0; smoothing would inflate variance")
    return KernelConstants(
        moment_r=kernel_moment(kernel.r, kernel),
        one_minus_g_sq=one_minus,
        gprime_v_sq=_integrate(lambda v: (kernel.g_prime(v) * v) ** 2),
        g_prime_at_zero=float(kernel.g_prime(0.0)),
    )


def kernel_constants(kernel: SmoothingKernel | str) -> KernelConstants:
    """Moment constants of a kernel, by quadrature (cached per kernel name)."""
    return _constants(get_kernel(kernel).name)
