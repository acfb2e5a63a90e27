"""Simulation designs with known quantile coefficients.

Every design returns a :class:`~seeqr.instruments.Dataset` and the true
coefficient vector at the design's quantile level.

Catalog
-------
H11, H12, H13
    Y = 1 + x + U, x ~ Unif(1, 5), n = 50.  U is t3 scaled to variance two
    (H11), a Gumbel variate scaled to variance two and shifted to median zero
    (H12), or (1 + x) V / 4 with V ~ N(0, 1) (H13).  Any q is allowed; the
    true coefficients absorb the q-quantile of U.
SCF1, SCF2, SCF3
    Y = 1 + X + s(X) (V - Phi^{-1}(q)), V ~ N(0, 1), with (q, s) equal to
    (0.5, 5), (0.25, 1 + X), (0.75, 1 + X); true beta = (1, 1).
E41, E42, E43
    Triangular IV designs with one endogenous regressor:
    y = b1 + b2 d + u,  d = 1 + 0.5 z + v2,  u = v1,  z ~ N(0, 1),
    (v1, v2) = (w1, sqrt(1 - rho^2) w2 + rho w1), rho = 0.5.
    E41: w ~ N(0, 1), n = 20, beta = (0, 1).
    E42: w ~ Cauchy, n = 250, beta = (0, 1 / (rho - sqrt(1 - rho^2))).
    E43: as E41 with q = 0.35, u recentred by -Phi^{-1}(0.35), n = 30.
JTPA1s, JTPA2s
    Self-selection into a binary treatment.  U ~ Unif(0, 1); the offer
    Z ~ Bern(0.67); D = 0 if Z = 0, else D ~ Bern(min(1, U / 0.75)).
    Y = X b_X + 2000 U D + Ginv(U), Ginv a mean-zero gamma quantile function.
    Covariates are synthetic Bernoullis (see ``_JTPA_COVARIATES``).  JTPA2s
    adds Z2 ~ N(0, 1), D2 = 0.8 Z2 + 0.2 Phi^{-1}(U) with coefficient 1000 and
    four N(0, 1) regressors with coefficient 500.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .instruments import Dataset

RHO = 0.5
PI = 0.5

# (probability, coefficient) of the synthetic binary JTPA covariates
_JTPA_COVARIATES = ((0.55, 1000.0), (0.30, -1500.0), (0.25, 500.0), (0.60, 2000.0))
_JTPA_INTERCEPT = 15000.0
_JTPA_GAMMA = (1.5, 11000.0)      # shape, scale of the error quantile function

_GUMBEL_SCALE = math.sqrt(12.0) / math.pi
_GUMBEL_MEDIAN = -math.log(math.log(2.0))


@dataclass(frozen=True)
class DgpSpec:
    id: str
    n: int
    q: float

    def with_n(self, n: int) -> "DgpSpec":
        return replace(self, n=n)


_DEFAULTS = {
    "H11": (50, 0.5), "H12": (50, 0.5), "H13": (50, 0.5),
    "SCF1": (50, 0.5), "SCF2": (50, 0.25), "SCF3": (50, 0.75),
    "E41": (20, 0.5), "E42": (250, 0.5), "E43": (30, 0.35),
    "JTPA1s": (5102, 0.5), "JTPA2s": (5000, 0.5),
}
_FIXED_Q = {"SCF1", "SCF2", "SCF3", "E41", "E42", "E43"}
DGP_IDS = tuple(_DEFAULTS)


def get_dgp(dgp_id: str, n: int | None = None, q: float | None = None,
            full_scale: bool = False) -> DgpSpec:
    """Look up a design by id, optionally overriding n or q."""
    if dgp_id not in _DEFAULTS:
        raise ValueError(f"unknown DGP {dgp_id!r}; choose from {list(DGP_IDS)}")
    n0, q0 = _DEFAULTS[dgp_id]
    if dgp_id == "JTPA2s" and full_scale:
        n0 = 50000
    if q is not None and q != q0 and dgp_id in _FIXED_Q:
        raise ValueError(f"{dgp_id} is defined only at q={q0}")
    q = q0 if q is None else float(q)
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    return DgpSpec(dgp_id, int(n or n0), q)


def _gamma_quantile(u):
    a, s = _JTPA_GAMMA
    return stats.gamma.ppf(u, a, scale=s) - a * s


def error_quantile(dgp: DgpSpec, u: float, x: float | None = None) -> float:
    """q-quantile of the structural error (used for the true coefficients)."""
    i = dgp.id
    if i == "H11":
        return stats.t.ppf(u, 3) * math.sqrt(2.0 / 3.0)
    if i == "H12":
        return _GUMBEL_SCALE * (stats.gumbel_r.ppf(u) - _GUMBEL_MEDIAN)
    raise ValueError(f"no scalar error quantile for {i}")


def true_beta(dgp: DgpSpec) -> np.ndarray:
    """Quantile coefficients of ``dgp`` at its level q."""
    i, q = dgp.id, dgp.q
    if i in ("H11", "H12"):
        return np.array([1.0 + error_quantile(dgp, q), 1.0])
    if i == "H13":
        c = stats.norm.ppf(q) / 4.0
        return np.array([1.0 + c, 1.0 + c])
    if i.startswith("SCF"):
        return np.array([1.0, 1.0])
    if i in ("E41", "E43"):
        return np.array([0.0, 1.0])
    if i == "E42":
        return np.array([0.0, 1.0 / (RHO - math.sqrt(1.0 - RHO ** 2))])
    if i.startswith("JTPA"):
        covs = [c for _, c in _JTPA_COVARIATES]
        b = [_JTPA_INTERCEPT + float(_gamma_quantile(q)), 2000.0 * q]
        if i == "JTPA2s":
            b.append(1000.0)
            covs = covs + [500.0] * 4
        return np.array(b + covs)
    raise ValueError(i)


def _exogenous(rng, n, u_fn, q):
    x = rng.uniform(1.0, 5.0, n)
    xm = np.column_stack([np.ones(n), x])
    y = 1.0 + x + u_fn(x)
    return Dataset(y, xm, xm.copy(), q)


def _triangular(rng, n, q, cauchy, recentre, beta):
    draw = rng.standard_cauchy if cauchy else rng.standard_normal
    w1, w2 = draw(n), draw(n)
    v1 = w1
    v2 = math.sqrt(1 - RHO ** 2) * w2 + RHO * w1
    z = rng.standard_normal(n)
    d = 1.0 + PI * z + v2
    u = v1 - (stats.norm.ppf(q) if recentre else 0.0)
    y = beta[0] + beta[1] * d + u
    ones = np.ones(n)
    return Dataset(y, np.column_stack([ones, d]), np.column_stack([ones, z]), q)


def _jtpa(rng, n, q, second):
    u = rng.uniform(0.0, 1.0, n)
    offer = (rng.uniform(size=n) < 0.67).astype(float)
    take = rng.uniform(size=n) < np.minimum(1.0, u / 0.75)
    d = offer * take
    covs = np.column_stack([(rng.uniform(size=n) < p).astype(float) for p, _ in _JTPA_COVARIATES])
    coefs = np.array([c for _, c in _JTPA_COVARIATES])
    y = _JTPA_INTERCEPT + covs @ coefs + 2000.0 * u * d + _gamma_quantile(u)
    ones = np.ones(n)
    x_cols, z_cols = [ones, d], [ones, offer]
    if second:
        z2 = rng.standard_normal(n)
        d2 = 0.8 * z2 + 0.2 * stats.norm.ppf(u)
        extra = rng.standard_normal((n, 4))
        y = y + 1000.0 * d2 + extra @ np.full(4, 500.0)
        x_cols.append(d2)
        z_cols.append(z2)
        covs = np.column_stack([covs, extra])
    x = np.column_stack(x_cols + [covs])
    z = np.column_stack(z_cols + [covs])
    return Dataset(y, x, z, q)


def generate(dgp: DgpSpec, seed) -> tuple[Dataset, np.ndarray]:
    """Draw one sample from ``dgp``.

    ``seed`` may be an int, a SeedSequence or a Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    i, n, q = dgp.id, dgp.n, dgp.q
    if i == "H11":
        data = _exogenous(rng, n, lambda x: rng.standard_t(3, x.size) * math.sqrt(2.0 / 3.0), q)
    elif i == "H12":
        data = _exogenous(rng, n, lambda x: _GUMBEL_SCALE * (rng.gumbel(size=x.size) - _GUMBEL_MEDIAN), q)
    elif i == "H13":
        data = _exogenous(rng, n, lambda x: (1.0 + x) * rng.standard_normal(x.size) / 4.0, q)
    elif i in ("SCF1", "SCF2", "SCF3"):
        shift = stats.norm.ppf(q)
        if i == "SCF1":
            data = _exogenous(rng, n, lambda x: 5.0 * (rng.standard_normal(x.size) - shift), q)
        else:
            data = _exogenous(rng, n, lambda x: (1.0 + x) * (rng.standard_normal(x.size) - shift), q)
    elif i in ("E41", "E42", "E43"):
        data = _triangular(rng, n, q, cauchy=(i == "E42"), recentre=(i == "E43"),
                           beta=true_beta(dgp))
    elif i in ("JTPA1s", "JTPA2s"):
        data = _jtpa(rng, n, q, second=(i == "JTPA2s"))
    else:
        raise ValueError(f"unknown DGP {i!r}")
    return data, true_beta(dgp)
