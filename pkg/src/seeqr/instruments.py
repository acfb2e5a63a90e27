"""Dataset container and instrument transforms.

Over-identified instruments are reduced to exactly ``d = dim(X)`` columns by
projecting X onto the instrument space (the usual 2SLS first stage).  The
sieve variant first expands Z into polynomial powers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankError

COND_LIMIT = 1e12
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Dataset:
    """Observations for a linear IV quantile regression.

    ``z`` holds the instruments actually used in the estimating equations.
    It must have the same number of columns as ``x``; use
    :func:`make_dataset` to project a wider instrument set.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    q: float = 0.5

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float).ravel()
        x = np.ascontiguousarray(np.atleast_2d(np.asarray(self.x, dtype=float).T).T)
        z = np.ascontiguousarray(np.atleast_2d(np.asarray(self.z, dtype=float).T).T)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        n, d = x.shape
        if y.shape[0] != n or z.shape[0] != n:
            raise ValueError("y, x and z must have the same number of rows")
        if n <= d:
            raise ValueError(f"need n > d (got n={n}, d={d})")
        if z.shape[1] != d:
            raise ValueError(
                f"estimating equations need exactly d={d} instruments, got {z.shape[1]}; "
                "project them with project_instruments or sieve_instruments")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        sv = np.linalg.svd(z, compute_uv=False)
        if sv[-1] <= RANK_RTOL * sv[0]:
            raise RankError("instrument matrix is rank deficient")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def has_intercept(self) -> bool:
        return bool(np.all(self.x[:, 0] == 1.0))

    def with_q(self, q: float) -> "Dataset":
        return Dataset(self.y, self.x, self.z, q)


def _check_conditioning(m, what):
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[-1] == 0 or (sv[0] / sv[-1]) ** 2 > COND_LIMIT:
        raise RankError(f"{what} is numerically singular (cond(M'M) > {COND_LIMIT:g})")


def _ols_fitted(x, basis):
    """Least-squares fitted values of each column of ``x`` on ``basis`` via QR."""
    qmat, _ = np.linalg.qr(basis, mode="reduced")
    return qmat @ (qmat.T @ x)


def project_instruments(x, z):
    """Return the projection of each column of X on the column space of Z.

    Row j of the result equals W_n Z_j with
    W_n = (n^-1 sum X Z')(n^-1 sum Z Z')^-1.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[1] < x.shape[1]:
        raise ValueError(
            f"order condition fails: {z.shape[1]} instruments for {x.shape[1]} regressors; "
            "the estimating equations need at least as many instruments as regressors "
            "(exact identification after projection)")
    _check_conditioning(z, "Z'Z")
    return _ols_fitted(x, z)


def polynomial_basis(z, degree: int, interactions: bool = False):
    """Intercept plus powers 1..degree of every non-constant column of ``z``.

    Constant columns are dropped (the intercept already spans them).  With
    ``interactions`` all cross products of total degree <= ``degree`` are
    included as well.
    """
    if degree < 1:
        raise ValueError("sieve degree must be >= 1")
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    keep = [j for j in range(z.shape[1]) if np.ptp(z[:, j]) > 0]
    zc = z[:, keep]
    cols = [np.ones(z.shape[0])]
    if interactions:
        from itertools import combinations_with_replacement

        for deg in range(1, degree + 1):
            for combo in combinations_with_replacement(range(zc.shape[1]), deg):
                cols.append(np.prod(zc[:, list(combo)], axis=1))
    else:
        for j in range(zc.shape[1]):
            for p in range(1, degree + 1):
                cols.append(zc[:, j] ** p)
    return np.column_stack(cols)


def sieve_instruments(x, z, degree: int, interactions: bool = False):
    """Project X onto a polynomial sieve in Z (see :func:`polynomial_basis`)."""
    basis = polynomial_basis(z, degree, interactions)
    try:
        _check_conditioning(basis, "sieve basis")
    except RankError as exc:
        raise RankError(f"{exc}; try a smaller sieve degree than {degree}") from None
    x = np.asarray(x, dtype=float)
    if basis.shape[1] < x.shape[1]:
        raise ValueError("sieve basis has fewer columns than X")
    return _ols_fitted(x, basis)


def make_dataset(y, x, z=None, q=0.5, sieve_degree=None, project=True):
    """Build a :class:`Dataset`, transforming instruments as needed.

    ``z=None`` means exogenous regression (Z = X).  If Z already has d
    columns it is used as is unless a sieve is requested.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if z is None:
        return Dataset(y, x, x.copy(), q)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if sieve_degree is not None:
        zt = sieve_instruments(x, z, sieve_degree)
    elif z.shape[1] == x.shape[1]:
        zt = z
    elif not project:
        raise ValueError(
            f"{z.shape[1]} instruments for {x.shape[1]} regressors: exact identification "
            "requires equal counts when projection is disabled")
    else:
        zt = project_instruments(x, z)
    return Dataset(y, x, zt, q)
