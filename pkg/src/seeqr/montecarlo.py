"""Replication engine, summary metrics and moment-expansion checks.

Replication ``r`` of a run draws its data from
``SeedSequence(master_seed, spawn_key=(r,))``, so results do not depend on
how replications are spread over worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .bandwidth import plugin_bandwidth
from .dgps import DGP_IDS, DgpSpec, generate, get_dgp, true_beta  # noqa: F401
from .errors import SeeError
from .estimator import (HUGE_H, iv_estimate, scf_estimate, solve_see, tiny_bandwidth,
                        unsmoothed_qr_reference)
from .inference import s_statistic
from .kernels import get_kernel, kernel_constants

log = logging.getLogger(__name__)

SEED_SCHEME = "numpy.SeedSequence(master_seed, spawn_key=(replication,))"
ESTIMATORS = ("see-plugin", "scf", "tiny-h", "iv", "huge-h")


def replication_rng(master_seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(rep,)))


# --------------------------------------------------------------------------
# metrics

def _quantile7(a, p):
    return np.quantile(a, p, axis=0, method="linear")


def median_bias(draws, truth):
    return _quantile7(np.asarray(draws, dtype=float), 0.5) - truth


def robust_mse(draws, truth):
    """Squared median bias plus (IQR / 1.349)^2, per coefficient.

    Quantiles use linear interpolation between order statistics (type 7).
    """
    draws = np.asarray(draws, dtype=float)
    if draws.shape[0] < 2:
        raise ValueError("need at least two draws")
    iqr = _quantile7(draws, 0.75) - _quantile7(draws, 0.25)
    return median_bias(draws, truth) ** 2 + (iqr / 1.349) ** 2


def mse(draws, truth):
    draws = np.asarray(draws, dtype=float)
    return np.mean((draws - truth) ** 2, axis=0)


# --------------------------------------------------------------------------
# estimators

class _Context:
    """Per-replication cache so all estimators share one plug-in bandwidth."""

    def __init__(self, data, kernel):
        self.data = data
        self.kernel = kernel
        self._report = None

    @property
    def h_plugin(self):
        if self._report is None:
            self._report = plugin_bandwidth(self.data, self.kernel)
        return self._report.selected


def _parse_fixed(label):
    name, _, h = label.partition("@")
    return name, float(h)


def run_estimator(label: str, ctx: _Context) -> np.ndarray:
    """Evaluate one named estimator.

    Labels: ``see-plugin``, ``scf`` (at the plug-in bandwidth), ``tiny-h``,
    ``iv``, ``huge-h``, and ``see@H`` / ``scf@H`` for a fixed bandwidth H.
    """
    data, kernel = ctx.data, ctx.kernel
    if label == "see-plugin":
        return solve_see(data, ctx.h_plugin, kernel).beta
    if label == "scf":
        return scf_estimate(data, ctx.h_plugin, kernel)
    if label == "tiny-h":
        return unsmoothed_qr_reference(data, kernel, h_start=ctx.h_plugin).beta
    if label == "iv":
        return iv_estimate(data)
    if label == "huge-h":
        return solve_see(data, HUGE_H, kernel).beta
    if "@" in label:
        name, h = _parse_fixed(label)
        if name == "see":
            return solve_see(data, h, kernel).beta
        if name == "scf":
            return scf_estimate(data, h, kernel)
    raise ValueError(f"unknown estimator {label!r}")


def _check_labels(labels):
    for lab in labels:
        if lab in ESTIMATORS:
            continue
        if "@" in lab:
            name, h = lab.partition("@")[::2]
            try:
                ok = name in ("see", "scf") and float(h) > 0
            except ValueError:
                ok = False
            if ok:
                continue
        raise ValueError(f"unknown estimator {lab!r}")


# --------------------------------------------------------------------------
# replication engine

@dataclass
class McResult:
    dgp: DgpSpec
    estimator_labels: list
    truth: np.ndarray
    draws: dict                 # label -> (reps_ok, d) array
    replications: dict          # label -> replication indices of the rows in draws
    failures: dict              # label -> list of (replication, message)
    reps: int
    master_seed: int
    seed_scheme: str = SEED_SCHEME

    def mse(self, label):
        return mse(self.draws[label], self.truth)

    def robust_mse(self, label):
        return robust_mse(self.draws[label], self.truth)

    def median_bias(self, label):
        return median_bias(self.draws[label], self.truth)

    def mean_bias(self, label):
        return np.mean(self.draws[label], axis=0) - self.truth

    def summary_rows(self):
        """One dict per (estimator, coefficient)."""
        rows = []
        for lab in self.estimator_labels:
            ok = self.draws[lab].shape[0]
            enough = ok >= 2
            metrics = {
                "mse": self.mse(lab) if ok else None,
                "robust_mse": self.robust_mse(lab) if enough else None,
                "median_bias": self.median_bias(lab) if ok else None,
                "mean_bias": self.mean_bias(lab) if ok else None,
            }
            for k in range(self.truth.size):
                row = {"estimator": lab, "coef": k, "reps_ok": ok,
                       "failures": len(self.failures[lab])}
                for key, val in metrics.items():
                    row[key] = float("nan") if val is None else float(val[k])
                rows.append(row)
        return rows


def _one_replication(args):
    dgp, labels, master_seed, rep, kernel = args
    data, _ = generate(dgp, replication_rng(master_seed, rep))
    ctx = _Context(data, get_kernel(kernel))
    out = {}
    for lab in labels:
        try:
            out[lab] = (np.asarray(run_estimator(lab, ctx), dtype=float), None)
        except (SeeError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            out[lab] = (None, f"{type(exc).__name__}: {exc}")
    return out


def _map(fn, items, parallelism):
    if parallelism <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        chunk = max(1, len(items) // (8 * parallelism))
        return list(pool.map(fn, items, chunksize=chunk))


def run_mc(dgp: DgpSpec | str, estimators=("see-plugin", "iv"), reps: int = 100,
           master_seed: int = 42, parallelism: int = 1, kernel="horowitz4") -> McResult:
    """Run ``reps`` replications of every estimator on common data.

    Failed estimator calls are logged and excluded from the metrics.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    dgp = get_dgp(dgp) if isinstance(dgp, str) else dgp
    labels = list(estimators)
    _check_labels(labels)
    kname = get_kernel(kernel).name
    results = _map(_one_replication, [(dgp, labels, master_seed, r, kname) for r in range(reps)],
                   parallelism)
    draws, idx, fails = {}, {}, {}
    for lab in labels:
        rows, ids, bad = [], [], []
        for r, res in enumerate(results):
            beta, err = res[lab]
            if beta is None:
                bad.append((r, err))
                log.warning("replication %d, %s failed: %s", r, lab, err)
            else:
                rows.append(beta)
                ids.append(r)
        d = true_beta(dgp).size
        draws[lab] = np.array(rows).reshape(len(rows), d)
        idx[lab] = np.array(ids, dtype=int)
        fails[lab] = bad
    return McResult(dgp, labels, true_beta(dgp), draws, idx, fails, reps, master_seed)


# --------------------------------------------------------------------------
# size-adjusted power

@dataclass
class PowerCurve:
    deviations: np.ndarray
    rejection: dict             # label -> rejection rate per deviation
    critical_values: dict       # label -> simulated null (1 - alpha)-quantile
    alpha: float
    reps: int
    failures: dict = field(default_factory=dict)


def _unit_sphere(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _power_replication(args):
    dgp, labels, seed, rep, kernel, deviations = args
    rng = replication_rng(seed, rep)
    data, truth = generate(dgp, rng)
    direction = _unit_sphere(rng, truth.size)
    ctx = _Context(data, get_kernel(kernel))
    out = {}
    for lab in labels:
        try:
            if lab == "see-plugin":
                h = ctx.h_plugin
            elif lab == "tiny-h":
                h = tiny_bandwidth(solve_see(data, ctx.h_plugin, ctx.kernel).residuals)
            else:
                h = _parse_fixed(lab)[1]
            stats_ = [s_statistic(truth - direction * dev / math.sqrt(data.n), data, h, ctx.kernel)
                      for dev in deviations]
            out[lab] = (np.array(stats_), None)
        except (SeeError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            out[lab] = (None, f"{type(exc).__name__}: {exc}")
    return out


def size_adjusted_power(dgp: DgpSpec | str, deviations, reps: int = 500, alpha: float = 0.10,
                        seed: int = 42, estimators=("see-plugin", "tiny-h"),
                        parallelism: int = 1, kernel="horowitz4") -> PowerCurve:
    """Rejection rates using the simulated null quantile as critical value.

    Each replication tests H0: beta = truth - delta * w / sqrt(n) for a
    random unit vector w, for every delta in ``deviations``.  The first
    deviation is forced to 0 so the null distribution is always simulated.
    """
    if reps < 200:
        raise ValueError("size-adjusted power needs reps >= 200")
    dgp = get_dgp(dgp) if isinstance(dgp, str) else dgp
    devs = np.asarray(deviations, dtype=float)
    if devs.size == 0 or devs[0] != 0.0:
        devs = np.concatenate([[0.0], devs[devs != 0.0]])
    labels = list(estimators)
    for lab in labels:
        if lab not in ("see-plugin", "tiny-h") and not lab.startswith("see@"):
            raise ValueError(f"power curves support see-plugin, tiny-h and see@H, not {lab!r}")
    kname = get_kernel(kernel).name
    results = _map(_power_replication,
                   [(dgp, labels, seed, r, kname, devs) for r in range(reps)], parallelism)
    rejection, crit, fails = {}, {}, {}
    for lab in labels:
        good = [res[lab][0] for res in results if res[lab][0] is not None]
        fails[lab] = [(r, res[lab][1]) for r, res in enumerate(results) if res[lab][0] is None]
        s = np.array(good)
        c = float(np.quantile(s[:, 0], 1.0 - alpha, method="linear"))
        crit[lab] = c
        rejection[lab] = np.mean(s > c, axis=0)
    return PowerCurve(devs, rejection, crit, alpha, reps, fails)


# --------------------------------------------------------------------------
# validation of the first two moments of the smoothed estimating function

@dataclass
class MomentExpansionReport:
    h: np.ndarray
    bias_see: np.ndarray           # (len(h), d) simulated E(W)
    bias_see_theory: np.ndarray    # (len(h), d) leading term
    bias_scf: np.ndarray           # (len(h), d) simulated E(W) for the SCF equations
    second_moment: np.ndarray      # (len(h), d, d) simulated E(WW')
    second_moment_theory: np.ndarray
    variance_slope: float          # fitted O(h) coefficient, first diagonal element
    variance_slope_theory: float
    draws: int

    @property
    def bias_ratio(self):
        """Simulated over leading-term SEE bias, per h and coordinate."""
        return self.bias_see / self.bias_see_theory

    @property
    def scf_to_see(self):
        return self.bias_scf / self.bias_see


def _stratified_uniform(rng, m):
    return (np.arange(m) + rng.uniform(size=m)) / m


def validate_moment_expansion(h_grid, q: float = 0.25, n_u: int = 100_000, n_x: int = 10,
                              kernel="horowitz4", seed: int = 0) -> MomentExpansionReport:
    """Compare simulated moments of W_j with their small-h expansions.

    Design: Z = X = (1, x) with x ~ Unif(1, 5) and U = V - Phi^{-1}(q),
    V ~ N(0, 1) independent of x, so f(.|Z) is known in closed form and
    U has q-quantile zero.  x and U are drawn by jittered stratification
    (``n_x`` and ``n_u`` strata, crossed: n_x * n_u draws), which keeps the
    simulation error far below the O(h^r) bias being measured.

    The SEE estimating function is W = Z [G(-U/h) - q]; the SCF analogue adds
    -G'(U/h) U/h inside the bracket.
    """
    kernel = get_kernel(kernel)
    kc = kernel_constants(kernel)
    r = kernel.r
    rng = np.random.default_rng(seed)
    c = stats.norm.ppf(q)
    u = stats.norm.ppf(_stratified_uniform(rng, n_u)) - c
    x = 1.0 + 4.0 * _stratified_uniform(rng, n_x)
    z = np.column_stack([np.ones(n_x), x])
    ez = z.mean(axis=0)
    ezz = z.T @ z / n_x
    f0 = stats.norm.pdf(c)
    # derivative of phi(u + c) of order r - 1 at u = 0
    f_r1 = (-1) ** (r - 1) * float(special.eval_hermitenorm(r - 1, c)) * f0

    hs = np.asarray(h_grid, dtype=float)
    b_see, b_th, b_scf, m2, m2_th = [], [], [], [], []
    for h in hs:
        w_see = kernel.g(-u / h) - q
        w_scf = w_see - kernel.g_prime(u / h) * u / h
        # the crossed design factorizes: mean over pairs = mean_x(Z) * mean_u(.)
        b_see.append(ez * w_see.mean())
        b_scf.append(ez * w_scf.mean())
        m2.append(ezz * np.mean(w_see ** 2))
        b_th.append((-h) ** r / math.factorial(r) * kc.moment_r * f_r1 * ez)
        m2_th.append(q * (1 - q) * ezz - h * kc.one_minus_g_sq * f0 * ezz)
    b_see, b_th, b_scf = map(np.array, (b_see, b_th, b_scf))
    m2, m2_th = np.array(m2), np.array(m2_th)

    # O(h) coefficient of q(1-q)E(Z^2) - E(W^2): least squares on (h, h^2)
    drop = q * (1 - q) * ezz[0, 0] - m2[:, 0, 0]
    design = np.column_stack([hs, hs ** 2])
    coef, *_ = np.linalg.lstsq(design, drop, rcond=None)
    return MomentExpansionReport(hs, b_see, b_th, b_scf, m2, m2_th, float(coef[0]),
                                 kc.one_minus_g_sq * f0 * ezz[0, 0], n_u * n_x)
