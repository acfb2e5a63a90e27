"""Acceptance criteria, one check per criterion.

Each ``criterion_N`` returns (passed, detail).  Under pytest every criterion
is a test and a PASS/FAIL line per criterion is printed in the terminal
summary; ``python tests/test_acceptance.py`` prints the same lines.

Criteria 3, 9 and 10 fail with this implementation; the README explains why
the stated targets are not reachable.  They are checked exactly as stated.

Set SEEQR_FULL=1 to add the (slow) synthetic JTPA ordering check.
"""

from __future__ import annotations

import io
import math
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from oracles import check_function_minimizer, winsorized_root  # noqa: E402

from seeqr.bandwidth import (SmoothingMoments, estimate_moments, h_star_general,  # noqa: E402
                             intercept_ratio, plugin_bandwidth)
from seeqr.cli import main as cli_main  # noqa: E402
from seeqr.dgps import generate, get_dgp  # noqa: E402
from seeqr.estimator import (HUGE_H, iv_estimate, large_h_limit, see_jacobian,  # noqa: E402
                             see_moments, solve_see, unsmoothed_qr_reference)
from seeqr.inference import corrected_critical_value, q_power, s_statistic  # noqa: E402
from seeqr.instruments import Dataset, make_dataset  # noqa: E402
from seeqr.kernels import get_kernel, kernel_constants, kernel_moment  # noqa: E402
from seeqr.montecarlo import replication_rng, run_mc, validate_moment_expansion  # noqa: E402
from seeqr.probdist import chi_sq_quantile  # noqa: E402

SEED = 42


def criterion_1():
    t0 = time.perf_counter()
    k = get_kernel("horowitz4")
    m = [kernel_moment(j, k) for j in range(5)]
    g4 = kernel_constants("horowitz4").gprime_v_sq
    ge = kernel_constants("epanechnikov2").gprime_v_sq
    dt = time.perf_counter() - t0
    ok = (abs(m[0] - 1) < 1e-10 and all(abs(v) < 1e-10 for v in m[1:4]) and abs(m[4]) > 1e-3
          and abs(g4 - 0.061) <= 1e-3 and abs(ge - 0.086) <= 1e-3 and dt < 1.0)
    return ok, (f"int G'-1={m[0] - 1:.1e}, max|m1..m3|={max(map(abs, m[1:4])):.1e}, m4={m[4]:.4f}, "
                f"[G'v]^2: horowitz={g4:.4f}, epanechnikov={ge:.4f}, {dt:.2f}s")


def criterion_2():
    rng = np.random.default_rng(SEED)
    k = get_kernel("horowitz4")
    worst = 0.0
    for _ in range(50):
        n, d = int(rng.integers(30, 300)), int(rng.integers(1, 5))
        x = np.column_stack([np.ones(n), rng.normal(size=(n, d - 1))])
        z = np.column_stack([np.ones(n), x[:, 1:] + rng.normal(size=(n, d - 1))]) if rng.uniform() < 0.5 else x
        beta = rng.normal(size=d)
        y = x @ beta + rng.standard_t(4, n)
        data = Dataset(y, x, z, float(rng.uniform(0.1, 0.9)))
        h = float(np.exp(rng.uniform(np.log(0.05), np.log(5))))
        b = beta + rng.normal(scale=0.2, size=d)
        jac = see_jacobian(b, data, h, k)
        eps = 1e-6 * h
        fd = np.column_stack([(see_moments(b + e, data, h, k) - see_moments(b - e, data, h, k)) / (2 * eps)
                              for e in np.eye(d) * eps])
        worst = max(worst, float(np.max(np.abs(jac - fd)) / np.max(np.abs(jac))))
    return worst < 1e-6, f"max relative error {worst:.2e} over 50 triples"


def criterion_3():
    rng = np.random.default_rng(SEED)
    worst = {0.25: 0.0, 0.5: 0.0, 0.75: 0.0}
    worst_exact = 0.0
    for i in range(20):
        n, d = 200, int(rng.integers(2, 4))
        x = np.column_stack([np.ones(n), rng.normal(size=(n, d - 1))])
        extra = i % 2          # odd designs are over-identified
        z = np.column_stack([x, rng.normal(size=(n, extra))]) if extra else x
        z[:, 1:d] += 0.5 * rng.normal(size=(n, d - 1)) if extra else 0.0
        y = x @ rng.normal(size=d) + rng.normal(size=n)
        for q in worst:
            data = make_dataset(y, x, z, q=q)
            fit = solve_see(data, HUGE_H)
            iv = iv_estimate(data)
            target = iv.copy()
            target[0] += 64 * HUGE_H / 105 * (q - 0.5)
            scale = 1 + np.max(np.abs(iv))
            worst[q] = max(worst[q], float(np.max(np.abs(fit.beta - target)) / scale))
            exact = large_h_limit(data, HUGE_H, exact=True)
            worst_exact = max(worst_exact, float(np.max(np.abs(fit.beta - exact)) / scale))
    ok = all(v < 1e-5 for v in worst.values())
    detail = ", ".join(f"q={q}: {v:.1e}" for q, v in worst.items())
    return ok, f"{detail} (limit with h*G^-1(q) shift: {worst_exact:.1e})"


def criterion_4():
    t0 = time.perf_counter()
    dgp = get_dgp("H11")
    worst = 0.0
    for rep in range(20):
        data, _ = generate(dgp, replication_rng(SEED, rep))
        tiny = unsmoothed_qr_reference(data)
        ref, _ = check_function_minimizer(data.x, data.y, data.q)
        worst = max(worst, abs(tiny.beta[1] - ref[1]))
    dt = time.perf_counter() - t0
    return worst < 0.01 and dt < 60, f"max |slope - check-function minimizer| = {worst:.2e}, {dt:.1f}s"


def criterion_5():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(11, 200))
        y = rng.standard_t(2, n) * rng.uniform(0.5, 3) + rng.normal()
        h = float(rng.uniform(0.1, 3.0))
        ones = np.ones((n, 1))
        fit = solve_see(Dataset(y, ones, ones, 0.5), h, kernel="uniform2")
        worst = max(worst, abs(fit.beta[0] - winsorized_root(y, h)))
    dt = time.perf_counter() - t0
    return worst < 1e-9 and dt < 1.0, f"max |SEE - bisection| = {worst:.1e}, {dt:.2f}s"


def criterion_6():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 7))
        n = int(rng.integers(d + 5, 400))
        z = np.column_stack([np.ones(n), rng.normal(size=(n, d - 1)) * rng.uniform(0.1, 5, d - 1)
                             + rng.normal(size=d - 1)])
        worst = max(worst, abs(intercept_ratio(z) - d))
    dt = time.perf_counter() - t0
    return worst < 1e-8 and dt < 1.0, f"max |ratio - d| = {worst:.1e}, {dt:.3f}s"


def criterion_7():
    rng = np.random.default_rng(SEED)
    grid_ok, worst_scale = True, 0.0
    for _ in range(20):
        d = int(rng.integers(1, 5))
        a = rng.normal(size=(d, d))
        m = SmoothingMoments(a @ a.T + 0.1 * np.eye(d), rng.normal(size=d), np.eye(d))
        n, r = int(rng.integers(20, 5000)), int(rng.choice([2, 4, 6]))
        h = h_star_general(m, n, r)
        grid = h * np.logspace(-1, 1, 201)
        obj = n * grid ** (2 * r) * m.BB - grid * m.tr_AA
        best = n * h ** (2 * r) * m.BB - h * m.tr_AA
        grid_ok &= bool(np.all(obj >= best - 1e-12 * abs(best)))
        ratio = h_star_general(m, 2 * n, r) / h
        worst_scale = max(worst_scale, abs(ratio - 2.0 ** (-1.0 / (2 * r - 1))))
    return grid_ok and worst_scale < 1e-12, f"grid argmin ok={grid_ok}, scaling error {worst_scale:.1e}"


def criterion_8():
    t0 = time.perf_counter()
    r1 = run_mc("SCF1", ["see-plugin", "scf"], reps=1000, master_seed=SEED)
    r2 = run_mc("SCF2", ["see-plugin", "scf"], reps=1000, master_seed=SEED)
    dt = time.perf_counter() - t0
    s1, c1 = r1.mse("see-plugin")[1], r1.mse("scf")[1]
    s2, c2 = r2.mse("see-plugin")[1], r2.mse("scf")[1]
    fails = sum(len(v) for r in (r1, r2) for v in r.failures.values())
    ok = abs(s1 - 0.423) <= 0.06 and abs(c1 - 0.533) <= 0.06 and s1 < c1 and s2 < c2 and dt <= 600
    return ok, (f"DGP1 slope MSE SEE={s1:.3f} SCF={c1:.3f}; DGP2 SEE={s2:.3f} SCF={c2:.3f}; "
                f"{fails} failed fits; {dt:.0f}s")


def criterion_9():
    t0 = time.perf_counter()
    # N(0,1) errors recentred to q-quantile zero; q = 0.25 so f'''(0) != 0
    rep = validate_moment_expansion([0.25], q=0.25, n_u=100_000, n_x=10, seed=SEED)
    dt = time.perf_counter() - t0
    ratio = rep.bias_ratio[0]
    scf = rep.scf_to_see[0, 0]
    r = get_kernel("horowitz4").r
    ok_bias = bool(np.all(np.abs(ratio - 1) <= 0.2))
    ok_scf = abs(scf - (r + 1)) <= 0.3
    return bool(ok_bias and ok_scf and dt <= 120), (
        f"bias ratio {np.round(ratio, 4).tolist()} ({'ok' if ok_bias else 'off'}); "
        f"SCF/SEE bias ratio {scf:.3f} vs target {r + 1} ({'ok' if ok_scf else 'off'}); "
        f"{rep.draws} draws, {dt:.2f}s")


def criterion_10():
    t0 = time.perf_counter()
    dgp = get_dgp("H11")
    kernel = get_kernel("horowitz4")
    alpha, reps = 0.10, 2000
    rej, rej_star, ordered, fails = 0, 0, True, 0
    c = chi_sq_quantile(1 - alpha, 2)
    for rep in range(reps):
        data, truth = generate(dgp, replication_rng(SEED, rep))
        try:
            report = plugin_bandwidth(data, kernel)
        except Exception:
            fails += 1
            continue
        h = report.selected
        tr = estimate_moments(data, report.fit_for(), kernel).tr_AA
        _, c_star, _ = corrected_critical_value(alpha, 2, kernel.r, tr, h)
        s = s_statistic(truth, data, h, kernel)
        rej += s > c
        rej_star += s > c_star
        ordered &= c_star <= c
    done = reps - fails
    rate, rate_star = rej / done, rej_star / done
    dt = time.perf_counter() - t0
    ok = 0.07 <= rate <= 0.13 and ordered and dt <= 300
    return ok, (f"first-order rejection {rate:.4f}, corrected {rate_star:.4f}, "
                f"c*<=c in every run: {ordered}, {fails} failed, {dt:.0f}s")


def criterion_11():
    t0 = time.perf_counter()
    grid = np.round(np.arange(1, 201) * 0.1, 10)
    worst_min, worst_zero = np.inf, 0.0
    for d in (1, 2, 3, 4):
        c = chi_sq_quantile(0.9, d)
        worst_min = min(worst_min, min(q_power(c, t, 2, d) for t in grid))
        worst_zero = max(worst_zero, abs(q_power(c, 0.0, 2, d)))
    dt = time.perf_counter() - t0
    return worst_min > 0 and worst_zero < 1e-10 and dt < 1.0, (
        f"min Q_d on (0,20] = {worst_min:.3e}, |Q_d(0)| = {worst_zero:.1e}, {dt:.2f}s")


def _simulate_summary(parallelism):
    out = io.StringIO()
    code = cli_main(["simulate", "--dgp", "H11", "--reps", "24", "--seed", "42",
                     "--estimators", "see-plugin,scf,tiny-h,iv", "--parallelism", str(parallelism)],
                    stdout=out, stderr=io.StringIO())
    return code, out.getvalue()


def criterion_12():
    runs = [_simulate_summary(p) for p in (1, 8, 1)]
    ok = all(code == 0 for code, _ in runs) and len({text for _, text in runs}) == 1
    return ok, f"summaries identical across parallelism 1, 8, 1: {ok} ({len(runs[0][1])} bytes)"


def jtpa_ordering():
    quantiles = (0.1, 0.25, 0.5, 0.75, 0.9)
    wins = []
    for q in quantiles:
        res = run_mc(get_dgp("JTPA1s", q=q), ["see-plugin", "tiny-h"], reps=int(os.environ.get("SEEQR_JTPA_REPS", 40)),
                     master_seed=SEED)
        wins.append(res.robust_mse("see-plugin")[1] <= res.robust_mse("tiny-h")[1])
    return sum(wins) >= 4, f"SEE robust MSE <= tiny-h at {sum(wins)}/5 quantiles"


CRITERIA = [(i, globals()[f"criterion_{i}"]) for i in range(1, 13)]


def _line(label, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} {label}: {detail}"


@pytest.mark.parametrize("number,check", CRITERIA, ids=[f"criterion_{i}" for i, _ in CRITERIA])
def test_criterion(number, check):
    from conftest import ACCEPTANCE_LINES

    ok, detail = check()
    line = _line(f"criterion {number}", ok, detail)
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.mark.skipif(not os.environ.get("SEEQR_FULL"), reason="set SEEQR_FULL=1 for the JTPA check")
def test_jtpa_ordering():
    from conftest import ACCEPTANCE_LINES

    ok, detail = jtpa_ordering()
    line = _line("JTPA ordering", ok, detail)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


if __name__ == "__main__":
    failed = 0
    for number, check in CRITERIA:
        ok, detail = check()
        failed += not ok
        print(_line(f"criterion {number}", ok, detail), flush=True)
    if os.environ.get("SEEQR_FULL"):
        ok, detail = jtpa_ordering()
        print(_line("JTPA ordering", ok, detail), flush=True)
    sys.exit(1 if failed else 0)
