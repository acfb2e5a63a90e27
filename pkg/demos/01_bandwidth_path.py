"""
From quantile regression to IV: the bandwidth path
==================================================

The smoothed estimating equations interpolate between two familiar
estimators.  At a tiny bandwidth the root is (numerically) the quantile
regression fit; as h grows it drifts to the mean regression, apart from an
intercept shift when q != 0.5.  This script traces that path on one sample.
"""

import numpy as np

from seeqr import generate, get_dgp, iv_estimate, large_h_limit, solve_see, unsmoothed_qr_reference

data, truth = generate(get_dgp("H12", q=0.5), seed=3)
print(f"n = {data.n}, true coefficients {truth}")

# the near-unsmoothed end of the path
tiny = unsmoothed_qr_reference(data)
print(f"tiny h = {tiny.h:.2e}: beta = {np.round(tiny.beta, 4)}")

# walk the bandwidth up, warm-starting each solve from the last one
beta = tiny.beta
for h in (0.1, 0.3, 1.0, 3.0, 10.0, 100.0):
    fit = solve_see(data, h, init=beta)
    beta = fit.beta
    print(f"h = {h:7.1f}: beta = {np.round(beta, 4)}  ({fit.iterations} Newton steps)")

# and the closed-form limit
print("IV / OLS            :", np.round(iv_estimate(data), 4))
print("h = 5e6 limit       :", np.round(large_h_limit(data, 5e6), 4))

# away from the median the intercept runs off linearly in h
upper = data.with_q(0.75)
for h in (1e3, 1e5):
    fit = solve_see(upper, h)
    print(f"q = 0.75, h = {h:.0e}: intercept - IV intercept = "
          f"{fit.beta[0] - iv_estimate(upper)[0]:.1f}, h * G^-1(q) = "
          f"{large_h_limit(upper, h, exact=True)[0] - iv_estimate(upper)[0]:.1f}")
