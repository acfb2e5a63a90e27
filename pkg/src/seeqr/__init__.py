"""Smoothed estimating equations (SEE) for instrumental-variables quantile regression.

The indicator in the quantile moment condition is replaced by a smooth
kernel CDF G(-u/h).  The package provides the estimator, an MSE-optimal
plug-in bandwidth, chi-square inference with a higher-order corrected
critical value and a reproducible Monte Carlo harness.
"""

from __future__ import annotations

from types import ModuleType as _ModuleType

__version__ = "0.1.0"

from .bandwidth import (BandwidthReport, SmoothingMoments, estimate_moments, h_directional,
                        h_star_general, h_star_iid, initial_bandwidth, intercept_ratio,
                        plugin_bandwidth)
from .dgps import DGP_IDS, DgpSpec, generate, get_dgp, true_beta
from .errors import (AllFitsFailed, EndogenousNotSupported, MaxIterations, ParseError, RankError,
                     SchemaError, SeeError, SingularJacobian, ZeroBias)
from .estimator import (SeeFit, SolverOptions, iv_estimate, large_h_limit, scf_estimate,
                        see_jacobian, see_moments, solve_see, unsmoothed_qr_reference)
from .inference import (TestResult, confidence_scan, corrected_critical_value, power_curve,
                        q_power, run_test, s_statistic)
from .instruments import Dataset, make_dataset, project_instruments, sieve_instruments
from .kernels import KERNELS, SmoothingKernel, get_kernel, kernel_constants
from .montecarlo import McResult, run_mc, size_adjusted_power, validate_moment_expansion

__all__ = sorted(name for name, obj in globals().items()
                 if not name.startswith("_") and name != "annotations"
                 and not isinstance(obj, _ModuleType))
