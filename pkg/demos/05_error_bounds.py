"""
Sample-complexity error bounds
==============================

The expected estimation error is bounded by
sqrt(Delta / T) * sqrt(E[tr S0] * E[|S0^-1|_F^2]); dividing by a
confidence level epsilon gives a high-probability bound.  The expectation
factors are estimated by an auxiliary Monte Carlo and the bound is then
calibrated empirically: the fraction of realizations exceeding it must
stay below epsilon (and sits far below, the bound being conservative).
"""

import numpy as np

from koopest import (
    ClosedQuadraticParams,
    closed_quadratic_dictionary,
    closed_quadratic_koopman,
    estimate_bound_terms,
    koopman_error_bound,
    make_closed_quadratic,
    realization_errors,
    violation_rate,
)

params = ClosedQuadraticParams(rho=0.2, mu=0.3, c=1.0)
system = make_closed_quadratic(params)
dct = closed_quadratic_dictionary()
k_true = closed_quadratic_koopman(params, noise_variance=1.0)

T = 5000
terms = estimate_bound_terms(system, dct, T, n_realizations=40, seed=1)
print(f"E[tr S0]        ~ {terms.mean_trace_sigma0:.3f} (se {terms.se_trace:.3f})")
print(f"E[|S0^-1|_F^2]  ~ {terms.mean_frob_sq_inv_sigma0:.3f} (se {terms.se_frob:.3f})")

# Realized errors versus the bound at a few confidence levels.
errors, _ = realization_errors(system, dct, k_true, T, n_realizations=100, seed=2)
print(f"\nrealized errors at T={T}: median {np.median(errors):.4f}, max {errors.max():.4f}")
for eps in (0.1, 0.25, 0.5):
    bound = koopman_error_bound(2.2, eps, T, terms)  # Delta ~ max residual variance
    print(f"  eps={eps:<5} bound {bound:.4f}  exceeded by {np.mean(errors > bound):.1%}")

# The packaged calibration does the same end to end (terms, Delta surrogate,
# scoring realizations) from one seed.
stats = violation_rate(
    system, dct, k_true, T, epsilon=0.25, n_realizations=100, seed=3
)
print(
    f"\npackaged calibration at eps=0.25: rate {stats.violation_rate:.3f} "
    f"({stats.n_violations}/{stats.n_realizations})"
)
