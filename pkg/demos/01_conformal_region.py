# Conformal regions for kernel ridge regression at a single test point.
#
# Run with:  python demos/01_conformal_region.py

# %% setup
import numpy as np

from conforma import (
    Dataset, KernelParams, conformal_region, residual_line, krr_fit,
    gpr_interval, profile_sigma2,
)

rng = np.random.default_rng(0)
X = rng.uniform(0, 1, size=(40, 1))
y = np.sin(6 * X[:, 0]) + 0.2 * rng.standard_normal(40)
train = Dataset(X, y)
lam, params = 0.05, KernelParams(20.0)

# %% the residual line
# Every residual of the augmented sample is affine in the candidate label z:
# r_i(z) = c_i + b_i z.  The region is read off from these 2(n+1) numbers.
xs = [0.35]
line = residual_line(train, xs, lam, params, "in_sample")
print("first residual coefficients", line.c[:3], line.b[:3])

# %% regions at a few levels
for alpha in (0.25, 0.1, 0.05):
    rrcm = conformal_region(line, alpha, "rrcm")
    crr = conformal_region(line, alpha, "crr")
    print(f"alpha={alpha:<5} rrcm {rrcm}   crr {crr}")

# %% compared to the Gaussian process interval
model = krr_fit(train, lam, params)
s2 = profile_sigma2(train, lam, params)
print("gpr 90% interval", gpr_interval(model, xs, s2, 0.1).interval)
