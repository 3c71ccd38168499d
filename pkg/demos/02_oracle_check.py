# Checking the fast region against a brute-force p-value scan.
#
# The brute-force route refits the augmented problem for every grid label,
# so it shares nothing with the sweep that builds the fast region.

# %%
import numpy as np

from conforma import (
    Dataset, KernelParams, brute_force_membership, conformal_region,
    default_oracle_grid, regions_agree, residual_line,
)

rng = np.random.default_rng(3)
train = Dataset(rng.uniform(size=(8, 2)), rng.standard_normal(8))
xs, lam, params = rng.uniform(size=2), 0.1, KernelParams(10.0)
grid = default_oracle_grid(train, xs, lam, params)

# %%
for kind in ("in_sample", "loo"):
    line = residual_line(train, xs, lam, params, kind)
    for ncm in ("rrcm", "crr"):
        fast = conformal_region(line, 0.25, ncm)
        keep = brute_force_membership(train, xs, lam, params, kind, ncm, 0.25, grid)
        print(f"{ncm:4} {kind:9} {str(fast):40} agree={regions_agree(fast, grid, keep)}")

# %% very small alpha keeps the whole line
print(conformal_region(residual_line(train, xs, lam, params, "in_sample"), 0.05, "rrcm"))
