# A small coverage experiment on Gaussian process data.
#
# Scale n_train and replications up for smoother numbers; this runs in seconds.

# %%
from conforma import ExperimentConfig, run_experiment

cfg = ExperimentConfig(
    dimension=1, test_function="gp_path", gamma=1e-2, theta_gen=100.0,
    theta_fit="mle", lam=1e-2, n_train=50, replications=10,
    alpha_grid=(0.05, 0.1, 0.25), seed=1,
)
res = run_experiment(cfg)

# %% error rates should sit near the nominal level
for method in res.methods:
    rates = res.error_rates(method)
    print(f"{method:9}", "  ".join(f"{a:g}: {r:.3f}" for a, r in rates.items()),
          f"  MAD {res.mad(method):.3f}")

# %% a misspecified run: step function, GP assumptions broken
step = ExperimentConfig(test_function="heaviside", gamma=0.1, lam=0.1, n_train=50,
                        replications=10, alpha_grid=(0.05, 0.1), seed=1)
res = run_experiment(step)
for method in ("gpr", "rrcm"):
    print(method, res.error_rates(method))
