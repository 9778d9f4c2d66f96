# %% [markdown]
# Quasi-maximum-likelihood fit
# ----------------------------
# Fit a simulated panel, inspect the estimate/standard-error table and the
# assumption checks.

# %%
import numpy as np

from spatial_logarch import (
    Dimensions, ErrorDist, LikelihoodWorkspace, ModelConfig, ParamSet, fit, grid_contiguity,
    pack_params, row_standardize, simulate, validate_assumptions,
)
from spatial_logarch.estimate import fit_report

w = row_standardize(grid_contiguity(7, 7, "queen"))
normal = ErrorDist.normal()
truth = ParamSet.from_a(np.ones(2), [[0.5, 0.1], [0.1, 0.5]], [[0.3, 0.0], [0.0, 0.3]], normal)
panel = simulate(ModelConfig(Dimensions(49, 2, 100), w, normal, seed=2), truth).panel

# %% The log-likelihood and its gradient at the data-generating point.
ws = LikelihoodWorkspace(panel, w)
theta0 = pack_params(truth, "constant")
value, grad = ws.value_and_gradient(theta0, truth.sigma2_u)
print(f"log-likelihood at the truth {value:.3f}, max |gradient| {np.abs(grad).max():.2f}")

# %%
result = fit(panel, w, normal)
print(fit_report(result, ["first", "second"]))
print(validate_assumptions(panel, w, result).to_text())
