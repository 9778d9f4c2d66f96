# %% [markdown]
# From prices to a fitted model
# -----------------------------
# Write a long-format price file with a few months lacking transactions,
# turn it into log-returns (carrying prices forward and jittering the zero
# returns that result), summarise it and fit.

# %%
import tempfile
from pathlib import Path

import numpy as np

from spatial_logarch import Dimensions, ErrorDist, ModelConfig, ParamSet, fit, grid_contiguity, row_standardize, simulate
from spatial_logarch.estimate import fit_report
from spatial_logarch.ingest import load_panel, panel_summary, to_returns

rng = np.random.default_rng(0)
w = row_standardize(grid_contiguity(6, 5, "queen"))
normal = ErrorDist.normal()
params = ParamSet.from_a([-6.0, -5.0], [[0.15, 0.0], [0.05, 0.1]], [[0.5, 0.1], [0.0, 0.5]], normal)
returns = simulate(ModelConfig(Dimensions(30, 2, 59), w, normal, seed=3), params).panel.values
prices = 100 * np.exp(np.cumsum(np.concatenate([np.zeros((30, 2, 1)), returns], axis=2), axis=2))

path = Path(tempfile.mkdtemp()) / "prices.csv"
with open(path, "w") as fh:
    fh.write("location,variable,time,value\n")
    for i in range(30):
        for j, var in enumerate(["flats", "houses"]):
            for t in range(61):
                if t == 0 or rng.random() > 0.02:
                    fh.write(f"loc{i:02d},{var},{2015 + t // 12}-{t % 12 + 1:02d},{prices[i, j, t]:.4f}\n")

# %%
panel = to_returns(load_panel(path))
summary = panel_summary(panel)
print("dims:", summary["dims"], "jittered returns:", summary["jittered_total"])
for name, info in summary["variables"].items():
    print(f"{name}: mean {info['mean']:.5f}, variance {info['variance']:.5f}")

# %%
print(fit_report(fit(panel, w, normal), panel.variable_names))
