# %% [markdown]
# A small Monte-Carlo study
# -------------------------
# Bias and RMSE tables for the built-in designs.  The default replication
# count is 200; this walk-through uses 40 to run in well under a minute.

# %%
from spatial_logarch.montecarlo import builtin_design, emit_tables, run_design

design = builtin_design("A", replications=40)
report = run_design(design, error_dists=["normal"], sizes=[(25, 30), (49, 100)])
print(emit_tables(report))

# %% The same cell with several worker processes gives identical numbers.
again = run_design(design, workers=2, error_dists=["normal"], sizes=[(25, 30)])
first = report.cell("A", "normal", 25, 30)
print("identical:", (again.cells[0].estimates == first.estimates).all())
