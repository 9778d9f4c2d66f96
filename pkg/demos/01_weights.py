# %% [markdown]
# Lattice weight matrices
# -----------------------
# Build Rook and Queen contiguity on a small lattice, row-standardise it and
# look at the quantities the estimator relies on.

# %%
import numpy as np

from spatial_logarch import grid_contiguity, row_standardize, validate_weights

rook = grid_contiguity(4, 4, "rook")
queen = grid_contiguity(4, 4, "queen")
print("links: rook", rook.nnz, "queen", queen.nnz)
print("queen neighbour counts by cell:\n", np.diff(queen.csr.indptr).reshape(4, 4))

# %% Row standardisation turns spatial lags into neighbour averages.
w = row_standardize(queen)
print("row sums:", np.round(w.row_sums, 12))
print(validate_weights(w).to_text())

# %% The spectrum of W is what makes the log-determinant cheap.
mu = w.eigenvalues
print("eigenvalue range:", mu.real.min().round(4), "to", mu.real.max().round(4))
