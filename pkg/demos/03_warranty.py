# %% [markdown]
# # Choosing a warranty period
#
# A warranty of `w` cycles costs `R` for every failure inside it and a
# decaying goodwill penalty `R b exp(-c w)` for every failure after it.

# %%
import numpy as np

from failcast.bayesnet import WeibullParams
from failcast.warranty import WarrantyCostModel, grid_search_warranty, optimize_warranty, warranty_cost

model = WarrantyCostModel(replacement_cost=1.0)
for beta in (50_000, 100_000, 150_000, 200_000):
    p = WeibullParams(4.0, beta)
    res = optimize_warranty(p, model)
    grid = grid_search_warranty(p, model)
    print(f"beta={beta:7d}  w*={res.w:9.0f}  cost={res.cost:.5f}  grid w={grid.w:9.0f}")

# %% [markdown]
# Longer-lived parts justify longer warranties. The whole curve for one part:

# %%
p = WeibullParams(4.0, 100_000)
w = np.linspace(0, 300_000, 7)
print(np.c_[w, warranty_cost(w, p, model)])
