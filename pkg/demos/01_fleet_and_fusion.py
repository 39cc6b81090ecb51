# %% [markdown]
# # Simulated fleet and fused failure-rate learning
#
# A fleet of 1000 vehicles runs nine parts. Each part fails on a Weibull
# clock measured in usage cycles, and four diagnostic trouble codes (DTCs)
# fire some way before each failure. Shops only see a DTC at the next
# service visit.
#
# Three parts rarely fail before the end of the observation window. For
# those, failures alone say little about the Weibull scale. The DTC records
# of units that have not failed yet carry the missing information.

# %%
import numpy as np

from failcast import CaseId, FleetConfig, McmcConfig, fit_part, simulate_fleet

cfg = FleetConfig(seed=1)
events, truth = simulate_fleet(cfg)
print(events.failures.groupby("part").size())

# %% [markdown]
# Fit part 2 (a sparse one) under every case. Case 1 uses failures only.
# Case 2 adds service observations, Case 3 adds DTC occurrences too, and
# "best" plugs the true future failures into the Case 3 refit.

# %%
mcmc = McmcConfig(n_chains=2, n_iterations=3000, burn_in=1500, seed=1)
fits = fit_part(events, cfg.observation_window, part=2, dtcs=[1, 2, 3, 4],
                cases=list(CaseId), mcmc=mcmc, truth=truth, predictive="sampled")
true_alpha, true_beta = cfg.true_params[1]
for case, res in fits.aggregate.items():
    print(f"{case.value:6s} alpha={res.weibull.alpha:5.2f} beta={res.weibull.beta:9.0f} "
          f"(true {true_alpha}, {true_beta})  n={res.n} n'={res.n_prime}")

# %% [markdown]
# The learned dependency parameters of the first DTC:

# %%
dep = fits.per_dtc[CaseId.CASE3][0].dep
print(dep)
