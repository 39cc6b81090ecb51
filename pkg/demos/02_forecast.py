# %% [markdown]
# # Expected failures next year
#
# Each surviving unit contributes its probability of failing inside the
# forecast window, given that it has survived up to the window start.

# %%
import numpy as np

from failcast import FleetConfig, simulate_fleet
from failcast.bayesnet import WeibullParams
from failcast.domain import Window, WindowKind
from failcast.forecast import FleetState, expected_failures, realized_failures, simulate_forward

cfg = FleetConfig(seed=2)
events, truth = simulate_fleet(cfg)
window = Window.from_dates("2013-01-01", "2013-12-31", WindowKind.FORECAST)
fleet = FleetState.from_events(events, range(1, 10), window.start)

# %% [markdown]
# With the true parameters the forecast is unbiased, which a forward
# simulation confirms.

# %%
params = {j + 1: WeibullParams(*p) for j, p in enumerate(cfg.true_params)}
fc = expected_failures(params, fleet, window)
sims = simulate_forward(params, fleet, window, 200, np.random.default_rng(0))
real = realized_failures(truth.failures, fleet, window)
for j in sorted(params):
    print(f"{cfg.names[j - 1]}: expected {fc.per_part[j]:7.1f}  "
          f"simulated {sims[j].mean():7.1f}  realized {real[j]}")

# %% [markdown]
# The unconditional mode ignores survival and undercounts for old units.

# %%
print(expected_failures(params, fleet, window, "unconditional").total, fc.total)
