"""
Growing an oblique survival forest
==================================

Fit on one half of a simulated dataset, predict survival curves and
mortality on the other half, then score the predictions.
"""

# %%
import numpy as np

from obliqforest import forest as F
from obliqforest.bench import stratified_half
from obliqforest.metrics import evaluate
from obliqforest.simgen import SimConfig, simulate

sim = simulate(SimConfig(n=1000, n_per_class=3, seed=1))
ds = sim.ds
train, test = stratified_half(ds.status, np.random.default_rng(1))
print(f"{ds.n} rows, {ds.p} predictors, censoring {1 - ds.status.mean():.2f}")

# %%
forest = F.fit(ds.subset(train), F.ForestParams(n_tree=200, seed=1))
grid = np.quantile(ds.time[ds.status == 1], [0.25, 0.5, 0.75])
surv = F.predict_survival(forest, ds.X[test], grid)
risk = F.predict_mortality(forest, ds.X[test])
print("survival at event quartiles, first three test rows:")
print(np.round(surv[:3], 3))

# %%
ev = evaluate(lambda g: F.predict_survival(forest, ds.X[test], g), risk,
              ds.time[test], ds.status[test], ds.time[train], ds.status[train])
for k, v in ev.summary().items():
    print(f"{k:>10}: {v:.3f}" if isinstance(v, float) else f"{k:>10}: {v}")

# %%
# Out-of-bag predictions give an honest estimate without a split.
oob_surv, oob_mort, counts = F.oob_predict(forest, ds.subset(train), grid)
print(f"each row is out of bag in ~{counts.mean():.0f} of {forest.params.n_tree} trees")

# %%
# Fits are reproducible for a fixed seed regardless of thread count.
again = F.fit(ds.subset(train), F.ForestParams(n_tree=200, seed=1), n_threads=2)
print("identical:", np.array_equal(F.predict_mortality(again, ds.X[test]), risk))
