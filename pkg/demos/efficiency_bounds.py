# How much can unlabeled data help at all?
#
# For a fixed data-generating process the asymptotic variance of any regular
# semi-supervised estimator is bounded below. With gamma the unlabeled share
# of the pooled sample, the bound moves from Var[psi] at gamma = 0 down to the
# known-marginal bound as gamma -> 1.

# %%
from semisup import estimate_bounds, get_dgp
from semisup.simulate import bounds_table

gammas = (0.0, 0.25, 0.5, 0.75, 0.9, 0.99)
for name in ("mean_linear", "mean_nonlinear", "mean_null"):
    b = estimate_bounds(get_dgp(name), gammas=gammas, sample_size=50_000, seed=0)
    row = "  ".join(f"{b.oss_bound(g)[0, 0]:7.3f}" for g in gammas)
    print(f"{name:<15} Var[psi]={b.var_psi[0, 0]:7.3f}  bounds: {row}  iss={b.iss_bound[0, 0]:7.3f}")

# %%
# When E[psi | x] is constant (mean_null) every bound equals Var[psi]: the
# unlabeled rows are useless and no method can gain.
print(bounds_table(estimate_bounds(get_dgp("mean_null"), gammas=(0.5, 0.9), sample_size=20_000)))
