# Prediction-powered inference for a Poisson regression, with predictions
# that carry no information about the response.
#
# The influence function of a GLM coefficient depends on x, so even a model
# outputting pure noise gives regressors that are informative about it.

# %%
import numpy as np

from semisup import (PureNoise, generate, get_dgp, make_problem, ppi_estimate, safe_estimate,
                     supervised_estimate)
from semisup.simulate import model_set

dgp = get_dgp("poisson_nonlinear")
labeled, unlabeled = generate(dgp, n=1000, N=9000, seed=3)
problem = make_problem(dgp.problem)
models = model_set(PureNoise(sigma=1.0), dgp, labeled, unlabeled, seed=3)

# %%
sup = supervised_estimate(problem, labeled)
out = {"supervised": sup,
       "safe": safe_estimate(problem, labeled, unlabeled),
       "ppi (noise)": ppi_estimate(problem, labeled, unlabeled, models)}
print("coefficient      " + "  ".join(f"{k:>12}" for k in out))
for j, name in enumerate(["intercept", "x1", "x2"]):
    print(f"{name:<16} " + "  ".join(f"{r.se[j]:12.5f}" for r in out.values()))

# %%
# Relative standard errors. Gains are small here but never negative.
for k, r in out.items():
    print(k, np.round(r.se / sup.se, 4))
