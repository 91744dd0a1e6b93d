"""Random-forest surrogate on a quantile grid of simulated responses.

Responses are cut into classes by a grid of thresholds and a forest
predicts class probabilities at each measured point. Mass above the
last threshold cannot be placed, so it is reported as a deficit and
quantiles beyond it are refused.
"""
from condsurrogate.errors import LevelBeyondDeficit
from condsurrogate.forest import ForestParams
from condsurrogate.pipeline import estimate
from condsurrogate.synthbench import default_model

model = default_model(seed=1)
measured, _, simulated, _ = model.generate(2000, 10000)
est = estimate(measured, simulated, "forest", 0.0, grid_size=32,
               forest_params=ForestParams(n_trees=100), seed=1)
s = est.surrogate
print(f"{est.grid.k} thresholds, last at {est.grid.alphas[-1]:.3f}; deficit {s.deficit:.4f}")
for a in (0.5, 0.9, 0.999):
    try:
        print(f"quantile {a}: {s.quantile(a):.3f}")
    except LevelBeyondDeficit:
        print(f"quantile {a}: beyond the located mass (ceiling {s.ceiling:.4f})")
