"""Trimming simulations and screening measurements on synthetic data.

Simulations cover a wider box than the measured covariates. Trimming
drops simulations far from every measurement (k=1); screening then flags
measurements far from the kept simulations (k=10). Five percent of the
measurements are planted well outside the simulation box.
"""
import numpy as np

from condsurrogate.pipeline import screen, trim
from condsurrogate.synthbench import default_model

model = default_model(seed=3, contamination=0.05, contamination_offset=5.0)
measured, _, simulated, planted = model.generate(2000, 10000)

kept, trim_rep, _ = trim(simulated, measured)
print(f"trim: threshold {trim_rep.threshold:.3f}, kept {kept.n} of {simulated.n} simulations")

inliers, outliers, rep, _ = screen(measured, kept)
flags = rep.outlier_flags
print(f"screen: threshold {rep.threshold:.3f}, flagged {rep.n_outliers} of {measured.n}")
print(f"recall on planted rows {flags[planted].mean():.3f}, "
      f"false-positive rate {flags[~planted].mean():.4f}")
