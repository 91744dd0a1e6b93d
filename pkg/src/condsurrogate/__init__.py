"""Distribution surrogates for latent responses from simulations and covariates.

The unconditional law of a response that is only available in simulations
is estimated by averaging conditional distribution estimates (kNN or random
forest) at measured covariates, after kNN-distance screening of both data
sets.
"""

__version__ = "0.1.0"

from .datamodel import Dataset, Origin, ScreeningReport, validate_dataset
from .forest import (
    Forest,
    ForestParams,
    ThresholdGrid,
    discretize_targets,
    fit_forest,
    forest_conditional_cdf,
    predict_class_probs,
    quantile_grid,
)
from .knn import KnnConditionalModel, fit_knn, knn_conditional
from .metric import (
    MetricKind,
    Standardizer,
    Whitener,
    apply_standardizer,
    distance,
    fit_standardizer,
    fit_whitener,
)
from .mixture import MixtureDistribution
from .neighbors import Backend, NeighborIndex, avg_knn_distance, build_index, query_knn
from .screening import ThresholdSelection, l1_threshold, screen_outliers, trim_simulations
from .surrogate import (
    SurrogateDistribution,
    aggregate,
    cdf,
    gumbel_transform,
    moments,
    quantile,
    regression_imputation_baseline,
    silverman_bandwidth,
)
