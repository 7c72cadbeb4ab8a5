"""Deep semiparametric AFT rank regression with the Gehan loss."""

from .dataset import (
    DataError,
    FeatureSchema,
    SplitSpec,
    StandardizationParams,
    SurvivalDataset,
    apply_standardization,
    fit_standardization,
    load_csv,
    simulate_aft,
    split_dataset,
    write_csv,
)
from .kernels import BACKEND
from .metrics import (
    brier_score,
    concordance_index,
    concordance_td,
    integrated_brier_score,
)
from .network import NetworkConfig, NetworkModel
from .nonparam import StepFunction, censoring_km, kaplan_meier, nelson_aalen
from .optim import AdamWR, OptimConfig
from .rankloss import (
    fit_linear_gehan,
    gehan_estimating_function,
    gehan_loss,
    gehan_loss_gradient,
)
from .survpredict import SurvivalCurveSet, fit_baseline, predict_survival
from .trainer import TrainConfig, train

__version__ = "0.1.0"
