from gibbsflow.models.losses import (
    LossModel,
    CheckLoss,
    MisclassificationLoss,
    SquaredErrorLoss,
    build_loss,
    check_loss,
    misclassification_loss,
    squared_error_loss,
)
from gibbsflow.models.priors import Prior, FlatPrior, GaussianPrior, build_prior
from gibbsflow.models.target import GibbsTarget, TargetBatch, empirical_risk, gibbs_log_density
