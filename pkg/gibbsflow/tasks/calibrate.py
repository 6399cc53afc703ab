import logging
import os
import sys

from marshmallow import Schema, fields

from ..base import BaseTask
from ..base.configuration import ObjectConfiguration, build_config
from ..utils import create_dirs
from ..inference.gps import GpsConfig, gps_calibrate
from ..models.losses import LossConfig, MisclassificationLoss, build_loss
from ..models.priors import PriorConfig, build_prior

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2


def resolve_model(task_config, source, data):
    """Loss and prior of a task: explicit configs win, scenario inputs supply the rest."""
    if task_config.loss is not None:
        loss = build_loss(build_config(LossConfig, task_config.loss), data)
    elif hasattr(source, "default_loss"):
        loss = source.default_loss()
    else:
        raise ValueError("A loss must be configured for inputs without a default loss.")

    if task_config.prior is not None:
        prior = build_prior(build_config(PriorConfig, task_config.prior), loss.param_dim)
    elif hasattr(source, "default_prior"):
        prior = source.default_prior()
    elif isinstance(loss, MisclassificationLoss):
        # Flat priors on unbounded slopes give an improper posterior
        prior = build_prior(build_config(PriorConfig, kind="gaussian"), loss.param_dim)
    else:
        prior = build_prior(build_config(PriorConfig), loss.param_dim)

    return loss, prior


class CalibrateTask(BaseTask):
    """Calibrates the scale of the Gibbs posterior of one dataset."""

    class CalibrateTaskConfig(Schema):
        input_config = fields.Nested(
            nested=ObjectConfiguration,
            required=True,
            metadata={"description": "Input type and configuration."},
        )
        loss = fields.Nested(
            LossConfig,
            load_default=None,
            allow_none=True,
            metadata={"description": "Loss configuration. Defaults to the input's loss."},
        )
        prior = fields.Nested(
            PriorConfig,
            load_default=None,
            allow_none=True,
            metadata={"description": "Prior configuration. Defaults to the input's prior, then flat."},
        )
        gps = fields.Nested(
            GpsConfig,
            load_default=dict,
            metadata={"description": "GPS configuration."},
        )
        trace_file = fields.String(
            load_default=None,
            allow_none=True,
            metadata={"description": "Where to write the trace CSV. Printed if not set.", "example": "/tmp/trace.csv"},
        )

    def run(self):
        source = self.parse_input(self.config.input_config)
        data = source.get_dataset()
        loss, prior = resolve_model(self.config, source, data)
        logger.info("Calibrating on %s with prior %s", source.describe(), prior.describe())

        result = gps_calibrate(data, loss, prior, build_config(GpsConfig, self.config.gps))

        print("Calibration results:")
        print(f"omega_n: {result.omega_n:.6g}")
        print(f"converged: {result.converged}")
        print(f"iterations: {result.iterations}")
        print(f"theta_hat: {result.theta_hat.tolist()}")

        if self.config.trace_file is None:
            result.to_csv(sys.stdout)
        else:
            create_dirs([os.path.dirname(self.config.trace_file)])
            result.to_csv(self.config.trace_file)

        return EXIT_OK if result.converged else EXIT_NOT_CONVERGED
