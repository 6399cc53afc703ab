import os

from marshmallow import Schema, fields
from marshmallow.validate import Range

from ..base import BaseTask
from ..base.configuration import ObjectConfiguration, build_config
from ..experiments import run_coverage_study, fixed_omega_study
from ..input.random import ScenarioInput
from ..inference.gps import GpsConfig
from ..models.priors import PriorConfig, build_prior
from ..utils import create_dirs
from .calibrate import EXIT_OK


class CoverageStudyTask(BaseTask):
    """Monte Carlo coverage of GPS calibrated credible intervals on a simulated scenario."""

    class CoverageStudyTaskConfig(Schema):
        input_config = fields.Nested(
            nested=ObjectConfiguration,
            required=True,
            metadata={"description": "Scenario input type and configuration."},
        )
        gps = fields.Nested(
            GpsConfig,
            load_default=dict,
            metadata={"description": "GPS configuration shared by all replications."},
        )
        prior = fields.Nested(
            PriorConfig,
            load_default=None,
            allow_none=True,
            metadata={"description": "Prior configuration. Defaults to the scenario's prior."},
        )
        replications = fields.Int(
            load_default=200,
            validate=Range(min=1),
            metadata={"description": "Number of simulated datasets."},
        )
        seed = fields.Int(
            load_default=0,
            validate=Range(min=0, max=2**64 - 1),
            metadata={"description": "Master seed of the study."},
        )
        n_workers = fields.Int(
            load_default=1,
            validate=Range(min=1),
            metadata={"description": "Worker processes running replications."},
        )
        output_file = fields.String(
            required=True,
            metadata={"description": "Report CSV.", "example": "/tmp/report.csv"},
        )
        omega_file = fields.String(
            load_default=None,
            allow_none=True,
            metadata={"description": "CSV of the scale samples. Defaults to `<output stem>_omega.csv`."},
        )

    def _scenario(self):
        scenario = self.parse_input(self.config.input_config)
        if not isinstance(scenario, ScenarioInput):
            raise ValueError("Coverage studies need a simulated scenario input.")
        return scenario

    def _prior(self, scenario):
        if self.config.prior is None:
            return None
        return build_prior(build_config(PriorConfig, self.config.prior), scenario.default_loss().param_dim)

    def _study(self, scenario):
        return run_coverage_study(
            scenario,
            build_config(GpsConfig, self.config.gps),
            replications=self.config.replications,
            prior=self._prior(scenario),
            seed=self.config.seed,
            n_workers=self.config.n_workers,
        )

    def run(self):
        scenario = self._scenario()
        report = self._study(scenario)
        create_dirs([os.path.dirname(self.config.output_file)])
        omega_file = report.to_csv(self.config.output_file, self.config.omega_file)

        print(f"Coverage study of {scenario.describe()}:")
        print(report.to_frame().to_string(index=False))
        print(f"omega mean: {report.omega_mean:.4g}, IQR: {report.omega_iqr:.4g}")
        print(f"Report written to {self.config.output_file}, scale samples to {omega_file}")

        return EXIT_OK


class FixedOmegaStudyTask(CoverageStudyTask):
    """Monte Carlo coverage of credible intervals at a fixed scale."""

    class FixedOmegaStudyTaskConfig(CoverageStudyTask.CoverageStudyTaskConfig):
        omega = fields.Float(
            required=True,
            validate=Range(min=0.0, min_inclusive=False),
            metadata={"description": "Fixed scale.", "example": 0.8},
        )

    def _study(self, scenario):
        return fixed_omega_study(
            scenario,
            self.config.omega,
            replications=self.config.replications,
            gps_cfg=build_config(GpsConfig, self.config.gps),
            prior=self._prior(scenario),
            seed=self.config.seed,
            n_workers=self.config.n_workers,
        )
