import argparse
import json
import logging
import sys

from marshmallow import Schema, fields, ValidationError

from .base import BaseTask
from .base.configuration import ObjectConfiguration, Config
from .experiments import asymptotic_omega_oracle
from .inference.credible import PER_COORDINATE_AVERAGE
from .models.losses import dictionary_losses
from .models.priors import dictionary_priors
from .input.random import dictionary_scenarios
from .utils import parse_classname
from .utils.exceptions import CalibrationError, NumericalError, StudyError

logger = logging.getLogger(__name__)

EXIT_ERROR = 1


class ExecutionConfig(Schema):
    task = fields.Nested(
        ObjectConfiguration, required=True, metadata={"description": "Task configuration"}
    )


def build_task(config):
    """Instantiates the task of a `{"task": {"classname", "config"}}` workflow."""
    config = Config(ExecutionConfig().load(config))

    task_cls = parse_classname(config.task.classname)
    if task_cls is None or not issubclass(task_cls, BaseTask):
        raise ValueError(f"Task class {config.task.classname} does not inherit from BaseTask.")
    return task_cls(config.task.config)


def execute(config_file):
    """Executes a workflow defined in a config file and returns its exit code."""

    with open(config_file) as file:
        config = json.load(file)

    return build_task(config).run()


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _gps_options():
    parser = _ArgumentParser(add_help=False)
    group = parser.add_argument_group("GPS options")
    group.add_argument("--alpha", type=float, default=0.05, help="Credible level is 1 - alpha.")
    group.add_argument("--B", type=int, default=100, help="Number of bootstrap resamples.")
    group.add_argument("--M", type=int, default=2000, help="Retained draws per chain.")
    group.add_argument("--burn-in", type=int, default=None, help="Burn-in iterations, defaults to M.")
    group.add_argument("--omega-init", type=float, default=1.0, help="Starting scale.")
    group.add_argument("--kappa0", type=float, default=1.0, help="Step size constant.")
    group.add_argument("--eps-tol", type=float, default=0.01, help="Coverage tolerance.")
    group.add_argument("--max-iter", type=int, default=50, help="Maximum number of steps.")
    group.add_argument(
        "--coverage-mode",
        default=PER_COORDINATE_AVERAGE,
        help="per_coordinate_average, all_coordinates or coordinate:<k>.",
    )
    group.add_argument("--bias-correction", action="store_true", help="Use the bias corrected anchor.")
    group.add_argument("--seed", type=int, default=0, help="Master seed.")
    group.add_argument("--prior", choices=sorted(dictionary_priors), default=None, help="Prior family.")
    group.add_argument("--prior-sd", type=float, default=10.0, help="Gaussian prior standard deviation.")
    return parser


def _study_options():
    parser = _ArgumentParser(add_help=False)
    group = parser.add_argument_group("study options")
    group.add_argument("--scenario", choices=sorted(dictionary_scenarios), required=True)
    group.add_argument("--n", type=int, required=True, help="Sample size.")
    group.add_argument("--reps", type=int, default=200, help="Number of replications.")
    group.add_argument("--workers", type=int, default=1, help="Worker processes.")
    group.add_argument("--out", required=True, help="Report CSV.")
    group.add_argument("--omega-out", default=None, help="CSV of the scale samples.")
    group.add_argument("--tau", type=float, default=None, help="Quantile level (quantreg).")
    group.add_argument("--error-sd", type=float, default=None, help="Error sd (quantreg).")
    group.add_argument("--sigma", type=float, default=None, help="Observation sd (normal_mean).")
    return parser


def _gps_config(args):
    return {
        "alpha": args.alpha,
        "B": args.B,
        "M": args.M,
        "burn_in": args.burn_in,
        "omega_init": args.omega_init,
        "kappa0": args.kappa0,
        "eps_tol": args.eps_tol,
        "max_iter": args.max_iter,
        "coverage_mode": args.coverage_mode,
        "bias_correction": args.bias_correction,
        "seed": args.seed,
    }


def _prior_config(args):
    if args.prior is None:
        return None
    return {"kind": args.prior, "sd": [args.prior_sd]}


def _calibrate_workflow(args):
    loss = {"name": args.loss, "tau": args.tau, "j": args.j}
    return {
        "task": {
            "classname": "gibbsflow.tasks.CalibrateTask",
            "config": {
                "input_config": {
                    "classname": "gibbsflow.input.CsvInput",
                    "config": {"path": args.data, "labels": args.labels or args.loss == "misclassification"},
                },
                "loss": loss,
                "prior": _prior_config(args),
                "gps": _gps_config(args),
                "trace_file": args.trace,
            },
        }
    }


def _study_workflow(args, fixed):
    scenario_cls = dictionary_scenarios[args.scenario]
    scenario = {"n": args.n, "seed": args.seed}
    for name in ("tau", "error_sd", "sigma"):
        value = getattr(args, name)
        if value is not None:
            scenario[name] = value

    config = {
        "input_config": {"classname": f"{scenario_cls.__module__}.{scenario_cls.__name__}", "config": scenario},
        "gps": _gps_config(args),
        "prior": _prior_config(args),
        "replications": args.reps,
        "seed": args.seed,
        "n_workers": args.workers,
        "output_file": args.out,
        "omega_file": args.omega_out,
    }
    classname = "gibbsflow.tasks.CoverageStudyTask"
    if fixed:
        config["omega"] = args.omega
        classname = "gibbsflow.tasks.FixedOmegaStudyTask"
    return {"task": {"classname": classname, "config": config}}


def build_parser():
    parser = _ArgumentParser(
        prog="gibbs-gps", description="Calibrates the scale of Gibbs posteriors and runs coverage studies."
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log debug messages.")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings and errors only.")
    commands = parser.add_subparsers(dest="command", required=True)

    calibrate = commands.add_parser("calibrate", parents=[_gps_options()], help="Calibrate omega on a CSV dataset.")
    calibrate.add_argument("--data", required=True, help="CSV file with header x1..xp,y.")
    calibrate.add_argument("--labels", action="store_true", help="y holds -1/+1 labels.")
    calibrate.add_argument("--loss", choices=sorted(dictionary_losses), default="check")
    calibrate.add_argument("--tau", type=float, default=0.5, help="Quantile level of the check loss.")
    calibrate.add_argument("--j", type=int, default=0, help="Distinguished covariate of the misclassification loss.")
    calibrate.add_argument("--trace", default=None, help="Trace CSV, printed if not given.")

    commands.add_parser(
        "study", parents=[_gps_options(), _study_options()], help="Coverage study of GPS calibrated intervals."
    )

    fixed = commands.add_parser(
        "fixed", parents=[_gps_options(), _study_options()], help="Coverage study at a fixed omega."
    )
    fixed.add_argument("--omega", type=float, required=True, help="Fixed scale.")

    oracle = commands.add_parser("oracle", help="Asymptotic scale of the check loss under normal errors.")
    oracle.add_argument("--tau", type=float, default=0.5)
    oracle.add_argument("--error-sd", type=float, default=2.0)

    run = commands.add_parser("run", help="Execute a JSON workflow.")
    run.add_argument("config_file", type=str, help="Path to the configuration file.")

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(message)s")

    try:
        if args.command == "oracle":
            print(f"{asymptotic_omega_oracle(args.tau, args.error_sd):.6g}")
            return 0
        if args.command == "run":
            return execute(args.config_file)
        if args.command == "calibrate":
            workflow = _calibrate_workflow(args)
        else:
            workflow = _study_workflow(args, fixed=args.command == "fixed")
        return build_task(workflow).run()
    except (ValidationError, ValueError, OSError, NumericalError, CalibrationError, StudyError) as err:
        logger.error("%s: %s", type(err).__name__, err)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
