from .utils import create_dirs, parse_classname, make_rng, derive_seed, as_param_vector
from .exceptions import (
    InvalidArgumentError,
    NumericalError,
    CalibrationError,
    StudyError,
    DegenerateChainWarning,
)
