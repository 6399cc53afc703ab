from .calibrate import CalibrateTask
from .study import CoverageStudyTask, FixedOmegaStudyTask
