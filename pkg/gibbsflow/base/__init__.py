from gibbsflow.base.configuration import Configurable, Config, build_config
from gibbsflow.base.base_input import BaseInput
from gibbsflow.base.base_task import BaseTask
