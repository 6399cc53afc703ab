from . import Configurable, BaseInput
from ..utils import parse_classname


class BaseTask(Configurable):
    @staticmethod
    def parse_input(input_config):
        """Builds the input object using the provided configuration."""

        classname, config = input_config.classname, input_config.config

        cls = parse_classname(classname)
        if cls is None or not issubclass(cls, BaseInput):
            raise ValueError(f"Data input class {classname} does not inherit from BaseInput.")

        return cls(config)

    def run(self):
        """Executes the task and returns the process exit code."""

        raise NotImplementedError
