from abc import ABC
import inspect
import json
import logging

from marshmallow import Schema, fields
from munch import Munch

logger = logging.getLogger(__name__)


def dict_to_munch(obj):
    """Recursively convert a dict to Munch. (there is a Munch.from_dict method, but it's not python3 compatible)"""
    if isinstance(obj, list):
        return [dict_to_munch(element) for element in obj]
    if isinstance(obj, dict):
        return Munch({k: dict_to_munch(v) for k, v in obj.items()})
    return obj


def munch_to_dict(obj):
    """Inverse of `dict_to_munch`, used when a config has to be loaded by a schema again."""
    if isinstance(obj, list):
        return [munch_to_dict(element) for element in obj]
    if isinstance(obj, dict):
        return {k: munch_to_dict(v) for k, v in obj.items()}
    return obj


class ObjectConfiguration(Schema):
    classname = fields.String(
        required=True, metadata={"description": "Class to instantiate."}
    )
    config = fields.Dict(
        required=True,
        metadata={"description": "Configuration used for instantiation of the class."},
    )


def build_config(schema, specs=None, **overrides):
    """Validates a configuration against a schema and returns it as a `Config`.

    :param schema: schema class or instance used for validation
    :type schema: marshmallow.Schema
    :param specs: configuration values, a path to a json file or None for all defaults
    :type specs: dict or str or None
    :param overrides: values that take precedence over `specs`

    :return: validated configuration, missing values filled with schema defaults
    :rtype: Config
    """
    if inspect.isclass(schema):
        schema = schema()

    if isinstance(specs, str):
        with open(specs, "r") as config_file:
            specs = json.load(config_file)

    specs = munch_to_dict(dict(specs or {}))
    specs.update({k: munch_to_dict(v) for k, v in overrides.items()})

    return Config(schema.load(specs))


class Configurable(ABC):
    """Base class for all configurable objects."""

    def __init__(self, config_specs):
        self.schema = self.initialize_schema()
        self.config = self._prepare_config(config_specs)

    @classmethod
    def initialize_schema(cls):
        """A Schema should be provided as an internal class of any class that inherits from Configurable.
        This method finds the Schema by traversing the inheritance tree. If no Schema is provided or inherited
        an error is raised.
        """
        for item in vars(cls).values():
            if inspect.isclass(item) and issubclass(item, Schema):
                return item()

        if len(cls.__bases__) > 1:
            raise RuntimeError(
                "Class does not have a defined schema however it inherits from multiple "
                "classes. Which one should schema be inherited from?"
            )

        parent_class = cls.__bases__[0]

        if parent_class is Configurable:
            raise NotImplementedError("Configuration schema not provided.")

        return parent_class.initialize_schema()

    def _prepare_config(self, config_specs):
        """Collects and validates configuration dictionary"""
        return build_config(self.schema, config_specs)


class Config(Munch):
    """Config object used for automatic object creation from a dict."""

    def __init__(self, config):
        config = dict_to_munch(config)

        super().__init__(config)
