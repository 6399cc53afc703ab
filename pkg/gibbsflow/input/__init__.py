from .dataset import Dataset, Observation, CsvInput, read_csv
from .random import (
    Scenario,
    ScenarioInput,
    NormalMeanInput,
    ClassificationInput,
    QuantRegInput,
    build_scenario,
)
