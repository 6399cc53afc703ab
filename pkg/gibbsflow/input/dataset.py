from typing import NamedTuple

import numpy as np
import pandas as pd
from marshmallow import Schema, fields

from ..base import BaseInput
from ..utils.exceptions import InvalidArgumentError

LABELS = (-1, 1)


class Observation(NamedTuple):
    """A single row: covariate vector plus a real response or a -1/+1 label."""

    covariates: np.ndarray
    response: float


class Dataset:
    """Immutable table of observations, the unit of bootstrap resampling.

    Covariates are stored as an `(n, p)` float array (`p` may be 0, e.g. for the normal mean problem)
    and responses as an `(n,)` float array. Both arrays are read-only; resampling creates new datasets.

    :param covariates: covariate matrix of shape `(n, p)`; a 1-d array is read as `p = 1`
    :type covariates: array-like
    :param response: responses or labels, shape `(n,)`
    :type response: array-like
    :param labels: whether the responses are class labels in {-1, +1}
    :type labels: bool
    """

    def __init__(self, covariates, response, labels=False):
        response = np.array(response, dtype=np.float64).reshape(-1)
        n = response.shape[0]

        if covariates is None:
            covariates = np.empty((n, 0))
        covariates = np.array(covariates, dtype=np.float64)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)

        if n < 1:
            raise InvalidArgumentError("A dataset needs at least one observation.")
        if covariates.ndim != 2 or covariates.shape[0] != n:
            raise InvalidArgumentError(
                f"Covariates of shape {covariates.shape} do not match {n} responses."
            )
        if labels and not np.all(np.isin(response, LABELS)):
            raise InvalidArgumentError("Label responses must be exactly -1 or +1.")

        covariates.setflags(write=False)
        response.setflags(write=False)

        self._covariates = covariates
        self._response = response
        self._labels = bool(labels)

    @classmethod
    def from_rows(cls, rows, labels=False):
        """Builds a dataset from a sequence of `Observation`."""
        rows = list(rows)
        if not rows:
            raise InvalidArgumentError("A dataset needs at least one observation.")

        dims = {np.size(row.covariates) for row in rows}
        if len(dims) != 1:
            raise InvalidArgumentError("All rows must have the same covariate dimension.")

        covariates = np.array([np.atleast_1d(row.covariates) for row in rows], dtype=np.float64)
        covariates = covariates.reshape(len(rows), dims.pop())
        return cls(covariates, [row.response for row in rows], labels=labels)

    @property
    def covariates(self):
        return self._covariates

    @property
    def response(self):
        return self._response

    @property
    def labels(self):
        return self._labels

    @property
    def n(self):
        return self._response.shape[0]

    @property
    def p(self):
        """Covariate dimension."""
        return self._covariates.shape[1]

    @property
    def rows(self):
        return [Observation(x, y) for x, y in zip(self._covariates, self._response)]

    def __len__(self):
        return self.n

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, index):
        return Observation(self._covariates[index], self._response[index])

    def take(self, indices):
        """Returns a new dataset made of the rows at `indices` (repetitions allowed)."""
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(self._covariates[indices], self._response[indices], labels=self._labels)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self._labels == other._labels
            and np.array_equal(self._covariates, other._covariates)
            and np.array_equal(self._response, other._response)
        )

    def __repr__(self):
        kind = "labels" if self._labels else "response"
        return f"Dataset(n={self.n}, p={self.p}, {kind})"

    def to_frame(self):
        """Returns the dataset as a DataFrame with columns `x1..xp,y`."""
        frame = pd.DataFrame(
            self._covariates, columns=[f"x{i + 1}" for i in range(self.p)]
        )
        frame["y"] = self._response.astype(np.int64) if self._labels else self._response
        return frame

    def to_csv(self, path):
        """Writes the dataset to a CSV file with a `x1..xp,y` header."""
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def read_csv(path, labels=False):
    """Reads a dataset from a CSV file with header `x1..xp,y`.

    :param path: path to the CSV file
    :type path: str
    :param labels: whether `y` holds -1/+1 labels
    :type labels: bool
    :rtype: Dataset
    """
    frame = pd.read_csv(path, sep=",", decimal=".", float_precision="round_trip")
    if "y" not in frame.columns:
        raise InvalidArgumentError(f"{path} has no `y` column.")

    covariate_columns = [c for c in frame.columns if c != "y"]
    expected = [f"x{i + 1}" for i in range(len(covariate_columns))]
    if covariate_columns != expected:
        raise InvalidArgumentError(
            f"{path} must have columns {expected + ['y']}, got {list(frame.columns)}."
        )

    values = frame.to_numpy(dtype=np.float64)
    if np.isnan(values).any():
        raise InvalidArgumentError(f"{path} contains missing values.")

    return Dataset(frame[covariate_columns].to_numpy(dtype=np.float64), frame["y"], labels=labels)


class CsvInput(BaseInput):
    """Observations read from a CSV file with header `x1..xp,y`."""

    class _Schema(Schema):
        path = fields.String(
            required=True,
            metadata={"description": "Path to the CSV file.", "example": "/tmp/data.csv"},
        )
        labels = fields.Bool(
            load_default=False,
            metadata={"description": "Whether `y` holds -1/+1 labels."},
        )

    def get_dataset(self):
        return read_csv(self.config.path, labels=self.config.labels)

    def describe(self):
        return f"csv({self.config.path})"
