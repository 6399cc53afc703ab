import os
from pydoc import locate

import numpy as np

from .exceptions import InvalidArgumentError

# Stream tags used to derive independent RNG streams from one master seed
STREAM_DATA = 1
STREAM_BOOTSTRAP = 2
STREAM_CHAIN = 3
STREAM_RESTART = 4
STREAM_REPLICATION = 5
STREAM_FINAL = 6
STREAM_PILOT = 7


def parse_classname(classname):
    return locate(classname)


def create_dirs(dirs):
    """Creates the given directories if they do not exist yet.

    :param dirs: list of directories to create
    :type dirs: list(str)
    """
    for dir_ in dirs:
        if dir_ and not os.path.exists(dir_):
            os.makedirs(dir_)


def make_rng(seed, *path):
    """Builds a numpy Generator for the stream identified by `(seed, *path)`.

    Streams with different paths are statistically independent, and a given path always yields
    the same stream, e.g. `make_rng(seed, STREAM_CHAIN, iteration, b)` for the chain of bootstrap set `b`.

    :param seed: master seed (64-bit unsigned integer)
    :type seed: int
    :param path: non-negative integers identifying the stream
    :type path: int
    :return: random generator
    :rtype: numpy.random.Generator
    """
    entropy = [int(seed)] + [int(p) for p in path]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed, *path):
    """Derives a new 63-bit master seed from `(seed, *path)`."""
    return int(make_rng(seed, *path).integers(0, 2**63 - 1))


def as_param_vector(theta, name="theta"):
    """Converts `theta` to a 1-d float array and checks that all entries are finite."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if theta.ndim != 1:
        raise InvalidArgumentError(f"{name} must be a vector, got shape {theta.shape}.")
    if not np.all(np.isfinite(theta)):
        raise InvalidArgumentError(f"{name} must have finite entries, got {theta}.")
    return theta
