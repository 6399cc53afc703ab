from . import Configurable


class BaseInput(Configurable):
    """Source of observations, configured through its inner schema."""

    def get_dataset(self):
        """Builds and returns the `Dataset` of observations."""

        raise NotImplementedError

    def describe(self):
        """Short name of the source used in logs and reports."""

        return type(self).__name__
