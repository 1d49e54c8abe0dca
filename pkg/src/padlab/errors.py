"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3. Everything raised on purpose derives from PadlabError.
"""


class PadlabError(Exception):
    pass


class ShapeError(PadlabError):
    """Invalid or mismatched tensor shapes."""


class InvalidPadError(PadlabError):
    """Padding amount incompatible with the padding mode or spatial size."""


class GeometryError(PadlabError):
    """Layer geometry underflow (output dimension < 1, bad input size)."""


class GraphError(PadlabError):
    """Autodiff contract violation (e.g. backward from a non-scalar)."""


class DegenerateBatchError(PadlabError):
    """Batch statistics requested over fewer than two elements."""


class ConfigError(PadlabError):
    """Bad experiment config, unknown architecture, usage errors."""


class IncompatiblePaddingError(ConfigError):
    """Pad-indicator channel combined with non-zero padding."""


class DataError(PadlabError):
    """Dataset-level problems."""


class CorruptFileError(DataError):
    """On-disk dataset bytes do not match the record layout."""


class InvalidLabelError(DataError):
    """Label outside the declared class range."""


class NumericError(PadlabError):
    """Non-finite values where finite ones are required."""


class TrainingDivergedError(NumericError):
    """Non-finite loss or gradient during a training run."""


class DegenerateSampleError(PadlabError):
    """Statistic requested on a sample that is too small."""


class MissingPairError(PadlabError):
    """Comparison requested for a group without its counterpart."""
