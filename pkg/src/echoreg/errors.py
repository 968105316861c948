"""Exception hierarchy shared by all echoreg modules.

DataError subclasses map to CLI exit code 2, InternalError subclasses to
exit code 3, BadConfig (a usage problem) to exit code 1.
"""


class EchoRegError(Exception):
    """Base class for all echoreg errors."""


class BadConfig(EchoRegError):
    """Invalid parameter values (nonpositive counts, bad limits, ...)."""


class DataError(EchoRegError):
    """Problems with input data or files."""


class UnsupportedFormat(DataError):
    """File is not one of the supported volume formats."""


class CorruptHeader(DataError):
    """A header field holds an impossible value; message names the field."""


class TruncatedData(DataError):
    """File ends before the voxel payload does; message names byte counts."""


class IoFailure(DataError):
    """Underlying read/write failed."""


class ConstantVolume(DataError):
    """Normalization is undefined: the volume has (near-)zero variance."""


class DimMismatch(DataError):
    """Two volumes that must share a grid do not."""


class DegenerateInput(DataError):
    """A metric is undefined on this input (zero variance region)."""


class GeometryMismatch(DataError):
    """Target and source sequences do not share dims/spacing/origin."""


class MissingMasks(DataError):
    """Mask-based registration requested without the required masks."""


class EmptyInput(DataError):
    """An aggregation was asked for zero usable records."""


class InternalError(EchoRegError):
    """An internal invariant was violated; indicates a bug."""


class ChecksumMismatch(InternalError):
    """Benchmark runs disagreed across worker counts; timings withheld."""
