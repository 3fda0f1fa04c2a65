"""
DDCO Error Types
================

Exception hierarchy shared by every module. Validation problems that are
expected in normal use (a malformed trajectory) are returned as data; the
classes below are raised for faults that stop an operation.
"""

from typing import Optional


class DDCOError(Exception):
    """Base class for all toolkit errors"""


class ConfigError(DDCOError):
    """Invalid configuration or command-line values"""


class DimensionError(DDCOError):
    """Input vectors do not match the declared dimensions"""


class DatasetError(DDCOError):
    """A trajectory file could not be read or failed validation"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(DDCOError):
    """A checkpoint document is corrupted, truncated or inconsistent"""


class InferenceError(DDCOError):
    """Message passing produced an unusable (zero or non-finite) quantity"""


class EnumerationTooLarge(DDCOError):
    """Brute-force enumeration requested for an instance beyond its guard"""


class OptimizerError(DDCOError):
    """A gradient handed to the optimizer contains non-finite entries"""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        super().__init__(message)


class ClusteringError(DDCOError):
    """Vector quantization could not produce usable clusters"""

