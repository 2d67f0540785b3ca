"""Exception hierarchy shared across the package.

CLI exit codes: ConfigError -> 1, DataError -> 2, TrainingDivergedError -> 3.
"""


class NinePatchError(Exception):
    """Base class for all package errors."""


class InvalidInputError(NinePatchError, ValueError):
    """An operation received arguments outside its contract."""


class ConfigError(NinePatchError):
    """Invalid or incomplete experiment/model configuration."""

    exit_code = 1


class DataError(NinePatchError):
    """Manifest, label, or model-file content is unusable."""

    exit_code = 2


class UnknownAgeLabelError(DataError):
    """A raw age label is not part of the merge protocol."""

    def __init__(self, label: str):
        super().__init__(f"unknown age label: {label!r}")
        self.label = label


class TrainingDivergedError(NinePatchError):
    """Training produced a non-finite loss or parameters."""

    exit_code = 3
