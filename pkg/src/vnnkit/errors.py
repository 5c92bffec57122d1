"""Exception hierarchy shared across the toolkit.

Everything raised on bad user input derives from :class:`VnnkitError` so the
CLI can map it to a clean exit code instead of a traceback.
"""


class VnnkitError(Exception):
    """Base class for all toolkit errors."""


class InputShapeError(VnnkitError):
    """An input vector or matrix does not match the expected dimensions."""


class NetworkValidationError(VnnkitError):
    """A network violates a structural invariant (shape chain, finiteness)."""


class ModelFormatError(VnnkitError):
    """A model file could not be parsed; message carries line context."""


class DataFormatError(VnnkitError):
    """A dataset file (IDX or CSV) is malformed; message names the offset."""


class ConfigError(VnnkitError):
    """A configuration value is out of range or inconsistent."""


class SolverStalledError(VnnkitError):
    """The simplex solver hit its iteration cap without terminating."""


class TrainingDivergedError(VnnkitError):
    """The fixture trainer produced a non-finite loss."""


class InternalConsistencyError(VnnkitError):
    """An internal invariant failed; indicates a bug, not bad input."""
