"""Exceptions raised by doalab."""


class DoaLabException(Exception):
    """Base class of all errors raised by this package."""


class ConfigException(DoaLabException):
    """A configuration file or command line value is invalid."""


class AudioFormatException(DoaLabException):
    """A WAV file has an unsupported layout or sample rate."""


class SignalException(DoaLabException):
    """A signal is empty, too short or has inconsistent dimensions."""


class SimulationException(DoaLabException):
    """A room, placement or source pool cannot be simulated."""


class SubspaceException(DoaLabException):
    """A subspace method received a degenerate problem."""


class BeamformerException(DoaLabException):
    """The MVDR solution could not be computed."""


class TrainingDivergedException(DoaLabException):
    """Training produced a non-finite loss."""


class CheckpointException(DoaLabException):
    """A checkpoint file is malformed or incompatible."""


class EvaluationException(DoaLabException):
    """Metric inputs are inconsistent."""
