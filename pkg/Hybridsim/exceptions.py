"""
Exception hierarchy shared by every simulator app.
"""


class HybridsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(HybridsimError):
    """Invalid run, scenario, radio or agent configuration."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


class ProtocolError(HybridsimError):
    """Message segments inconsistent with the communication mode."""


class AccountingError(HybridsimError):
    """Counter preconditions of the PRR identity violated."""


class ShapeError(HybridsimError, ValueError):
    """Dimension mismatch between network parameters and inputs."""


class TrainingDivergedError(HybridsimError):
    """Non-finite Q-values or gradients."""


class SimulationFault(HybridsimError):
    """The event loop ran dry before every agent finished."""


class GameAbortedError(HybridsimError):
    """A game reached the round cap; carries the partial statistics."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class WeightFileError(HybridsimError):
    """Missing or corrupt serialized network weights."""


class UnknownVehicleError(HybridsimError, KeyError):
    """Lookup of a vehicle id absent from the scenario."""
