"""Exception hierarchy shared across the package."""

from __future__ import annotations


class TempographError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(TempographError):
    """Input data violates a documented contract (bad file, bad value, bad shape)."""


class UnknownSensorError(ValidationError, KeyError):
    """A sensor id was referenced that is not in the registry."""

    def __init__(self, sensor_id: str, context: str = ""):
        self.sensor_id = sensor_id
        msg = f"unknown sensor {sensor_id!r}"
        if context:
            msg += f" ({context})"
        ValidationError.__init__(self, msg)

    def __str__(self) -> str:  # KeyError would repr() the message otherwise
        return self.args[0]


class ProviderError(TempographError):
    """A road-network provider could not answer a route query."""

    def __init__(self, from_id: str, to_id: str, detail: str = ""):
        self.pair = (from_id, to_id)
        msg = f"no route from {from_id!r} to {to_id!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DegenerateInputError(TempographError):
    """Input is structurally valid but numerically degenerate (zero lengths, isolated nodes)."""


class SynthesisError(TempographError):
    """Gap filling could not produce a complete matrix."""

    def __init__(self, msg: str, unresolved_sensors: list[str] | None = None):
        super().__init__(msg)
        self.unresolved_sensors = unresolved_sensors or []


class NumericalError(TempographError):
    """A numerical routine failed (singular system, non-convergence, non-finite loss)."""
