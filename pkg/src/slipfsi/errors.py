"""Exception hierarchy for slipfsi."""


class SlipFSIError(Exception):
    """Base class for all package errors."""


class UnsupportedDimensionError(SlipFSIError):
    pass


class InvalidInputError(SlipFSIError, ValueError):
    pass


class ConfigError(SlipFSIError, ValueError):
    """Invalid or unparsable simulation configuration."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ProximityError(SlipFSIError):
    """Body came closer to the container wall than the safety distance."""


class MapBlowupError(SlipFSIError):
    """A flow-map node left the container."""


class InversionError(SlipFSIError):
    """Newton inversion of the flow map did not converge."""


class ExtrapolationError(SlipFSIError):
    """Interpolation requested outside the grid."""


class GhostLayerError(SlipFSIError):
    """Stencil applied to a field whose ghost layers are not filled."""


class ShapeMismatchError(SlipFSIError, ValueError):
    pass


class CFLError(SlipFSIError):
    """Time step exceeds the stability limit."""

    def __init__(self, message, suggested_dt):
        self.suggested_dt = suggested_dt
        super().__init__(f"{message} (suggested dt <= {suggested_dt:.6g})")


class SolverError(SlipFSIError):
    """Linear solve failed to reach its tolerance."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class CheckpointError(SlipFSIError):
    pass
