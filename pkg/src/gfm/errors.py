"""Exception types raised across the package."""


class GFMError(Exception):
    """Base class for all package errors."""


class ContractError(GFMError, ValueError):
    """A caller violated a documented precondition (shape, base point, ...)."""


class DomainError(GFMError, ValueError):
    """A numeric primitive was evaluated outside its domain."""


class InvalidTangentError(GFMError, ValueError):
    pass


class CutLocusError(GFMError, ValueError):
    pass


class UnsupportedPriorError(GFMError, ValueError):
    pass


class NearSingularError(GFMError, ValueError):
    pass


class ConfigError(GFMError, ValueError):
    pass


class ParseError(GFMError, ValueError):
    pass


class CheckpointError(GFMError, ValueError):
    pass


class UnsupportedError(GFMError, ValueError):
    pass


class TrainingDivergedError(GFMError, RuntimeError):
    pass
