"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code (see ``echonav.cli``).
"""


class EchoNavError(Exception):
    exit_code = 1


class ShapeError(EchoNavError, ValueError):
    """Operand dimensions do not agree."""

    exit_code = 3


class ContractError(EchoNavError, RuntimeError):
    """A precondition of an operation was violated by the caller."""


class ConfigError(EchoNavError, ValueError):
    exit_code = 2


class InputError(EchoNavError, ValueError):
    """Bad data: non-finite observations, malformed logs, unknown scenes."""

    exit_code = 3


class SceneRejected(InputError):
    pass


class ProtocolError(InputError):
    """Evaluation split is incompatible with the checkpoint's configuration."""


class IntegrityError(EchoNavError):
    exit_code = 4


class ChecksumError(IntegrityError):
    pass


class VersionError(IntegrityError):
    pass


class TrainingDiverged(EchoNavError, FloatingPointError):
    """Raised when a PPO loss turns NaN; carries a diagnostic dump."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}
