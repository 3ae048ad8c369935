"""Exception types raised across the package."""


class VipGuardError(Exception):
    """Base class for every error raised by vipguard."""


class ConfigError(VipGuardError, ValueError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class EmptyTrajectory(VipGuardError, ValueError):
    pass


class SpawnFailure(VipGuardError, RuntimeError):
    pass


class ActionCountMismatch(VipGuardError, ValueError):
    pass


class NonFiniteAction(VipGuardError, ValueError):
    pass


class ShapeMismatch(VipGuardError, ValueError):
    pass


class NonFiniteGradient(VipGuardError, FloatingPointError):
    pass


class NonFiniteLoss(VipGuardError, FloatingPointError):
    def __init__(self, message: str, episode: int | None = None):
        super().__init__(message)
        self.episode = episode


class InsufficientData(VipGuardError, ValueError):
    pass


class IndexOutOfRange(VipGuardError, IndexError):
    pass
