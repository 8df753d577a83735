"""Exception hierarchy shared by policies, environments and the harness."""


class BanditError(Exception):
    """Base class for all library errors."""


class ConfigError(BanditError, ValueError):
    """Invalid construction parameters (bad horizon, arm count, confidence...)."""


class ProtocolError(BanditError, RuntimeError):
    """A policy was driven out of order (select/feedback mismatch)."""


class RewardRangeError(BanditError, ValueError):
    """A reward outside [0, 1] was produced or fed back."""
