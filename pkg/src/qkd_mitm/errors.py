"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its contract."""


class LengthMismatch(ContractViolation):
    """Two bit strings that must have equal length do not."""


class GuardRefused(RuntimeError):
    """An exhaustive computation was refused by the desk-scale guard.

    Pass ``override=True`` to the operation to run it anyway.
    """


class KeyExhausted(RuntimeError):
    """The shared secret key pool has no bits left."""


class ConfigError(ContractViolation):
    """A protocol or experiment configuration is invalid."""


class Unimplemented(NotImplementedError):
    """A configuration value names a feature that exists only as a placeholder."""
