"""Exception types shared across the package."""


class KappaError(Exception):
    """Base class for package errors."""


class ContractViolation(KappaError, ValueError):
    """An operation was called outside its documented contract."""


class ConfigError(KappaError, ValueError):
    """A run configuration failed validation."""


class BackendFault(KappaError, RuntimeError):
    """A token model produced unusable data or failed to respond."""
