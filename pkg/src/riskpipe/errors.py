"""Exception hierarchy shared by every pipeline stage."""


class RiskpipeError(Exception):
    """Base class; ``stage`` is filled in by the engine when a run aborts."""

    stage = None


class ValidationError(RiskpipeError):
    """Bad user input: configuration documents, data files, CLI flags."""


class ConfigError(ValidationError):
    def __init__(self, message, violations=None):
        self.violations = list(violations) if violations else [message]
        super().__init__(message)


class DataError(ValidationError):
    pass


class ModelError(RiskpipeError):
    pass


class BundleError(RiskpipeError):
    pass
