"""Exception hierarchy shared across the package."""


class IcsurvError(Exception):
    """Base class for all package errors."""


class InvalidInputError(IcsurvError, ValueError):
    pass


class SpecError(IcsurvError, ValueError):
    """Model specification and inputs disagree (e.g. covariate dimension)."""


class DataInconsistencyError(IcsurvError, ValueError):
    """Observed data that no latent path can have produced."""

    def __init__(self, message, record_id=None, line=None):
        self.record_id = record_id
        self.line = line
        prefix = []
        if record_id is not None:
            prefix.append(f"id={record_id}")
        if line is not None:
            prefix.append(f"line {line}")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class InitializationError(IcsurvError, RuntimeError):
    pass


class NumericalFailureError(IcsurvError, ArithmeticError):
    pass


class SingularInformationError(IcsurvError, ArithmeticError):
    def __init__(self, message, condition_number=float("nan")):
        self.condition_number = condition_number
        super().__init__(f"{message} (condition number {condition_number:.3g})")


class StudyFailureError(IcsurvError, RuntimeError):
    pass


class ConfigError(IcsurvError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
