from typing import Optional


class EhsenseError(Exception):
    pass


class ValidationError(EhsenseError, ValueError):
    pass


class DomainError(ValidationError):
    pass


class ContractViolation(EhsenseError, RuntimeError):
    pass


class ExperimentError(EhsenseError):
    def __init__(self, message: str, path: Optional[str] = None) -> None:
        super().__init__(message if path is None else f"{message} ({path})")
        self.path: Optional[str] = path


def check_probability(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}.")
    return float(value)
