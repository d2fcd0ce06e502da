class TargetAugError(Exception):
    """Base exception for every error raised by the toolkit."""
    pass


class ValidationFailure:
    """Mixin marking errors caused by bad input, config or artifacts (CLI exit code 1)."""
    exit_code = 1


class RuntimeFault:
    """Mixin marking numerical or training faults (CLI exit code 2)."""
    exit_code = 2


class ConfigError(ValidationFailure, TargetAugError):
    """Custom exception for configuration errors. Carries every violation found in one pass."""
    def __init__(self, message: str, errors: list | None = None):
        super().__init__(message)
        self.errors = errors or []


class RecordSchemaError(ValidationFailure, TargetAugError):
    """Custom exception for on-disk records that fail schema validation."""
    def __init__(self, message: str, line_number: int | None = None, validation_path: list | None = None):
        super().__init__(message)
        self.line_number = line_number
        self.validation_path = validation_path or []
