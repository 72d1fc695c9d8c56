"""Exception hierarchy shared by every module."""


class IsaMigError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(IsaMigError):
    pass


class FormatError(IsaMigError):
    """Malformed serialized input; message carries line/field context."""


class NotFound(IsaMigError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its args otherwise
        return Exception.__str__(self)


class InternalError(IsaMigError):
    pass


class EditError(IsaMigError):
    pass


class SpecError(IsaMigError):
    pass


class IntegrityError(IsaMigError):
    pass


class StateError(IsaMigError):
    pass


class SizeError(IsaMigError):
    pass


class DeployBlocked(IsaMigError):
    """A job cannot be placed on the requested ISA. Not a health failure."""

    def __init__(self, job_id: str, reason: str):
        super().__init__(f"{job_id}: {reason}")
        self.job_id = job_id
        self.reason = reason


class BuildFailed(IsaMigError):
    def __init__(self, result):
        super().__init__("build failed: " + "; ".join(result.log[:3]))
        self.result = result
