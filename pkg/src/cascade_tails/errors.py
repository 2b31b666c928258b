class CascadeTailsError(Exception):
    """Base class for package errors."""


class ConfigError(CascadeTailsError, ValueError):
    """Invalid parameters or flag combinations."""


class ResourceGuardError(CascadeTailsError):
    """A size guard (generation cap, dense-matrix cap, particle cap) was exceeded."""

    def __init__(self, guard: str, message: str):
        super().__init__(f"[{guard}] {message}")
        self.guard = guard
