from typing import Optional


class MetaGfnError(Exception):
    """Failure that should end a CLI run with a specific exit status."""

    exit_code = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ConfigError(MetaGfnError):
    exit_code = 2


class UnknownNameError(MetaGfnError):
    exit_code = 3


class NonFiniteLossError(MetaGfnError):
    exit_code = 4

    def __init__(self, detail: str, dump_path: Optional[str] = None):
        super().__init__(detail)
        self.dump_path = dump_path


class ArtifactIOError(MetaGfnError):
    exit_code = 5


class GridFormatError(ConfigError, ValueError):
    """Malformed grid dump or potential file."""
