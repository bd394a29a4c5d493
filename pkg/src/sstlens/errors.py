"""Error types shared by the library, the service, and the CLI.

Every surfaced failure carries a ``kind`` so callers can map it uniformly:
"config" (bad or missing configuration), "data" (invalid input data), or
"version" (artifact/registry version mismatch). The CLI maps these to exit
codes 2, 3, and 4; the service maps them to structured HTTP error bodies.
"""


class ToolkitError(Exception):
    kind = "data"


class ConfigError(ToolkitError):
    kind = "config"


class DataError(ToolkitError):
    kind = "data"


class VersionError(ToolkitError):
    kind = "version"


class NoRegistrableDomain(DataError):
    """Hostname equals or is shorter than its public suffix."""
