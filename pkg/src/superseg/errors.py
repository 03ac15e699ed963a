"""Exception hierarchy. Each class maps to a stable CLI exit code."""


class SupersegError(Exception):
    exit_code = 1


class PlyFormatError(SupersegError):
    exit_code = 3


class FrameError(SupersegError):
    """Missing or unreadable frame file (camera, depth or mask)."""

    exit_code = 4


class DimensionMismatchError(SupersegError):
    exit_code = 5


class ConfigError(SupersegError):
    exit_code = 6
