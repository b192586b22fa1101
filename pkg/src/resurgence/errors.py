"""Exception hierarchy shared by all modules.

Every domain failure derives from :class:`ResurgenceError`; the CLI maps it
to exit code 1.
"""


class ResurgenceError(Exception):
    """Base class for domain errors."""


class DFSError(ResurgenceError, ValueError):
    pass


class PathError(ResurgenceError, ValueError):
    pass


class PathNotFound(PathError):
    """The planner exhausted its grid without reaching the target.

    This is not a proof that no admissible path exists.
    """


class ContinuationError(ResurgenceError):
    pass


class FlowError(ResurgenceError):
    pass


class QuadratureError(ResurgenceError):
    pass


class SubstitutionError(ResurgenceError):
    pass
