"""Exception roots shared by every module.

The CLI maps ``ValidationError`` to exit code 2 and ``ComputationError`` to
exit code 3; concrete errors are defined next to the code that raises them.
"""


class ValidationError(Exception):
    """Raised when inputs violate a documented precondition."""
    pass


class ComputationError(Exception):
    """Raised when a numerical procedure fails at runtime."""
    pass
