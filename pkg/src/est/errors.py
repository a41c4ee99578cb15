"""Exception types shared across the package."""


class ESTError(Exception):
    pass


class DimensionError(ESTError, ValueError):
    pass


class NumericError(ESTError, ArithmeticError):
    pass


class GraphError(ESTError, RuntimeError):
    """Backward called twice on a graph, or on a non-scalar."""


class DeterminismError(ESTError, RuntimeError):
    pass


class ValidationError(ESTError, ValueError):
    pass


class StateError(ESTError, RuntimeError):
    pass


class CapacityError(ESTError, ValueError):
    pass


class FormatError(ESTError, ValueError):
    """Malformed binary container; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ConfigError(ESTError, ValueError):
    pass
