"""Exception hierarchy shared by every stage of the toolkit."""


class PolyestError(Exception):
    """Base class for toolkit errors."""


class ConfigurationError(PolyestError, ValueError):
    """Bad dimensions, invalid option values or incompatible schemas."""


class SimulationDiverged(PolyestError, RuntimeError):
    """Raised when an integration step produces a non-finite or runaway state."""

    def __init__(self, step, message=None):
        self.step = int(step)
        super().__init__(message or f"simulation diverged at step {self.step}")


class CapacityError(PolyestError, ValueError):
    """Monomial count above the configured cap."""

    def __init__(self, count, cap):
        self.count = int(count)
        self.cap = int(cap)
        super().__init__(f"{self.count} candidate monomials exceed the cap of {self.cap}")


class SplitError(PolyestError, ValueError):
    pass


class ParseError(PolyestError, ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = int(line)
        super().__init__(f"{self.path}:{self.line}: {message}")


class SchemaError(PolyestError, ValueError):
    pass


class DegenerateTargetError(PolyestError, ValueError):
    pass


class NumericError(PolyestError, ArithmeticError):
    pass
