"""Exception hierarchy shared by all modules."""


class ShiftGofError(Exception):
    """Base class for package errors."""


class DomainError(ShiftGofError, ValueError):
    """An argument lies outside its admissible range."""


class ConditionError(ShiftGofError):
    """A model violates a regularity condition needed by an operation."""


class NumericalError(ShiftGofError, ArithmeticError):
    """A computation produced non-finite values."""


class SimulationDiverged(NumericalError):
    def __init__(self, step, replicate=None, value=None):
        self.step = step
        self.replicate = replicate
        self.value = value
        where = f"step {step}"
        if replicate is not None:
            where += f" (replicate {replicate})"
        super().__init__(f"simulation diverged at {where}: |X| = {value!r}")


class TailTruncationError(NumericalError):
    """A kernel was evaluated where the invariant density has underflowed."""


class TableError(ShiftGofError):
    """A quantile table or sample batch is malformed or does not match its use."""


class ConfigError(ShiftGofError):
    """An experiment configuration is invalid."""
