"""
Workbench exceptions

Every error raised by the core library derives from PufWorkbenchError so the
CLI modules can report it and carry on with the next unit of work.
"""


class PufWorkbenchError(Exception):
    """Base class for all workbench errors"""


class InvalidParameterError(PufWorkbenchError):
    def __init__(self, parameter: str, reason: str):
        self.parameter = parameter
        self.reason = reason
        super().__init__(f"Invalid parameter '{parameter}': {reason}")


class DimensionError(PufWorkbenchError):
    def __init__(self, expected: int, actual: int, what: str = "challenge"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"Dimension mismatch for {what}: expected {expected}, got {actual}")


class GenerationError(PufWorkbenchError):
    """Raised when the shuffle pairing cannot be sampled within the attempt budget"""
    def __init__(self, seed: int, attempts: int):
        self.seed = seed
        self.attempts = attempts
        super().__init__(f"Could not generate selector pairing for seed {seed} after {attempts} attempts")


class CrpParseError(PufWorkbenchError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"Line {line_no}: {reason}")


class DatasetSizeError(PufWorkbenchError):
    def __init__(self, requested: int, available: int, minimum: int = 0):
        self.requested = requested
        self.available = available
        self.minimum = minimum
        if requested < minimum:
            super().__init__(f"Requested {requested} records, at least {minimum} are needed")
        else:
            super().__init__(f"Requested {requested} records but only {available} are available")


class UndefinedInfluenceError(PufWorkbenchError):
    def __init__(self, bit: int):
        self.bit = bit
        super().__init__(f"Influence of bit {bit} is undefined: the bit is constant across the dataset")


class TrainingDivergedError(PufWorkbenchError):
    def __init__(self, iteration: int, loss: float):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"Training diverged at iteration {iteration} (loss={loss})")


class NumericalError(PufWorkbenchError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class OptimizerError(PufWorkbenchError):
    """SMO did not reach the KKT tolerance within its iteration budget"""
    def __init__(self, iterations: int, gap: float, n_support: int):
        self.iterations = iterations
        self.gap = gap
        self.n_support = n_support
        super().__init__(f"SMO did not converge after {iterations} iterations "
                         f"(violation gap={gap:.3e}, support vectors={n_support})")


class CellError(PufWorkbenchError):
    def __init__(self, cell: str, cause: Exception):
        self.cell = cell
        self.cause = cause
        super().__init__(f"Cell {cell} failed: {type(cause).__name__}: {cause}")


class UsageError(PufWorkbenchError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)
