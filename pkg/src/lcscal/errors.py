"""Exception hierarchy shared across the calibration pipeline."""


class CalibrationError(Exception):
    """Base class; ``module`` tags which pipeline stage raised it."""

    module = "lcscal"

    def __init__(self, *args, module=None):
        super().__init__(*args)
        if module is not None:
            self.module = module

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class DataError(CalibrationError):
    """Input or intermediate data violates a precondition (CLI exit 2)."""


class SchemaError(DataError):
    module = "core_data"

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"missing required column {column!r}")


class RowError(DataError):
    module = "core_data"

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class EmptyInputError(DataError):
    module = "core_data"


class AlignmentError(DataError):
    module = "core_data"


class DomainError(DataError, ValueError):
    module = "features"


class InsufficientDataError(DataError):
    pass


class SplitError(DataError):
    module = "dataset"


class ShapeError(DataError, ValueError):
    pass


class DegenerateError(DataError):
    module = "evaluation"


class IntegrityError(CalibrationError):
    module = "neuralnet"


class TrainingError(CalibrationError):
    module = "training"

    def __init__(self, epoch, message="validation MAE is not finite"):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")
