"""Exception hierarchy.

``ValidationError`` covers anything the caller can fix by changing inputs
(bad parameters, malformed files); the CLI maps it to exit code 1.  Every
other ``DMDSCError`` is a runtime failure (exit code 2).
"""


class DMDSCError(Exception):
    pass


class ValidationError(DMDSCError, ValueError):
    pass


class DimensionError(ValidationError):
    pass


class MarginConstraintError(ValidationError):
    pass


class InvalidBatchError(ValidationError):
    pass


class MissingBackgroundError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class CheckpointError(DMDSCError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointIntegrityError(CheckpointError):
    pass


class TrainingDivergedError(DMDSCError, ArithmeticError):
    def __init__(self, epoch, batch, value):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
