from __future__ import annotations


class MravffError(Exception):
    exit_code = 1


class ValidationError(MravffError, ValueError):
    exit_code = 1


class ConfigError(ValidationError):
    pass


class ContractError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class CheckpointError(ValidationError):
    pass


class DataError(MravffError):
    exit_code = 2


class FormatError(DataError):
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class PayloadLengthError(DataError):
    def __init__(self, path: str, expected: int, actual: int) -> None:
        super().__init__(
            f"{path}: expected {expected} bytes, found {actual} bytes"
        )
        self.expected = expected
        self.actual = actual


class NumericError(MravffError):
    exit_code = 3


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, MravffError):
        return exc.exit_code
    return 1
