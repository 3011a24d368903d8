"""Exception hierarchy shared across the pipeline."""


class MiwafError(Exception):
    """Base class for all library errors."""

    exit_code = 3


class MalformedRecord(MiwafError):
    def __init__(self, line: int, reason: str = ""):
        self.line = line
        self.reason = reason
        msg = f"malformed record at line {line}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class EmptyCorpus(MiwafError):
    pass


class LengthMismatch(MiwafError):
    pass


class SingleClass(MiwafError):
    pass


class OutOfRange(MiwafError):
    pass


class DimMismatch(MiwafError):
    pass


class DegenerateInput(MiwafError):
    pass


class NonConvergence(MiwafError):
    exit_code = 4

    def __init__(self, max_iter: int):
        self.max_iter = max_iter
        super().__init__(f"solver did not reach KKT tolerance within {max_iter} iterations")


class NoLabeledData(MiwafError):
    pass


class EmptySet(MiwafError):
    pass


class Infeasible(MiwafError):
    pass
