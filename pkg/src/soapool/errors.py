"""Exception hierarchy shared by every soapool module."""


class SoapoolError(Exception):
    pass


class ConfigError(SoapoolError, ValueError):
    """Invalid parameter or configuration value."""


class PartitionMismatchError(ConfigError):
    def __init__(self, d, k, detail=""):
        msg = f"partition mismatch: d={d} channels cannot be split into k={k} groups"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.d = d
        self.k = k


class DimensionMismatchError(SoapoolError, ValueError):
    pass


class NotPSDError(SoapoolError, ValueError):
    def __init__(self, eigenvalue):
        super().__init__(f"matrix is not PSD: eigenvalue {eigenvalue!r} < -1e-10")
        self.eigenvalue = eigenvalue


class DegenerateTraceError(SoapoolError, ValueError):
    pass


class NSDivergenceError(SoapoolError, ArithmeticError):
    def __init__(self, step):
        super().__init__(f"NS divergence: non-finite value at iteration step {step}")
        self.step = step


class EigenConvergenceError(SoapoolError, ArithmeticError):
    def __init__(self, iterations):
        super().__init__(f"Jacobi eigensolver did not converge after {iterations} sweeps")
        self.iterations = iterations


class SketchOverflowError(SoapoolError, ArithmeticError):
    pass


class FitDivergenceError(SoapoolError, ArithmeticError):
    def __init__(self, epoch):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class DuplicateIdError(SoapoolError, KeyError):
    pass


class EmptyDatabaseError(SoapoolError, LookupError):
    pass


class NoValidQueriesError(SoapoolError, ValueError):
    def __init__(self, msg="no valid queries: every query has an empty positive set"):
        super().__init__(msg)


class IncomparableDescriptorsError(SoapoolError, ValueError):
    pass


class SizingError(ConfigError):
    pass


class FormatError(SoapoolError, ValueError):
    """Malformed binary file."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    def __init__(self, expected, actual):
        super().__init__(f"truncated payload: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class ChecksumError(FormatError):
    pass
