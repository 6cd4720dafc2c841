"""Exception hierarchy shared by every module."""


class PICertifyError(Exception):
    """Base class for all errors raised by picertify."""


class DomainError(PICertifyError, ValueError):
    pass


class UnreachableError(PICertifyError):
    pass


class NotContractiveError(PICertifyError):
    pass


class ClassViolationError(PICertifyError):
    """A sampled monotonicity probe failed where a class-K-infinity map is required."""


class AdmissibilityError(PICertifyError, ValueError):
    pass


class DivergentCostError(PICertifyError):
    pass


class EvaluationDivergesError(PICertifyError):
    def __init__(self, message, rate=None):
        super().__init__(message)
        self.rate = rate


class InfeasibleInitialPolicyError(PICertifyError):
    def __init__(self, message, rate=None):
        super().__init__(message)
        self.rate = rate


class NoCertificateError(PICertifyError):
    pass


class NoStabilizingDiscountError(PICertifyError):
    pass


class DiscountRangeError(PICertifyError, ValueError):
    pass


class FormulaDomainError(PICertifyError, ValueError):
    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ShapeError(PICertifyError, ValueError):
    pass
