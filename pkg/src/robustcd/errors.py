"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised when a parameter value or input lies outside the admissible set."""


class NumericsError(RuntimeError):
    """Raised when a numerical routine fails (singular matrix, bad quadrature, ...).

    Carries optional diagnostics such as the achieved tolerance or a condition
    number in ``detail``.
    """

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail
