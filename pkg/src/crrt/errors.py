"""Exception hierarchy shared by all modules."""


class CRRTError(Exception):
    """Base class for every error raised by this package."""


class InputError(CRRTError, ValueError):
    """Malformed or inconsistent input (CLI exit code 2)."""


class NumericalError(CRRTError, ArithmeticError):
    """A numerical precondition failed (CLI exit code 3)."""


class MismatchedEnsembles(InputError):
    """Two ensembles do not share realization count or weights."""


class ShapeMismatch(InputError):
    pass


class UnresolvedReference(InputError):
    pass


class ModelFormatError(InputError):
    """A serialized model or code file cannot be decoded."""


class BudgetExceeded(InputError):
    pass


class ModeMismatch(InputError):
    pass


class NotFactorized(NumericalError):
    """Compression was requested from a model without rank factors."""


class NotPSD(NumericalError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class SingularCovariance(NumericalError):
    """Covariance of the k-th (1-based) chain vector is not invertible.

    Raised by :func:`crrt.ortho.orthonormalize`; the pseudo-inverse based
    :func:`crrt.ortho.orthogonalize` has no invertibility requirement.
    """

    def __init__(self, k, cond=float("inf")):
        self.k = k
        self.cond = cond
        super().__init__(
            f"covariance of chain vector {k} is singular or ill-conditioned "
            f"(condition number {cond:.3g}); use orthogonalize() instead"
        )
