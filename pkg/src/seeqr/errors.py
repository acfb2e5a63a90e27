"""Exception types raised across the package."""


class SeeError(Exception):
    """Base class for all package errors."""


class RankError(SeeError, ValueError):
    """Instrument or regressor matrix is (numerically) rank deficient."""


class SingularJacobian(SeeError, ArithmeticError):
    """SEE Jacobian is singular and bandwidth continuation could not recover."""


class MaxIterations(SeeError, RuntimeError):
    """Solver exhausted its iteration budget."""


class EndogenousNotSupported(SeeError, ValueError):
    """Estimator only defined for exogenous designs (Z = X)."""


class ZeroBias(SeeError, ArithmeticError):
    """Bias term of the SEE MSE vanishes, so the optimal bandwidth is infinite."""


class AllFitsFailed(SeeError, RuntimeError):
    """None of the parametric residual fits converged."""


class SchemaError(SeeError, ValueError):
    """Input file is missing required columns."""


class ParseError(SeeError, ValueError):
    """Input file has an unparseable or non-finite cell."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
