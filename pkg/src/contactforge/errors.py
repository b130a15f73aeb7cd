"""Exception hierarchy shared by every module."""


class ContactForgeError(Exception):
    """Base class for all errors raised by contactforge."""


class ParseError(ContactForgeError):
    def __init__(self, position, message, expected=None, text=None):
        self.position = position
        self.message = message
        self.expected = expected
        self.text = text
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"at offset {position}: {message}{hint}")


class UnboundVariable(ContactForgeError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"variable {name!r} is not bound")


class DomainError(ContactForgeError):
    """Evaluation left the domain of a function (log/sqrt of non-positive, 1/0, ...)."""

    def __init__(self, message, subtree=None):
        self.subtree = subtree
        where = f" in {subtree}" if subtree is not None else ""
        super().__init__(f"{message}{where}")


class ChartMismatch(ContactForgeError):
    pass


class DegreeOverflow(ContactForgeError):
    pass


class UnsupportedDegree(ContactForgeError):
    pass


class SingularMatrix(ContactForgeError):
    """A pointwise linear solve met a numerically singular matrix."""


class SingularFlat(SingularMatrix):
    pass


class SingularSymplectic(SingularMatrix):
    pass


class SingularSharp(SingularMatrix):
    pass


class InternalInconsistency(ContactForgeError):
    """Two independent routes to the same verdict disagree."""


class WrongCount(ContactForgeError):
    pass


class NotHomogeneous(ContactForgeError):
    def __init__(self, message, residuals=None):
        self.residuals = residuals or {}
        super().__init__(message)


class EigenSolverFailure(ContactForgeError):
    pass


class TrackingAmbiguity(ContactForgeError):
    pass


class IllConditionedJacobian(SingularMatrix):
    pass


class UnsupportedConformalFactor(ContactForgeError):
    pass


class DomainExit(ContactForgeError):
    def __init__(self, message, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


class ScenarioError(ContactForgeError):
    """Structural problem in a scenario file."""


class UnknownReference(ScenarioError):
    pass


class IndexOutOfRange(ScenarioError):
    pass


class AntisymmetryViolation(ScenarioError):
    pass


class RejectionExhausted(ContactForgeError):
    pass
