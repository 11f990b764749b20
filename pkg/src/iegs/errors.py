"""Exception hierarchy shared by the library and the command line."""


class IegsError(Exception):
    """Base class for all library errors."""


class ModelError(IegsError, ValueError):
    """A model document is malformed or violates an invariant."""

    def __init__(self, message: str, violations=()):
        self.violations = list(violations)
        if self.violations:
            message = message + ": " + "; ".join(self.violations)
        super().__init__(message)


class ModelParseError(ModelError):
    pass


class DomainError(IegsError, ValueError):
    """A state lies outside the domain of the measurement functions."""


class PressureReversalError(DomainError):
    def __init__(self, pipeline: str, pi_from: float, pi_to: float):
        self.pipeline = pipeline
        super().__init__(
            f"pipeline {pipeline}: reversed pressure ({pi_from:.6g} < {pi_to:.6g})")


class JacobianSingularityError(DomainError):
    def __init__(self, pipeline: str, gap: float):
        self.pipeline = pipeline
        super().__init__(f"pipeline {pipeline}: pressure-square gap {gap:.3g} below Jacobian floor")


class SolverError(IegsError, RuntimeError):
    """Iterative solver failed."""

    def __init__(self, message: str, trace=None):
        self.trace = trace or []
        super().__init__(message)


class ConvergenceError(SolverError):
    pass


class RankDeficiencyError(SolverError):
    pass


class InfeasibleAttackError(IegsError):
    def __init__(self, message: str, active=()):
        self.active = list(active)
        if self.active:
            message = message + " (active: " + ", ".join(self.active) + ")"
        super().__init__(message)
