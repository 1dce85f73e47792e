"""Exception hierarchy for the simulator."""


class SpinDDError(Exception):
    """Base class for all errors raised by spindd."""


class ConfigurationError(SpinDDError, ValueError):
    """Invalid device, grid or run configuration."""


class HermiticityError(SpinDDError, ValueError):
    def __init__(self, max_asymmetry):
        self.max_asymmetry = float(max_asymmetry)
        super().__init__(f"matrix is not Hermitian: max |M - M^H| = {self.max_asymmetry:.3e}")


class DomainError(SpinDDError, ValueError):
    """A function was evaluated outside its domain (e.g. log of a nonpositive eigenvalue)."""

    def __init__(self, message, value=None, nodes=None):
        self.value = value
        self.nodes = nodes
        super().__init__(message)


class SingularPolarizationError(DomainError):
    def __init__(self, p):
        super().__init__(f"polarization p={p!r} makes P singular (need 0 <= p < 1)", value=p)


class LinearSolverError(SpinDDError, ArithmeticError):
    def __init__(self, node):
        self.node = int(node)
        super().__init__(f"singular pivot block at interior node {self.node}")


class ConvergenceError(SpinDDError, ArithmeticError):
    """An iteration (Newton, Gummel) failed to reach its tolerance."""

    def __init__(self, message, last_norm=None, iterations=None):
        self.last_norm = last_norm
        self.iterations = iterations
        super().__init__(message)


class StepFailure(SpinDDError, RuntimeError):
    """A time step could not be completed; carries the failing time level."""

    def __init__(self, step, time, cause):
        self.step = step
        self.time = time
        self.cause = cause
        super().__init__(f"time step {step} (t={time:.6g}) failed: {cause}")
