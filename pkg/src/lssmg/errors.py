class LssError(Exception):
    """Base class for all errors raised by lssmg."""


class NonFiniteStateError(LssError):
    def __init__(self, step):
        super().__init__(f"non-finite state at step {step}")
        self.step = step


class SingularBlockError(LssError):
    def __init__(self, index, where=""):
        msg = f"singular diagonal block at index {index}"
        if where:
            msg += f" ({where})"
        super().__init__(msg)
        self.index = index


class BreakdownError(LssError):
    """Krylov breakdown: the operator is not positive definite along a search direction."""


class InnerSolveError(LssError):
    def __init__(self, level, block, residual):
        super().__init__(
            f"inner solve did not converge at level {level}, block {block} "
            f"(residual {residual:.3e})")
        self.level = level
        self.block = block


class DivergenceError(LssError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(LssError, ValueError):
    pass


class GuardError(LssError, MemoryError):
    """A problem is too large for a dense or desk-scale code path."""
