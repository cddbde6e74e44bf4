"""Exception hierarchy shared by the solvers and the CLI."""


class HairhomError(Exception):
    """Base class for all package errors."""


class ValidationError(HairhomError, ValueError):
    """Invalid scenario or configuration; carries every violated rule."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ConfigParseError(ValidationError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        text = message if lineno is None else f"line {lineno}: {message}"
        super().__init__([text])


class GeometryError(ValidationError):
    pass


class DomainError(HairhomError, ValueError):
    """Evaluation point outside the region where a quantity is defined."""


class ConfigurationError(HairhomError, ValueError):
    pass


class InvalidModelError(HairhomError, ValueError):
    """Uptake law violates the monotonicity the closure relies on."""


class ModeError(HairhomError, ValueError):
    pass


class SolverError(HairhomError, RuntimeError):
    """A linear solve did not reach its residual tolerance."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")


class ConvergenceError(SolverError):
    """An iteration (Newton, Picard) stopped without meeting its tolerance."""

    def __init__(self, message, last=None, residual=None, history=None):
        self.last = last
        self.history = list(history) if history is not None else []
        super().__init__(message, residual)


class UnsupportedStudyError(HairhomError, ValueError):
    pass
