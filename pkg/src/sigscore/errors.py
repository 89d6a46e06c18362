"""Exception types shared across the library."""


class SigScoreError(Exception):
    """Base class for library-specific failures."""


class DegenerateDataError(SigScoreError, ValueError):
    """Raised when data has no usable variation (e.g. zero terminal variance)."""


class DivergenceError(SigScoreError, ArithmeticError):
    """PDE solve or training loss left the representable range.

    Usually a symptom of paths scaled too large; rescale before retrying.
    """


class RolloutDivergenceError(DivergenceError):
    """Euler rollout produced a non-finite state."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite SDE state at step {step}")


class ParseError(SigScoreError, ValueError):
    """Malformed input file; carries the 1-based offending line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class ConfigValidationError(SigScoreError, ValueError):
    """Invalid run configuration; lists every violated field."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__(
            "invalid configuration:\n" + "\n".join(f"  - {v}" for v in violations)
        )
