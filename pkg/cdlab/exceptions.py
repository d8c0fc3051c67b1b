"""
Exceptions raised by cdlab.
"""

from typing import List, Optional


class ConfigError(ValueError):
    """Invalid run configuration; carries every problem found."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("Invalid configuration:\n  - " + "\n  - ".join(self.problems))


class SolverError(RuntimeError):
    """Linear solve failed or missed its tolerance."""

    def __init__(self, message: str, residual: Optional[float] = None, step: Optional[int] = None):
        self.residual = residual
        self.step = step
        super().__init__(message)

    def __str__(self) -> str:
        text = super().__str__()
        if self.step is not None:
            text = f"step {self.step}: {text}"
        if self.residual is not None:
            text = f"{text} (relative residual {self.residual:.3e})"
        return text
