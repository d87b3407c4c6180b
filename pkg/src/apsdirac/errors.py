"""Exception hierarchy; each class maps to one CLI exit code."""


class ApsDiracError(Exception):
    exit_code = 1


class ConfigError(ApsDiracError, ValueError):
    exit_code = 2

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class AssumptionError(ApsDiracError, ValueError):
    exit_code = 3


class KernelError(ApsDiracError, ValueError):
    """The adapted boundary operator has (numerically) non-trivial kernel."""

    exit_code = 4


class SolverError(ApsDiracError, RuntimeError):
    exit_code = 5


class ConstructionFault(SolverError):
    """Compressed operator failed its Hermiticity check."""
