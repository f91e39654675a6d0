"""Exception hierarchy shared by the library and the command line."""


class MkvError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 1


class ConfigurationError(MkvError, ValueError):
    """Invalid parameters, dimension mismatches or inconsistent sections."""

    exit_code = 1


class PreconditionError(MkvError, ValueError):
    """An operation was called on inputs it does not accept (e.g. empty data)."""

    exit_code = 1


class NumericError(MkvError, ArithmeticError):
    """Non-finite input handed to an observable or kernel."""

    exit_code = 2


class DivergenceError(NumericError):
    """A simulation produced a non-finite state."""

    exit_code = 2

    def __init__(self, step: int, ensemble: int, particle: int, seed: int | None = None):
        self.step, self.ensemble, self.particle, self.seed = step, ensemble, particle, seed
        where = f"step {step}, ensemble {ensemble}, particle {particle}"
        if seed is not None:
            where += f", seed {seed}"
        super().__init__(f"non-finite state at {where}")


class InputOutputError(MkvError, OSError):
    exit_code = 3
