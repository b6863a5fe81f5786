"""Exception hierarchy shared by every stage of the pipeline."""


class FbarCircError(Exception):
    """Base class for all package errors."""


class ValidationError(FbarCircError, ValueError):
    """Bad user-supplied value. ``field`` names the offending parameter."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class CircuitError(ValidationError):
    """Structurally invalid circuit (dangling node, missing ground, ...)."""


class ContractError(FbarCircError, TypeError):
    """An operation was handed an argument outside its contract."""


class UnsupportedConfigurationError(FbarCircError):
    pass


class SolverError(FbarCircError):
    """Singular or otherwise unsolvable block system."""

    def __init__(self, message, omega0=None, rcond=None, freq_hz=None):
        self.omega0 = omega0
        self.rcond = rcond
        self.freq_hz = freq_hz
        super().__init__(message)


class NonConvergenceError(FbarCircError):
    """Iteration cap reached; ``report`` carries the residual history."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class NoMatchInTopologyError(FbarCircError, ValueError):
    """The series-L / shunt-C section cannot transform this impedance."""


class PassivityError(FbarCircError):
    pass


class NetlistError(ValidationError):
    """All problems found in one netlist; ``problems`` is a list of (line, key, message)."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = []
        for line, key, msg in self.problems:
            where = f"line {line}" if line else "netlist"
            lines.append(f"{where}: {key}: {msg}" if key else f"{where}: {msg}")
        FbarCircError.__init__(self, "\n".join(lines))
        self.field = self.problems[0][1] if self.problems else None
