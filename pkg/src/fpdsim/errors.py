"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class FpdSimError(Exception):
    exit_code = 1
    kind = "error"


class DomainError(FpdSimError, ValueError):
    kind = "domain"


class ConfigError(FpdSimError, ValueError):
    exit_code = 2
    kind = "config"

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key `{key}`")
        prefix = ": ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class PatternError(FpdSimError, ValueError):
    kind = "pattern"

    def __init__(self, message, coords=()):
        self.coords = tuple(coords)
        super().__init__(message)


class SolverError(FpdSimError, RuntimeError):
    exit_code = 3
    kind = "solver"

    def __init__(self, message, residual=None, time=None):
        self.residual = residual
        self.time = time
        extra = []
        if residual is not None:
            extra.append(f"residual={residual:.3e} A")
        if time is not None:
            extra.append(f"t={time:.6e} s")
        super().__init__(message + (f" ({', '.join(extra)})" if extra else ""))


class ComplianceError(SolverError):
    """A mirror reference needs more gate drive than the supply allows."""


class OutputError(FpdSimError, OSError):
    exit_code = 4
    kind = "io"
