"""Exception hierarchy shared by every pipeline stage."""


class RugguardError(Exception):
    """Base class; the CLI maps these to exit status 1."""


class OutOfRange(RugguardError, ValueError):
    pass


class NegativeReserve(RugguardError, ValueError):
    pass


class NegativeBalance(RugguardError, ValueError):
    pass


class ParseError(RugguardError, ValueError):
    def __init__(self, line: int, reason: str, path: str | None = None):
        self.line = line
        self.reason = reason
        self.path = path
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: {reason}")


class SchemaError(RugguardError, ValueError):
    pass


class OrderError(RugguardError, ValueError):
    pass


class EmptyWindow(RugguardError, ValueError):
    pass


class AuditFailure(RugguardError, AssertionError):
    def __init__(self, fields: list[str], detail: str = ""):
        self.fields = fields
        msg = "post-cutoff mutation changed feature(s): " + ", ".join(fields)
        super().__init__(msg + (f" ({detail})" if detail else ""))


class DegenerateVariance(RugguardError, ValueError):
    pass


class KeyMismatch(RugguardError, KeyError):
    def __init__(self, missing_features: list[str], missing_labels: list[str]):
        self.missing_features = missing_features
        self.missing_labels = missing_labels
        super().__init__(
            f"ids without features: {missing_features}; ids without labels: {missing_labels}"
        )

    def __str__(self) -> str:
        return self.args[0]


class EmptyDataset(RugguardError, ValueError):
    pass


class IoError(RugguardError, OSError):
    pass


class SingleClass(RugguardError, ValueError):
    pass


class NoPositives(RugguardError, ValueError):
    pass


class NonFinite(RugguardError, ValueError):
    pass


class SchemaMismatch(RugguardError, ValueError):
    pass


class CoverageError(RugguardError, ValueError):
    def __init__(self, missing: list[str], extra: list[str]):
        self.missing = missing
        self.extra = extra
        parts = []
        if missing:
            parts.append("missing ids: " + ", ".join(missing))
        if extra:
            parts.append("unexpected ids: " + ", ".join(extra))
        super().__init__("; ".join(parts))


class RangeError(RugguardError, ValueError):
    pass


class ConfigError(RugguardError, ValueError):
    pass
