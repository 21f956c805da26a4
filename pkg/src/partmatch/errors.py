"""Exception hierarchy shared by all partmatch modules."""


class PartmatchError(Exception):
    """Base class for every error raised by this package."""


class ParseError(PartmatchError):
    def __init__(self, message: str, line_no: int | None = None) -> None:
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ReservedTokenError(ParseError):
    """The wildcard token ``*`` was used as a stored edge label."""


class EmptyQueryError(ParseError):
    pass


class ConfigurationError(PartmatchError, ValueError):
    """Invalid parameters or inconsistent build/run configuration."""


class UnsupportedQueryError(PartmatchError):
    """Query shape the compiler does not handle (e.g. disconnected patterns)."""


class RoutingError(PartmatchError, LookupError):
    pass


class RedundancyRequiredError(PartmatchError):
    """Operation needs the target-keyed (reverse) store, which was not built."""


class OwnershipError(PartmatchError, AssertionError):
    """A store was asked about a vertex it does not own. Programming error."""


class InternalError(PartmatchError, RuntimeError):
    """Broken engine invariant (counter underflow, double binding, ...)."""
