"""Exception hierarchy shared across the toolkit."""


class ToxspanError(Exception):
    """Base class for all toolkit errors."""


class DataError(ToxspanError):
    """Invalid or inconsistent input data (files, labels, predictions)."""


class RowParseError(DataError):
    """A single row of an input file could not be parsed."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class RegistryError(DataError):
    """An unknown model name was requested from the registry."""


class FetchError(ToxspanError):
    """A checkpoint or model artifact could not be retrieved."""


class IntegrityError(ToxspanError):
    """A downloaded artifact failed checksum verification."""
