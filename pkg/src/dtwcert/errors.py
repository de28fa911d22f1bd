"""Exception types shared across the package.

Contract violations raise a specific subclass of :class:`DtwcertError` so
callers (and the CLI exit-code mapping) can tell data problems apart from
internal ones. File-not-found conditions use the builtin FileNotFoundError.
"""


class DtwcertError(Exception):
    """Base class for all package errors."""


class DataError(DtwcertError):
    """Ingestion or dataset-shape problem (CLI exit code 2)."""


class ParseError(DataError):
    def __init__(self, path, row, col, detail=""):
        self.row, self.col = row, col
        super().__init__(f"{path}: unparsable cell at row {row}, column {col} {detail}".rstrip())


class NonFiniteValue(DataError):
    def __init__(self, path, row, col):
        self.row, self.col = row, col
        super().__init__(f"{path}: non-finite value at row {row}, column {col}")


class LengthMismatch(DataError):
    pass


class ChannelMismatch(DataError):
    pass


class WindowTooLarge(DataError):
    pass


class ShapeMismatch(DtwcertError):
    pass


class UnsupportedNorm(DtwcertError):
    def __init__(self, p):
        super().__init__(f"norm order must be 1, 2 or inf, got {p!r}")


class InvalidWindow(DtwcertError):
    pass


class EnvelopeMismatch(DtwcertError):
    pass


class DomainError(DtwcertError, ValueError):
    pass


class ScoreFnFailure(DtwcertError):
    def __init__(self, index, cause):
        self.index = index
        super().__init__(f"score function failed on sample {index}: {cause}")


class NonFiniteScore(DtwcertError):
    pass


class RadiusInsideSlack(DtwcertError):
    pass


class EmptyTrainSet(DtwcertError):
    pass


class RankTooLarge(DtwcertError):
    pass


class ThresholdError(DtwcertError):
    pass


class SingleClass(DtwcertError):
    pass


class EmptyResults(DtwcertError):
    pass


class ProtocolError(DtwcertError):
    pass


class ConnectFailure(ProtocolError):
    pass


class ScorerTimeout(ProtocolError):
    def __init__(self, ms):
        super().__init__(f"external scorer timed out after {ms} ms")


class SynthSpecError(DtwcertError):
    pass


class ConfigError(DtwcertError):
    """Bad run configuration (CLI exit code 1)."""
