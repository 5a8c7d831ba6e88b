"""Exception hierarchy shared by all sfmloc modules."""


class LocalizationError(Exception):
    """Base class for every error raised by this package."""


# --- dataset parsing -------------------------------------------------------

class MalformedHeader(LocalizationError):
    """File does not start with the expected magic/header line."""


class TruncatedFile(LocalizationError):
    """Input ended in the middle of a record."""


class IndexOutOfRange(LocalizationError):
    """A view list references a camera that does not exist."""


class DimensionMismatch(LocalizationError):
    """Descriptor length in a keyfile header is not 128."""


class UnknownQuery(LocalizationError):
    """A query image name is not present in the camera list."""


class EmptyTrack(LocalizationError):
    """Descriptor averaging was asked for an empty track."""


# --- matching --------------------------------------------------------------

class EmptyInput(LocalizationError):
    """An operation that needs at least one element got none."""


# --- minimal solvers -------------------------------------------------------

class DegenerateConfiguration(LocalizationError):
    """Input geometry is degenerate (collinear points, coincident rays)."""


class NoRealSolution(LocalizationError):
    """The solver polynomial has no physically valid real root."""


class BehindCamera(LocalizationError):
    """Requested projection of a point with non-positive depth."""


# --- robust estimation -----------------------------------------------------

class InsufficientMatches(LocalizationError):
    """Fewer distinct correspondences than the minimal sample size."""


class SamplingExhausted(LocalizationError):
    """Co-occurrence sampling hit its restart cap without a full sample."""


class NoSolution(LocalizationError):
    """No candidate pose ever reached the minimum fitted-match count."""


# --- benchmark / cli -------------------------------------------------------

class MissingGolden(LocalizationError):
    """A query has no golden reference pose."""


class InvalidParams(LocalizationError):
    """Parameter combination violates a documented precondition."""


# Exporters raise the interpreter's own I/O errors; the alias keeps the
# contract name importable.
IoError = OSError
