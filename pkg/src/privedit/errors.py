"""Exception types shared across the package."""


class PriveditError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(PriveditError):
    """Operands have incompatible shapes or sizes."""


# --- landmarks ---

class NoFaceFound(PriveditError):
    """The landmark provider reported that no face is present."""


class ProviderUnavailable(PriveditError):
    """A provider could not be reached (missing sidecar, I/O or network failure)."""


class MalformedLandmarks(PriveditError):
    """A landmark document has the wrong point count or out-of-range coordinates."""


class DegenerateFace(PriveditError):
    """Landmark geometry is too degenerate to work with (e.g. zero interocular distance)."""


# --- geometry ---

class FewerThanThreePoints(PriveditError):
    """A hull or triangulation was requested on fewer than three distinct points."""


class CollinearInput(PriveditError):
    """All input points lie on a single line."""


class DegenerateTriangle(PriveditError):
    """A triangle with (near-)zero area cannot define an affine map."""


# --- poisson ---

class EmptyRegion(PriveditError):
    """The blend region contains no interior pixels."""


class UnanchoredComponent(PriveditError):
    """A region component has no boundary pixels, making the system singular."""


# --- backend ---

class BackendError(PriveditError):
    """The editing backend returned an HTTP error status."""

    def __init__(self, status: int, body_excerpt: str = ""):
        self.status = status
        self.body_excerpt = body_excerpt
        super().__init__(f"backend returned status {status}: {body_excerpt[:200]}")


class Timeout(PriveditError):
    """A backend or provider call exceeded its deadline."""


class UndecodableResponse(PriveditError):
    """The backend response could not be decoded into an image."""


# --- evaluation ---

class ZeroVector(PriveditError):
    """Cosine similarity is undefined for a zero-norm vector."""


class TooFewSamples(PriveditError):
    """Frechet distance needs at least two samples per set."""


class UnknownImageId(PriveditError):
    """A prediction references an image id absent from the ground truth."""


class MalformedHeader(PriveditError):
    """The attribute file header is not in the expected format."""


class RowArityMismatch(PriveditError):
    """An attribute row has a different value count than the header."""


class NonBinaryValue(PriveditError):
    """An attribute value is not -1 or 1."""


class AbstentionRateExceeded(PriveditError):
    """More than half of the benchmark queries failed to produce an answer."""


# --- pipeline ---

class PipelineStageError(PriveditError):
    """A pipeline stage failed; carries the stage name for reporting."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
