"""Exception types shared across the engine."""

from __future__ import annotations


class GsSceneError(Exception):
    """Base class for all engine errors."""


class MalformedDocument(GsSceneError):
    """Input text is not parseable as a document at all."""


class SchemaViolation(GsSceneError):
    """Document parsed but a field is missing or has the wrong type.

    ``path`` is a dotted/indexed path into the document, e.g.
    ``objects[2].transform.whl``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvariantViolation(GsSceneError):
    """A structurally valid value violates a domain invariant."""


class EmptyCloud(GsSceneError):
    """Operation requires at least one Gaussian."""


class UnknownLayout(GsSceneError):
    """PLY file lacks the required attribute layout."""


class ValueOutOfDomain(GsSceneError):
    """Stored values are outside the representable domain (non-finite)."""


class NonFiniteInput(GsSceneError):
    """Coordinates passed to a numeric operation contain NaN or inf."""


class NonPositiveThreshold(GsSceneError):
    """A length threshold that must be > 0 was not."""


class LengthMismatch(GsSceneError):
    """Parallel arrays disagree on length."""


class NonUnitQuaternion(GsSceneError):
    """Quaternion norm deviates from 1 beyond tolerance."""


class EndpointUnavailable(GsSceneError):
    """LLM endpoint could not be reached."""


class ResponseNotParseable(GsSceneError):
    """LLM response did not yield a parseable guide after retries."""
