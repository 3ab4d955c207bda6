from __future__ import annotations


class LeoIdentError(Exception):
    """Base class for every error raised by the toolkit."""


class IngestError(LeoIdentError):
    """A file could not be read or is too damaged to trust."""


class UndefinedHeadingError(LeoIdentError, ValueError):
    """The body +Y axis is (nearly) vertical, so it has no ground bearing."""


class PropagationError(LeoIdentError):
    """SGP4 failed or was asked for a time outside the element set's window."""


class OutsideDiscError(LeoIdentError, ValueError):
    """A pixel or direction falls outside the obstruction-map disc."""


class FrameOrderError(LeoIdentError, ValueError):
    """Frames were supplied out of timestamp order."""


class InfeasibleScenarioError(LeoIdentError):
    """A synthetic scenario cannot satisfy its coverage constraints."""
