"""Exception types raised across the engine.

Every error condition named by an operation contract gets its own class
so callers can catch precisely; all inherit from ReidFuseError.
"""

from __future__ import annotations


class ReidFuseError(Exception):
    """Base class for all engine errors."""


# --- configuration / registry ---

class DuplicateStream(ReidFuseError):
    pass


class ZeroDimension(ReidFuseError):
    pass


# --- ingest ---

class MalformedRecord(ReidFuseError):
    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class DuplicateFrameInTrack(ReidFuseError):
    pass


class DegeneratePolygon(ReidFuseError):
    pass


class OverlappingSplits(ReidFuseError):
    pass


class DimensionMismatch(ReidFuseError):
    pass


class UnknownStream(ReidFuseError):
    pass


class NonFiniteValue(ReidFuseError):
    pass


class DuplicateEmbedding(ReidFuseError):
    pass


# --- geometry ---

class CoincidentCenters(ReidFuseError):
    pass


class DegenerateHull(ReidFuseError):
    pass


class CoincidentCentroids(ReidFuseError):
    pass


class ZeroLengthLateralLine(ReidFuseError):
    pass


class DuplicateCornerWarning(UserWarning):
    """A hull support point was selected for more than one direction."""


# --- gallery / fusion ---

class MissingEmbedding(ReidFuseError):
    pass


class MissingStream(ReidFuseError):
    pass


class ShapeMismatch(ReidFuseError):
    pass


class EmptyStreamSet(ReidFuseError):
    pass


# --- evaluation ---

class NoRelevant(ReidFuseError):
    pass


class EmptyQuerySet(ReidFuseError):
    pass


class NoVerifiedMatches(ReidFuseError):
    pass


class QuerySetMismatch(ReidFuseError):
    pass


# --- stats ---

class LengthMismatch(ReidFuseError):
    pass


class EmptyAPs(ReidFuseError):
    pass


# --- service ---

class UnknownQuery(ReidFuseError):
    pass


class GalleryNotBuilt(ReidFuseError):
    pass


class UnknownTrajectory(ReidFuseError):
    pass
