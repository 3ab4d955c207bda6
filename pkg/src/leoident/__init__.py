"""Identify the Starlink satellites a user terminal talked to, beam switches
included, from obstruction maps, attitude telemetry, location and TLEs."""

from leoident.errors import LeoIdentError

__version__ = "0.1.0"

__all__ = ["LeoIdentError", "__version__"]
