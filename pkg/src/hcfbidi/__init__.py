"""Desk-scale simulator for same-wavelength bi-directional transmission over hollow-core fibre."""

__version__ = "0.1.0"
