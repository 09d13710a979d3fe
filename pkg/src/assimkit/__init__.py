"""Observation encoding, Cressman dilation, losses, metrics and cycling for learned data assimilation."""

__version__ = "0.1.0"
