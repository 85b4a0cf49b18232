"""Nanofiber, taper and ion-exchange waveguide models plus a single-photon
measurement pipeline (simulation, g2 correlation, spectral, saturation and
polarization analysis)."""

from .errors import (ConfigurationError, DataError, InsufficientDataError, NoPeakError,
                     NumericalError, ParameterError, QPBenchError, UnsupportedProfileError)

__version__ = "0.1.0"
