"""Simulate quasar spectra with and without the 2175 A extinction bump and detect it.

Two detectors are provided: small neural networks on encoded spectra
(:class:`BumpNetClassifier`) and the traditional reddened-composite fit
(:class:`BumpFitDetector`).
"""
__version__ = "0.1.0"

from .classifier import BumpNetClassifier
from .fitdetect import BumpFitDetector, FilterRules, FitResult, fit_spectrum
from .spectra import (
    BumpProfile, ExtinctionParams, Spectrum, apply_extinction, bump_area,
    c3_from_area, drude, extinction,
)
from .transform import ImageEncoder, MatrixEncoder, VectorEncoder

__all__ = [
    "BumpNetClassifier", "BumpFitDetector", "FilterRules", "FitResult", "fit_spectrum",
    "Spectrum", "BumpProfile", "ExtinctionParams", "drude", "extinction",
    "bump_area", "c3_from_area", "apply_extinction",
    "VectorEncoder", "MatrixEncoder", "ImageEncoder",
]
