"""Rotor estimation with the geometric-algebra LMS adaptive filter."""
from . import algebra, baseline, data, estimation
from .algebra import Multivector, rotor, vector
from .estimation import (
    CorrespondencePair, Correspondences, FilterConfig, FilterState, LearningCurve,
    INITIAL_ROTOR, lms_step, sd_step, run_filter, emse_ensemble,
)

__version__ = "0.1.0"
