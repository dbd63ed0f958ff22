"""Probability on Hilbert spaces for data assimilation, at finite truncation.

Submodules:

* :mod:`spectral_ops` -- operator norms, spectral calculus, Woodbury solves
* :mod:`rect_field` -- sine eigenbasis on a rectangle, DST sampling of Gaussian fields
* :mod:`gaussian` -- Gaussian measures, characteristic functionals, whitening
* :mod:`ensemble_stats` -- sample moments and Monte Carlo laws of large numbers
* :mod:`filters` -- Kalman, EnKF, ETKF and Bayes reweighting
* :mod:`experiments` -- seeded drivers behind the ``hilbert-da`` command
"""

from .errors import *  # noqa: F401,F403
from .gaussian import GaussianSpec, SampleBatch, sample
from .rect_field import (EigenvalueSequence, HeatKernel, InversePower, RectDomain,
                         covariance_eigs, parse_law, sample_field)
from .spectral_ops import Basis, SpectralOperator

__version__ = "0.1.0"

__all__ = [
    "Basis", "EigenvalueSequence", "GaussianSpec", "HeatKernel", "InversePower",
    "RectDomain", "SampleBatch", "SpectralOperator", "covariance_eigs", "parse_law",
    "sample", "sample_field",
]
