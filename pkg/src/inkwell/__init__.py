"""Inkwell: keyed statistical watermarks for token sequences.

Embeds watermarks into text produced by any logit-providing language model
and detects them with calibrated p-values.  Ships a trainable smoothed
n-gram model so the whole pipeline runs end to end at desk scale.
"""

from .constants import PROTOCOL_VERSION
from .decode import BeamSearch, Sampling, WaterMax
from .detect import DetectionReport, detector_for
from .kernels import BACKEND as KERNEL_BACKEND
from .lm import NgramModel, Vocabulary, train_from_texts, train_ngram
from .prf import DEFAULT_PARAMS, PrfParams, WatermarkKey
from .schemes import DiPMark, GreenRed, GumbelMax, MorphMark, SynthID

__version__ = "0.1.0"

__all__ = [
    "PROTOCOL_VERSION",
    "KERNEL_BACKEND",
    "DEFAULT_PARAMS",
    "PrfParams",
    "WatermarkKey",
    "GreenRed",
    "DiPMark",
    "MorphMark",
    "GumbelMax",
    "SynthID",
    "Sampling",
    "BeamSearch",
    "WaterMax",
    "DetectionReport",
    "detector_for",
    "NgramModel",
    "Vocabulary",
    "train_ngram",
    "train_from_texts",
    "__version__",
]
