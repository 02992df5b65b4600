"""Adversarial multi-confound regression networks with ensemble uncertainty
thresholding, plus the synthetic-data and evaluation tooling to exercise them.
"""

from .errors import (ConfigError, FormatError, InputError, MucranError,
                     NumericError, UndefinedMetricError, UsageError)
from .outputs import (ConfoundSpec, OutputArray, OutputLayout, confound_mask,
                      decade_age_spec, encode_sample, encoder_loss,
                      regressor_loss, weighted_bce)
from .model import ModelPair, build, predict

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "FormatError", "InputError", "MucranError", "NumericError",
    "UndefinedMetricError", "UsageError",
    "ConfoundSpec", "OutputArray", "OutputLayout", "confound_mask",
    "decade_age_spec", "encode_sample", "encoder_loss", "regressor_loss",
    "weighted_bce",
    "ModelPair", "build", "predict",
    "__version__",
]
