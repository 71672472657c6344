"""Modular, gradient-isolated training with mutual-information objectives.

Subpackages:
  tensor      float64 autodiff core with tape-scoped gradients
  layers      dense / convolutional / graph layer families
  estimators  matrix-based, neural (DV bound), local-patch and graph MI
  trainer     sequential module training and the end-to-end baseline
  data        dataset loaders, splits and synthetic generators
  probe       accuracy, information-plane and embedding exports
  cli         batch front door (train / eval / probe / export / import / synth)
"""

__version__ = "0.1.0"

from .tensor import Tensor, Tape, GradientMap, apply_primitive, backward, grad_check

__all__ = [
    "Tensor",
    "Tape",
    "GradientMap",
    "apply_primitive",
    "backward",
    "grad_check",
    "__version__",
]
