"""Nine-patch local neural network pipeline for face gender and age-group
classification: preprocessing, patch generation, from-scratch feedforward
training, posterior-averaging inference, ensembles, and a cross-validation
harness.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
