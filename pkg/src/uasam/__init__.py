"""Uncertainty-aware adapters for promptable segmentation, desk scale."""

import os

# single-threaded BLAS keeps runs bit-reproducible across machines; set
# before numpy initializes, and only if the user has not chosen otherwise
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
del os, _var

from . import engine  # noqa: E402
from .engine import Rng, Tensor  # noqa: E402

__version__ = "0.1.0"

__all__ = ["Rng", "Tensor", "engine", "__version__"]
