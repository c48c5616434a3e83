"""Simulation and verification of surface diffusion for triple-junction clusters."""
import os

# Cap BLAS worker threads before numpy loads; no other worker pools exist.
_threads = os.environ.get("TRIFLOW_THREADS", "")
if _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from .kernels import BACKEND  # noqa: E402

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
