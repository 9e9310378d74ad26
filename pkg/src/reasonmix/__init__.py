"""reasonmix: dynamic checkpoint interpolation with per-query reasoning intensity."""

import os as _os

# Tiny float64 GEMMs dominate this toolkit; BLAS thread pools only add
# overhead and reduction-order variance.  Respects explicit user overrides.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"

