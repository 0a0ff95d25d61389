"""Pin BLAS pools to one thread before numpy loads.

The desk-scale acceptance budget is stated for a single-threaded run, and
bitwise log determinism is only meaningful when the GEMM reduction order is
fixed. setdefault keeps any explicit caller override.
"""

import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
            "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(var, "1")
