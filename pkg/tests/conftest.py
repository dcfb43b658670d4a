import os

# Single-core box: OpenBLAS thread pools add startup jitter without speedup.
# Must be set before numpy is imported anywhere in the test session.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
