"""Shared test setup.

NUMBA_NUM_THREADS must be set before numba is imported anywhere so the
worker-count determinism tests can run up to 8 threads even on small boxes.
"""

import os

os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np  # noqa: E402
import pytest  # noqa: E402


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Compile the hot kernels once up front so timings stay honest."""
    from echoreg.backend import get_backend

    backend = get_backend()
    if hasattr(backend, "warm_up"):
        backend.warm_up()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def random_volume(rng, dims=(6, 5, 4), spacing=None, origin=None):
    """Random float32-representable volume (so file round-trips are exact)."""
    from echoreg.volume import Volume3

    data = rng.random(dims, dtype=np.float32).astype(np.float64)
    spacing = spacing or tuple(
        np.float32(s) for s in rng.uniform(0.5, 2.0, 3)
    )
    origin = origin if origin is not None else tuple(
        np.float32(o) for o in rng.uniform(-10.0, 10.0, 3)
    )
    return Volume3(data, spacing, origin)
