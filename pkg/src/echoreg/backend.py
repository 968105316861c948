"""Kernel backend selection and the data-parallel particle executor.

The ECHOREG_BACKEND environment variable picks the kernel implementation:

* ``numba`` - JIT-compiled loops (fails loudly if numba is missing)
* ``numpy`` - the vectorized pure-numpy fallback
* ``auto``  - numba when importable, else numpy (the default)

Both backends expose the same functions and the same semantics; parallel
evaluation never changes results because every particle is computed
independently and reduced in fixed index order.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig
from .geometry import index_affine
from .volume import Volume3

log = logging.getLogger(__name__)

BACKEND_ENV = "ECHOREG_BACKEND"

_modules: dict[str, object] = {}


def get_backend(name: str | None = None):
    """Resolve a kernel module by name, env flag, or auto-detection."""
    requested = (name or os.environ.get(BACKEND_ENV) or "auto").lower()
    if requested not in ("auto", "numba", "numpy"):
        raise BadConfig(
            f"unknown backend {requested!r}; expected auto, numba, or numpy"
        )
    if requested in _modules:
        return _modules[requested]
    if requested == "numpy":
        from . import kernels_numpy as mod
    elif requested == "numba":
        from . import kernels_numba as mod
    else:
        try:
            from . import kernels_numba as mod
        except ImportError:  # pragma: no cover - depends on environment
            log.info("numba unavailable, falling back to numpy kernels")
            from . import kernels_numpy as mod
    _modules[requested] = mod
    return mod


def active_backend_name(name: str | None = None) -> str:
    return get_backend(name).NAME


@dataclass(frozen=True)
class Executor:
    """Worker-count and backend policy for data-parallel evaluations.

    Results are identical for any worker count; only wall time changes.
    """

    workers: int = 1
    backend: str | None = None

    def __post_init__(self):
        if self.workers < 1:
            raise BadConfig(f"worker count must be >= 1, got {self.workers}")

    @property
    def module(self):
        return get_backend(self.backend)

    def measure_ncc(
        self,
        target: Volume3,
        source: Volume3,
        mats: np.ndarray,
        overlap_only: bool = False,
    ):
        """Squared NCC of the target against the source pulled through each
        4x4 transform in mats; returns (ncc, degenerate) arrays."""
        mats = np.asarray(mats, dtype=np.float64)
        if mats.ndim == 2:
            mats = mats[np.newaxis]
        count = mats.shape[0]
        a_batch = np.empty((count, 3, 3), dtype=np.float64)
        b_batch = np.empty((count, 3), dtype=np.float64)
        for idx in range(count):
            a_batch[idx], b_batch[idx] = index_affine(mats[idx], source, target)
        mod = self.module
        if mod.NAME == "numba":
            import numba

            if self.workers > numba.config.NUMBA_NUM_THREADS:
                log.warning(
                    "requested %d workers but numba was initialized with %d "
                    "threads; clamping (set NUMBA_NUM_THREADS before launch)",
                    self.workers,
                    numba.config.NUMBA_NUM_THREADS,
                )
        return mod.ncc_measure_batch(
            target.data, source.data, a_batch, b_batch, overlap_only, self.workers
        )
