"""echoreg: particle-filter rigid registration of 3D/4D ultrasound volumes.

The measurement model is the squared normalized cross-correlation; volumes
are resampled trilinearly under 6-DOF rigid transforms.  Hot loops run on
numba-compiled kernels with a pure-numpy fallback (ECHOREG_BACKEND=numpy).
"""

from .backend import Executor, active_backend_name, get_backend
from .exhaustive import GridSpec, register_exhaustive
from .geometry import RigidParams, compose, inverse, resample, to_matrix, trilinear_sample
from .io import read_volume, write_volume
from .metrics import MetricValue, dice, dice_under_transform, ncc
from .phantom import PhantomSpec, RegistrationCase, load_case, make_pair, make_phantom, save_case
from .pipeline import RegistrationReport, percentile_summary, register_sequence
from .smc import ParticleSet, SmcConfig, SmcTrace, register_smc
from .volume import Sequence4, Volume3, binarize, normalize_zscore

__version__ = "0.1.0"

__all__ = [
    "Executor",
    "GridSpec",
    "MetricValue",
    "ParticleSet",
    "PhantomSpec",
    "RegistrationCase",
    "RegistrationReport",
    "RigidParams",
    "Sequence4",
    "SmcConfig",
    "SmcTrace",
    "Volume3",
    "active_backend_name",
    "binarize",
    "compose",
    "dice",
    "dice_under_transform",
    "get_backend",
    "inverse",
    "load_case",
    "make_pair",
    "make_phantom",
    "ncc",
    "normalize_zscore",
    "percentile_summary",
    "read_volume",
    "register_exhaustive",
    "register_sequence",
    "register_smc",
    "resample",
    "save_case",
    "to_matrix",
    "trilinear_sample",
    "write_volume",
]
