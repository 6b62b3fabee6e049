"""Sampling of Besov functions on discretized spaces of homogeneous type."""

import os as _os

# BLAS reads these once at import; honour the thread cap before numpy loads
if "HOMSAMP_THREADS" in _os.environ:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["HOMSAMP_THREADS"])

from .axioms import estimate_quasi_triangle, verify_ball_power, verify_space  # noqa: E402
from .besov import BesovParams, besov_norm, level_terms  # noqa: E402
from .dyadic import DyadicSystem, build_dyadic_system, locate, verify_dyadic  # noqa: E402
from .sampling import (  # noqa: E402
    SamplingPlan,
    SamplingReport,
    calibrate_kappa,
    discrete_norm,
    proof_diagnostics,
    required_level,
    sample_operator,
    sampling_error,
    verify_sampling_theorem,
)
from .space import (  # noqa: E402
    PointCloudSpace,
    SpaceParams,
    VerificationReport,
    ball_power_integral,
    discretize,
    lp_norm,
)
from .wavelets import CoefficientTable, WaveletFrame, analyze, build_frame, synthesize, verify_frame  # noqa: E402

__all__ = [
    "BesovParams", "CoefficientTable", "DyadicSystem", "PointCloudSpace", "SamplingPlan",
    "SamplingReport", "SpaceParams", "VerificationReport", "WaveletFrame", "analyze",
    "ball_power_integral", "besov_norm", "build_dyadic_system", "build_frame", "calibrate_kappa",
    "discrete_norm", "discretize", "estimate_quasi_triangle", "level_terms", "locate",
    "lp_norm", "proof_diagnostics", "required_level", "sample_operator", "sampling_error",
    "synthesize", "verify_ball_power", "verify_dyadic", "verify_frame",
    "verify_sampling_theorem", "verify_space",
]
