"""Sound-soft Helmholtz scattering by a perturbed half-space.

Boundary integral solver on a complexified, truncated contour discretized
with 16-point Gauss-Legendre panels and locally corrected quadrature.

Setting HALFSPACE_BIE_THREADS=n before import limits the BLAS thread pools.
"""

import os as _os

_threads = _os.environ.get("HALFSPACE_BIE_THREADS")
if _threads:
    for _name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ[_name] = _threads

__version__ = "0.1.0"

from .contour import ContourSpec, DiscretizedContour, discretize, discretize_adaptive, gamma_eval, preset  # noqa: E402
from .errors import (  # noqa: E402
    BranchCutError,
    CoincidentPointError,
    ConfigError,
    HalfspaceError,
    QuadratureError,
    ResolutionError,
    SolverError,
)
from .fieldeval import eval_dlp, scattered_field, total_field  # noqa: E402
from .kernels import IncidentField, incident_eval, kernel_g  # noqa: E402
from .solver import assemble, boundary_rhs, solve  # noqa: E402
from .specfun import erfc, hankel1  # noqa: E402

__all__ = [
    "BranchCutError", "CoincidentPointError", "ConfigError", "ContourSpec", "DiscretizedContour",
    "HalfspaceError", "IncidentField", "QuadratureError", "ResolutionError", "SolverError",
    "assemble", "boundary_rhs", "discretize", "discretize_adaptive", "erfc", "eval_dlp",
    "gamma_eval", "hankel1", "incident_eval", "kernel_g", "preset", "scattered_field", "solve",
    "total_field",
]
