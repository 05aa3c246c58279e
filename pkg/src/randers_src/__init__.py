"""Fermat (Randers) metrics of standard stationary spacetimes: geodesics, boundary
convexity, asymptotic decay and two-point connections."""
import os as _os

# cap BLAS threads before numpy loads; the CLI validates the variable itself
_cap = _os.environ.get("RANDERS_SRC_THREADS", "")
if _cap.isdigit() and int(_cap) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _cap)

from .errors import *  # noqa: E402,F401,F403
from .core_metric import (Chart, MetricField, OneFormField, RandersMetric, ScalarField,  # noqa: E402
                          StationarySplitting, eval_randers, fermat_from_stationary, fundamental_tensor,
                          product_randers_beta, reverse_metric)
from .geodesic import (GeodesicTrajectory, SpacetimeTrajectory, integrate_pregeodesic,  # noqa: E402
                       lift_lightlike, lift_timelike)
from .convexity import (ConvexityReport, Hypersurface, check_light_convexity,  # noqa: E402
                        check_randers_convexity, check_time_convexity, lorentz_hessian_oracle)
from .asymptotics import (DecayFit, EndClassification, EndSpec, classify_large_spheres,  # noqa: E402
                          fit_decay, verify_flatness)
from .connector import (ConnectionQuery, ConnectionSolution, discrete_energy_oracle,  # noqa: E402
                        lens_census, min_arrival_lightlike, shoot_connect, timelike_connect)
from .models import ModelSpec, build  # noqa: E402

__version__ = "0.1.0"
