"""Circular-linear density estimation through copulas.

A joint density on the cylinder is written as
``f(theta, x) = c(Psi(theta), F(x)) * psi(theta) * f_X(x)``, with each piece
estimated parametrically or by kernels. Five estimation variants are
provided (``JWP``, ``JWSP``, ``JWNP``, ``CSP``, ``CNP``) together with a
conditional-inversion simulator, a Monte Carlo MISE harness and
preprocessing helpers for real records.
"""
__version__ = "0.1.0"

from ._accel import NUMBA_ENABLED, backend
from .circular import (
    TWO_PI,
    VonMisesParams,
    circular_mean,
    vm_cdf,
    vm_density,
    vm_fit_ml,
    vm_quantile,
    vm_sample,
    wrap_angle,
)
from .copulas import (
    BandwidthMatrix,
    FrankCopula,
    Independence,
    JWLinkCopula,
    KernelCopula,
    QSCopula,
    ReflectedCopula,
    kernel_copula_fit,
    reflected_frank,
    select_copula_bandwidth,
)
from .errors import (
    BandwidthSelectionError,
    CapabilityError,
    CylcopError,
    DataError,
    DomainError,
    FitError,
    IntegrationError,
    StudyAbortedError,
    TiedDataError,
)
from .joint import VARIANTS, CylindricalSample, FitOptions, JointDensityModel, fit_joint, make_example_density
from .linear import NormalParams, boxcox, boxcox_inverse, normal_fit_ml
from .prep import PerturbationSpec, flag_detection_limit, hourly_average, perturb_circular, perturb_linear, robust_sigma
from .simulation import simulate, simulate_copula_pairs
from .smoothing import CircularKde, LinearKde, ckde_fit, lcv_bandwidth, lkde_fit, sheather_jones
from .study import StudyConfig, run_study
