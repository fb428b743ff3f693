"""Numerical lab for exchange-driven growth kinetics."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    EDGError,
    GridMismatch,
    IndexOutOfRange,
    InsufficientSampling,
    InvalidKernel,
    InvalidParameter,
    NonFiniteRHS,
    NormalizationExceeded,
    RateOverflow,
    WrongRegime,
)
from .kernel import (  # noqa: F401
    Kernel,
    RegimeLabel,
    callback_kernel,
    check_symmetry,
    classify,
    constant_kernel,
    make_biased,
    power_kernel,
    product_kernel,
    sum_kernel,
)
from .state import ClusterState, InitialSpec, init_distribution, moment, tail_weighted_sum  # noqa: F401
from .rhs import flux, moment_rate, rhs, rhs_direct, rhs_separable  # noqa: F401
from .integrator import SolverConfig, Trajectory, integrate, step  # noqa: F401
