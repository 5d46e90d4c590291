"""Fuzzy-edge telegraph total variation despeckling for grayscale images."""

__version__ = "0.1.0"

from .core import ImageGrid, Kernel2D, VectorField, central_gradient, convolve, gaussian_kernel, reflect_sample
from .errors import (
    ConfigurationError,
    ContractViolation,
    DegenerateInputError,
    DespeckleError,
    DomainError,
    NumericalBlowup,
    ParameterError,
)
from .fuzzy import (
    D_MAX,
    EdgeIndicatorField,
    FuzzyTemplate,
    default_templates,
    edge_indicator,
    fuzzy_divergence,
    ifd_measure,
    to_membership,
)
from .metrics import MetricsReport, line_profile, mssim, psnr, ratio_image, speckle_index
from .noise import NoiseSpec, apply_speckle, gamma_draw
from .phantoms import phantom
from .solvers import (
    RunLog,
    SolverParams,
    SolverState,
    gray_level_indicator,
    run_dong,
    run_proposed,
    run_tdm,
    telegraph_step,
    tv_divergence,
)
