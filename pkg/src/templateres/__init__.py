"""Template resolution analysis for groupwise image registration.

The package registers a stack of images against a jointly estimated
template, then quantifies how reliable the template is at each pixel: the
local resolution is the smallest Gaussian bandwidth at which the
registered images agree there, measured by a cross-stack quantile range.
Results can be exported as raw fields, heatmaps and gradient-aligned bar
overlays.
"""

__version__ = "0.1.0"

from .errors import (
    FormatError,
    InvalidInputError,
    InvalidTransformError,
    TemplateResError,
)
from .grid import (
    ImageGrid,
    ImageStack,
    pixelwise_quantile_range,
    quantile_pair,
    sample_linear,
    sample_linear_many,
)
from .smoothing import gaussian_derivative, gaussian_kernel_1d, gaussian_smooth
from .model import (
    EdgeSampleSpec,
    edge_max_diff,
    point_mass_max_diff_approx,
    point_mass_max_diff_exact,
    sample_edge_shifts,
    sample_edges,
    smoothed_edge_value_at_zero,
    std_normal_cdf,
)
from .registration import (
    RegistrationConfig,
    RegistrationResult,
    StepSchedule,
    Transform,
    groupwise_register,
    regularizer,
    similarity,
    warp,
)
from .resolution import (
    ResolutionConfig,
    ResolutionField,
    default_sigma_cap,
    resolution_measure,
    threshold_value,
)
from .viz import (
    Bar,
    BarOverlay,
    SliceSpec,
    build_overlay,
    render_heatmap,
    render_overlay_svg,
    template_gradient,
)

__all__ = [
    "__version__",
    "TemplateResError",
    "InvalidInputError",
    "InvalidTransformError",
    "FormatError",
    "ImageGrid",
    "ImageStack",
    "sample_linear",
    "sample_linear_many",
    "quantile_pair",
    "pixelwise_quantile_range",
    "gaussian_kernel_1d",
    "gaussian_smooth",
    "gaussian_derivative",
    "EdgeSampleSpec",
    "std_normal_cdf",
    "edge_max_diff",
    "point_mass_max_diff_approx",
    "point_mass_max_diff_exact",
    "sample_edges",
    "sample_edge_shifts",
    "smoothed_edge_value_at_zero",
    "Transform",
    "StepSchedule",
    "RegistrationConfig",
    "RegistrationResult",
    "warp",
    "similarity",
    "regularizer",
    "groupwise_register",
    "ResolutionConfig",
    "ResolutionField",
    "resolution_measure",
    "threshold_value",
    "default_sigma_cap",
    "SliceSpec",
    "Bar",
    "BarOverlay",
    "template_gradient",
    "build_overlay",
    "render_overlay_svg",
    "render_heatmap",
]
