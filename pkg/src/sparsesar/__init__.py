"""Sparse stripmap SAR simulation, nonuniform chirp-scaling operators and
joint sampling-pattern / unrolled-network reconstruction."""

from .sar import (
    SPEED_OF_LIGHT,
    EchoMatrix,
    PointTarget,
    ReflectivityMap,
    SarParams,
    build_measurement_matrix,
    echo_from_image,
    point_target_echo,
    scene_echo,
    slant_range,
)
from .sampling import (
    SamplingPattern,
    interval_histogram,
    poisson_disk_pattern,
    project_constraints,
    staggered_pattern,
    uniform_pattern,
)
from .operators import (
    CsaFilters,
    CsaOperator,
    NuftPlan,
    csa_image,
    csa_inverse,
    make_csa_filters,
    normal_apply,
    nuft_forward,
    nuift_inverse,
)
from .metrics import psnr, ssim

__version__ = "0.1.0"
