"""Multi-frame image super-resolution toolkit.

Reconstructs a high-resolution image from N sub-pixel-shifted low-resolution
observations via block-matching registration, stacked-dictionary sparse
coding, and back-projection; includes a synthetic degradation generator and
a PSNR evaluation harness.
"""

from ._accel import backend_name
from .core import (
    DegradationModel,
    Dictionary,
    Displacement,
    Image,
    LinearOperator,
    Patch,
    apply_operator,
    compose,
    dictionary_from_matrix,
    image_from_array,
)
from .degrade import WarpSpec, gaussian_kernel, generate_observations
from .imageio import read_dictionary, read_image, write_dictionary, write_image
from .solver import SparseCode, coordinate_descent, lars_lasso

__version__ = "0.1.0"
