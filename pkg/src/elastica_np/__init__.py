"""Boundary-integral toolkit for 2D elastostatic inclusion arrays.

Single-layer representations of high-contrast transmission problems,
their incompressible, soft and rigid limits, and Neumann-Poincare
spectra in the single-layer energy inner product.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    BoundaryMesh,
    ClosedCurve,
    GeometryError,
    InclusionArray,
    build_array,
    make_curve,
    mesh_curve,
    single_inclusion,
    smoothed_square,
)
from .kernels import KernelSpec, LamePair, correction_operator, kelvin, traction  # noqa: E402
from .potentials import (  # noqa: E402
    BoundaryOperator,
    DensityField,
    assemble_K,
    assemble_Kstar,
    assemble_S,
    eval_potential,
    gram_SN,
    project_rigid_orthogonal,
    rigid_basis,
)
from .solvers import (  # noqa: E402
    LoadSpec,
    SolutionBundle,
    error_snorm,
    solve_limit_rigid,
    solve_limit_soft,
    solve_limit_stokes,
    solve_rigid_resultants,
    solve_transmission,
)
from .spectra import SpectralReport, gap_study, np_spectrum, unit_cell_constants  # noqa: E402
