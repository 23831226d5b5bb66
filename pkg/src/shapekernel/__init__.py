"""Kernel regression with hard shape constraints enforced on whole regions.

The package estimates functions in (vector-valued) reproducing-kernel
Hilbert spaces subject to affine matrix inequalities on derivatives over
compact boxes — nonnegativity, monotonicity, convexity, state bounds — and
enforces them *everywhere* on the region, not just at sample points, by
buffering finitely many anchor constraints with covering-based margins.

Layers, bottom to top:

``kernels``   closed-form kernels and their mixed partial derivatives
``atoms``     functionals, RKHS atoms, Gram machinery, models
``covering``  input/feature-space coverings and buffer widths
``conic``     embedded interior-point cone solver
``tighten``   shape constraints to conic row records
``assemble``  representer reduction, solving, certificates
``soap``      adaptive covering refinement
``bench``     experiment harness and CLI
"""

from .atoms import (
    Atom,
    DiffFunctional,
    Model,
    SdpOperator,
    apply_functional,
    atom_inner,
    cross_gram,
    eval_model,
    functional_row,
    gram,
    model_distance,
)
from .assemble import (
    BoundReport,
    Equality,
    NormBound,
    NormMin,
    Observation,
    ProblemSpec,
    Ridge,
    assemble,
    collect_atoms,
    compute_bounds,
    recover_model,
    relax_records,
    solve_problem,
    solve_reference,
)
from .conic import (
    ConeBlock,
    ConeProgram,
    Solution,
    SolverSettings,
    kkt_residuals,
    solve,
)
from .covering import (
    InputBall,
    OmegaElement,
    cover_box,
    covering_to_csv,
    eta_eigen_bound,
    eta_for,
    eta_radial,
    eta_sampled,
    fill_distance,
    grid_cover,
    omega_cover,
    operator_cross_matrix,
    refine_radius,
)
from .kernels import (
    DecomposableGaussianKernel,
    GaussianKernel,
    Kernel,
    LaplacianKernel,
    LTIControlKernel,
    kernel_from_config,
    lti_eval,
)
from .soap import (
    SoapInfeasible,
    SoapState,
    detect_saturated,
    record_slack,
    run_soap,
)
from .tighten import (
    InclusionRecord,
    LinearRecord,
    Rsoc2x2Record,
    ShapeConstraint,
    SocBufferRecord,
    discretize,
    tighten_omega,
    tighten_soc,
    verify_pointwise,
)

__version__ = "0.1.0"
