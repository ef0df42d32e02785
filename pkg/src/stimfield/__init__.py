"""Volume-conductor simulation and activation-volume analysis for
closely spaced stimulation leads."""

__version__ = "0.1.0"

from .activation import (  # noqa: F401
    ActivationField,
    AxonPolicy,
    EvaluationGrid,
    ThresholdTable,
    af_max_field,
    ef_field,
    evaluate_activation,
    threshold_for,
)
from .conductivity import (  # noqa: F401
    TissueTable,
    heterogeneity_box_center,
    isotropic_from_labels,
    isotropic_tensor,
    restrict_heterogeneity_box,
    tensor_from_diffusion,
)
from .geometry import (  # noqa: F401
    ContactAssignment,
    ContactSpec,
    ConductorMap,
    LeadSpec,
    StimulationSetting,
    average_lead_axis,
    lead_3387_like,
    lowest_contact_midpoint,
    voxelize_leads,
)
from .optimizer import (  # noqa: F401
    ContactConfiguration,
    OptimizationSpec,
    UnitSolutionBank,
    brute_force_oracle,
    default_feasible_set,
    minimal_amplitude,
    strategy1_optimize,
    strategy2_enumerate,
)
from .solver import (  # noqa: F401
    DiscreteSystem,
    FieldSolution,
    SolverConfig,
    assemble,
    contact_net_current,
    floating_net_current,
    solve,
    superpose_solutions,
    total_driven_current,
)
from .volume import (  # noqa: F401
    MaskVolume,
    ScalarVolume,
    TensorVolume,
    VoxelGrid,
    load_volume,
    save_volume,
    trilinear_sample,
    trilinear_sample_many,
)
from .vta import (  # noqa: F401
    ComparisonReport,
    CoverageReport,
    TargetSpec,
    VtaMask,
    combined_af_vta,
    combined_ef_vta,
    compare_to_dual,
    coverage,
    superpose_vtas,
    target_from_mask_volume,
    threshold_vta,
)
