"""High-dimensional QKD toolkit built on mutually unbiased bases.

The package covers the full chain of the filter-based protocol: basis
construction, two-qudit state probabilities, the photon-pair source and
detector model, Monte Carlo session simulation with sifting and parameter
estimation, and the security analysis down to the asymptotic key rate.
"""

from .bases import (
    Basis,
    Ket,
    MubSet,
    UnbiasednessReport,
    eigenbasis_xzl,
    load_bases,
    mub_set,
    save_bases,
    standard_basis,
    unbiasedness_report,
    weyl_x,
    weyl_z,
)
from .counts import CountMatrix, load_counts, normalize_blocks, save_counts
from .errors import (
    ConfigError,
    ConstructionError,
    CountDataError,
    DimensionError,
    MubQkdError,
    NumericError,
    ParseError,
)
from .photonics import (
    CountRecord,
    EfficiencyTable,
    PairRouting,
    SourceParams,
    UniformityReport,
    click_prob_n,
    efficiency_uniformity,
    estimate_efficiency,
    expected_coincidences,
    expected_singles,
    load_efficiency_table,
    pair_routing_probs,
    save_efficiency_table,
    synthesize_conjugate_records,
)
from .protocol import (
    ParameterEstimate,
    ProtocolConfig,
    SessionRecord,
    SiftedData,
    default_basis_bias,
    estimate_parameters,
    expected_count_matrix,
    run_eb_session,
    run_pm_session,
    sample_setting,
    sift,
)
from .security import (
    Distribution,
    SecurityReport,
    analyze_counts,
    average_qber,
    empirical_qber,
    holevo_gap,
    isotropic_joint_distribution,
    joint_distribution_from_counts,
    key_rate,
    keymap_information,
    mutual_information,
    q_max,
    qber_per_basis,
    shannon_entropy,
)
from .states import (
    DensityOperator,
    JointProbMatrix,
    conjugate_ket,
    isotropic_state,
    joint_prob,
    joint_prob_matrix,
    maximally_entangled,
    partial_trace,
    pm_overlap_prob,
    visibility_for_qber,
)

__version__ = "0.1.0"
