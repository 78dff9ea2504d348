"""cvbell: a simulation laboratory for Bell-type tests built from
continuous-variable quadrature measurements.

The package contrasts two accounts of the same two-station experiment:
the quantum measurement model (exact Gaussian sampling plus ideal
photon counting on the detector vacuum ports) and a positive-Wigner
local-hidden-variable model that reproduces every quadrature statistic
but fails the auxiliary vacuum-intensity measurement and cannot keep
its individual count rates nonnegative.
"""

__version__ = "0.1.0"

from .fock import (
    FockOperator,
    ModeId,
    MultiModeSpace,
    StateVector,
    TruncationError,
    basis_state,
    build_space,
    count_rate_identity_deviation,
    count_rate_operator,
    expectation,
    mode_operator,
    paired_squeezed_vector,
    quadrature_product_expectation,
    two_mode_squeezed_vector,
)
from .gaussian import (
    GaussianState,
    QuadratureRequest,
    analytic_moment,
    joint_quadrature_sample,
    photon_number_pmf,
    photon_number_sample,
    polarization_rotation,
    two_mode_squeeze,
    vacuum_state,
)
from .lhv import (
    PhaseSpacePoint,
    cnumber_count_rate,
    cnumber_intensity,
    response_quadrature,
    rotated_station_point,
    sample_phase_space,
    sample_phase_space_batch,
)
from .protocol import (
    ConfigError,
    ExperimentConfig,
    MeasurementSetting,
    Model,
    OutputPort,
    RecordSet,
    RecordsError,
    Schedule,
    SettingKind,
    Station,
    TrialRecord,
    blocked_station_state,
    build_schedule,
    load_records,
    prepare_state,
    run_experiment,
    save_records,
)
from .analysis import (
    AnalysisError,
    BellReport,
    CorrelationEstimate,
    CountRateEstimate,
    StarvedSubensembleError,
    build_bell_report,
    chsh,
    estimate_correlation,
    estimate_count_rate,
    oracle_chsh,
    oracle_correlation,
    positivity_audit,
    vacuum_check,
)
