"""Decentralized soft detection over a sequential cell-free massive MIMO fronthaul."""

from .channel import (
    ChannelEstimate,
    ChannelRealization,
    PilotAssignment,
    SpatialProfile,
    assign_pilots,
    build_profile,
    draw_channel,
    mmse_estimate,
    perfect_csi,
    pilot_phase,
)
from .detect import (
    DetectionResult,
    apriori_llr,
    llr_centralized_oracle,
    llr_exact,
    llr_maxlog,
    llr_simplified,
    map_centralized_oracle,
    map_exact,
    map_simplified,
    stack_model,
)
from .fronthaul import FronthaulReport, centralized_load, saving_report, sequential_load
from .model import (
    ConfigError,
    Constellation,
    ConstellationId,
    CorrelationModel,
    HypothesisCapError,
    HypothesisSet,
    SystemConfig,
    bits_to_symbol_vector,
    build_constellation,
    enumerate_hypotheses,
)
from .statistics import (
    APStatistics,
    HypothesisStatistics,
    conditional_covariance,
    local_update,
    psk_covariance,
    run_chain,
    uplink_receive,
    whiten,
)

__version__ = "0.1.0"
