"""Belief-propagation detection for large MIMO-ISI channels with cyclic-prefixed single carrier."""

from .baselines import fd_mmse_equalize, map_oracle, ml_oracle, mmse_equalize, siso_awgn_ber
from .channel import (
    ChannelTaps,
    EffectiveModel,
    FrameParams,
    ParameterError,
    build_effective_matrix,
    build_frequency_blocks,
    generate_channel,
    simulate_frame,
)
from .fg import FgConfig, detect_fg
from .harness import (
    BerRecord,
    DetectorConfig,
    ExperimentSpec,
    calibrate_theta,
    convergence_trace,
    run_ber_experiment,
    sweep_damping,
)
from .modulation import Modulation, UnsupportedAlphabetError
from .mrf import DampingConfig, MrfConfig, compute_potentials, detect_mrf, mrf_iteration
from .qam_search import (
    HybridConfig,
    RtsConfig,
    bit_expand,
    hybrid_detect,
    realify,
    rts_detect,
    selective_hybrid_detect,
)

__version__ = "0.1.0"

__all__ = [
    "BerRecord", "ChannelTaps", "DampingConfig", "DetectorConfig", "EffectiveModel", "ExperimentSpec",
    "FgConfig", "FrameParams", "HybridConfig", "Modulation", "MrfConfig", "ParameterError", "RtsConfig",
    "UnsupportedAlphabetError", "bit_expand", "build_effective_matrix", "build_frequency_blocks",
    "calibrate_theta", "compute_potentials", "convergence_trace", "detect_fg", "detect_mrf",
    "fd_mmse_equalize", "generate_channel", "hybrid_detect", "map_oracle", "ml_oracle", "mmse_equalize",
    "mrf_iteration", "realify", "rts_detect", "run_ber_experiment", "selective_hybrid_detect",
    "simulate_frame", "siso_awgn_ber", "sweep_damping",
]
