"""Zero-delay online Wyner-Ziv coding with exponentially weighted scalar codes."""

from .core import (Alphabet, ChannelModel, DistortionMeasure, InputError, expected_symbol_distortion,
                   hamming, log_sum_exp, sample_side_info)
from .experts import (DecoderTable, FixedRateExpert, PartitionEncoder, VariableRateExpert,
                      canonicalize, count_decoders, encoder_from_cuts, validate_partition_matrix)
from .pipeline import (RunMetrics, SessionConfig, best_expert_in_hindsight, run_session)
from .weighting import SchemeParams, WeightState

__all__ = [
    "Alphabet", "ChannelModel", "DistortionMeasure", "InputError", "expected_symbol_distortion",
    "hamming", "log_sum_exp", "sample_side_info", "DecoderTable", "FixedRateExpert",
    "PartitionEncoder", "VariableRateExpert", "canonicalize", "count_decoders",
    "encoder_from_cuts", "validate_partition_matrix", "RunMetrics", "SessionConfig",
    "best_expert_in_hindsight", "run_session", "SchemeParams", "WeightState",
]
