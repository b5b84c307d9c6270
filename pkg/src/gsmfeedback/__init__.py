"""Learned pilots, finite-bit CSI feedback and hybrid beamforming for GSM mmWave MIMO links."""

from .beamforming import HybridBeamformer, build_analog, effective_channel, normalize_digital
from .channel import ChannelConfig, generate_dataset, sample_channel, steering_vector
from .config import RunConfig, desk_config, load_config
from .errors import (ConfigurationError, DegenerateBeamformerError, DimensionError,
                     NumericalDomainError)
from .rate import LinkParams, RateReport, achievable_rate, link_from_snr, mi_amp_phase, mi_spatial
from .topology import (ConnectorSet, GsmConfig, count_legal, enumerate_candidates,
                       hamming_distance, legal_connectors, select_legal)

__version__ = "0.1.0"
