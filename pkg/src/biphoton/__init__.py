"""Simulation and analysis toolkit for a four-wave-mixing heralded single-photon source."""

from .phasematch import (OpticalGeometry, PhaseMatchResult, delta_k_exact, delta_k_small_angle, ghz,
                         idler_angle, optimal_signal_angle, phase_match_factor, scan_phase_matching)
from .temporal import (TemporalMode, energy_fraction, hom_coincidence_probability, mode_overlap,
                       sample_delay)
from .tagstream import TagStream, merge_sorted, read_stream, write_stream
from .sim import (ChannelMap, SourceConfig, simulate_hom_experiment, simulate_heralded_autocorr,
                  simulate_pairs)
from .correlate import (CorrelationHistogram, HeraldWindow, g2_cross, g2_peak, heralded_g2c,
                        heralding_efficiency, hom_counts, hom_profile,
                        hom_visibility)

__version__ = "0.1.0"
