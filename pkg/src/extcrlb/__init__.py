"""Cramer-Rao bounds for joint delay / Doppler-stretch estimation of wideband extended targets."""

__version__ = "0.1.0"

from .crlb_integral import CrlbResult, FisherBlocks, crlb, crlb_single, fim_oracle_fd, fisher_blocks, oracle_crlb
from .crlb_series import approx_crlb, series_blocks, truncation_decay
from .estimators import estimate, monte_carlo, wbaf
from .scene import NoiseModel, TargetScene, make_scene, n0_for_snr, snr_db, synthesize_echo
from .waveform import EffectiveParams, WaveformSpec, effective_params, moments

__all__ = [
    "CrlbResult", "EffectiveParams", "FisherBlocks", "NoiseModel", "TargetScene", "WaveformSpec",
    "approx_crlb", "crlb", "crlb_single", "effective_params", "estimate", "fim_oracle_fd",
    "fisher_blocks", "make_scene", "moments", "monte_carlo", "n0_for_snr", "oracle_crlb",
    "series_blocks", "snr_db", "synthesize_echo", "truncation_decay", "wbaf",
]
