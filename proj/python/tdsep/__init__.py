# Copyright 2026 tdsep authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""Multi-channel source separation toolkit.

Thin Python surface over the C++ core: short-time transforms, the
convolutional kernel bank, inter-channel phase features, separation
metrics, shoebox-room impulse responses, checkpoint inference, and the
command-line entry point (``run_cli``).
"""

import sys

from tdsep._core import (
    ConfigError,
    DataError,
    KernelBank,
    NumericError,
    checkpoint_config,
    conv_analysis,
    image_method_rir,
    init_checkpoint,
    ipd_from_kernels,
    ipd_from_spectra,
    istft,
    make_stft_kernels,
    oracle_separate,
    pit_si_snr,
    run_cli,
    separate,
    si_snr,
    si_snr_improvement,
    stft,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "KernelBank",
    "NumericError",
    "checkpoint_config",
    "conv_analysis",
    "image_method_rir",
    "init_checkpoint",
    "ipd_from_kernels",
    "ipd_from_spectra",
    "istft",
    "main",
    "make_stft_kernels",
    "oracle_separate",
    "pit_si_snr",
    "run_cli",
    "separate",
    "si_snr",
    "si_snr_improvement",
    "stft",
]


def main(argv=None):
    """Console entry point mirroring the native ``tdsep`` binary."""
    return run_cli(list(sys.argv[1:] if argv is None else argv))
