"""Vacuum-fluctuation QRNG toolkit.

Simulation of a direct-detection vacuum-noise source, parameter
characterization, conditional min-entropy budgeting and streaming
Toeplitz randomness extraction.
"""

from .entropy import (
    AdcGeometry,
    AdcEntropy,
    EntropyReport,
    EpsilonBudget,
    ModelParams,
    build_report,
    extractable_length,
    min_entropy_adc,
    min_entropy_gaussian_p,
    min_entropy_ideal,
)
from .simulate import (
    AdcModel,
    DetectorResponse,
    NoiseSpec,
    SampleBlock,
    generate_stream,
    quantize,
    read_block,
    write_block,
)
from .characterize import (
    CalibrationRecord,
    DigitizationErrorModel,
    SpectralDensity,
    gain_bandwidth_estimate,
    in_range_bound,
    psd_welch,
    quantum_efficiency,
    shot_noise_linearity,
    vacuum_psd,
)
from .extractor import (
    ExtractorConfig,
    RandomOutput,
    ToeplitzSeed,
    ToeplitzStreamHasher,
    extract_blocks,
    toeplitz_hash_naive,
    toeplitz_hash_stream,
)

__version__ = "0.1.0"
