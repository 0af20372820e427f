"""Synthetic impaired-I/Q dataset generation."""

from .channel import (
    SNR_GRID_DB,
    ImpairmentParams,
    IQFrame,
    draw_symbols,
    example_rng,
    sample_impairments,
    synthesize,
    synthesize_components,
)
from .constellation import ALL_SCHEMES, ModulationScheme, constellation
from .dataset import (
    Dataset,
    DatasetFile,
    GenConfig,
    file_sha256,
    generate_dataset,
    manifest_path_for,
    read_dataset,
    write_dataset,
)
from .pulse import PULSE_SPAN, pulse_train, rrc_pulse, symbol_range

__all__ = [
    "ALL_SCHEMES",
    "PULSE_SPAN",
    "SNR_GRID_DB",
    "Dataset",
    "DatasetFile",
    "GenConfig",
    "IQFrame",
    "ImpairmentParams",
    "ModulationScheme",
    "constellation",
    "draw_symbols",
    "example_rng",
    "file_sha256",
    "generate_dataset",
    "manifest_path_for",
    "pulse_train",
    "read_dataset",
    "rrc_pulse",
    "sample_impairments",
    "symbol_range",
    "synthesize",
    "synthesize_components",
    "write_dataset",
]
