"""Baseband-equivalent synthesis of impaired I/Q frames."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .constellation import ModulationScheme, constellation
from .pulse import pulse_train, symbol_range

SNR_GRID_DB: tuple[int, ...] = (0, 10, 20, 30, 40)

SAMPLING_RATIO_RANGE = (0.3, 0.5)
DELAY_RANGE = (0.0, 1.0)
ROLLOFF_RANGE = (0.1, 0.5)
FREQ_OFFSET_RANGE = (1e-6, 5e-1)


@dataclass(frozen=True)
class ImpairmentParams:
    """Channel and demodulator impairments applied to one example.

    ``sampling_ratio`` is T_sample/T_symbol, ``delay`` a fraction of one
    symbol period, ``freq_offset`` in cycles per sample (0 = disabled).
    """

    sampling_ratio: float
    phase: float
    delay: float
    rolloff: float
    snr_db: float
    freq_offset: float = 0.0

    def validate(self) -> None:
        lo, hi = SAMPLING_RATIO_RANGE
        if not lo <= self.sampling_ratio <= hi:
            raise ValueError(f"sampling_ratio {self.sampling_ratio} outside [{lo}, {hi}]")
        # closed at 2*pi: the rotation is periodic, so 2*pi is harmless
        if not 0.0 <= self.phase <= 2.0 * math.pi:
            raise ValueError(f"phase {self.phase} outside [0, 2pi]")
        if not DELAY_RANGE[0] <= self.delay <= DELAY_RANGE[1]:
            raise ValueError(f"delay {self.delay} outside [0, 1]")
        lo, hi = ROLLOFF_RANGE
        if not lo <= self.rolloff <= hi:
            raise ValueError(f"rolloff {self.rolloff} outside [{lo}, {hi}]")
        if self.snr_db not in SNR_GRID_DB:
            raise ValueError(f"snr_db {self.snr_db} not in {SNR_GRID_DB}")
        mag = abs(self.freq_offset)
        if mag != 0.0 and not FREQ_OFFSET_RANGE[0] <= mag <= FREQ_OFFSET_RANGE[1]:
            raise ValueError(f"|freq_offset| {mag} outside {FREQ_OFFSET_RANGE}")

    def as_tuple(self) -> tuple[float, ...]:
        return astuple(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class IQFrame:
    """Complex baseband frame stored as aligned in-phase and quadrature rows."""

    i: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        if self.i.shape != self.q.shape or self.i.ndim != 1 or self.i.size < 1:
            raise ValueError("I and Q must be non-empty 1-D sequences of equal length")

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "IQFrame":
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))

    @property
    def n_samples(self) -> int:
        return self.i.size

    @property
    def complex(self) -> np.ndarray:
        return self.i + 1j * self.q

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.i**2 + self.q**2)))

    def as_array(self, dtype=np.float32) -> np.ndarray:
        """Samples as a ``(n_samples, 2)`` array, columns I and Q."""
        return np.stack([self.i, self.q], axis=1).astype(dtype)


def example_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-based stream for one example, keyed by ``(master_seed, *key)``.

    Streams for distinct keys are independent and do not depend on the order
    in which they are requested.
    """
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def sample_impairments(rng: np.random.Generator, freq_offset_enabled: bool, snr_db: float) -> ImpairmentParams:
    if snr_db not in SNR_GRID_DB:
        raise ValueError(f"snr_db {snr_db} not in {SNR_GRID_DB}")
    ratio = rng.uniform(*SAMPLING_RATIO_RANGE)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    delay = rng.uniform(*DELAY_RANGE)
    rolloff = rng.uniform(*ROLLOFF_RANGE)
    freq_offset = 0.0
    if freq_offset_enabled:
        sign = 1.0 if rng.integers(0, 2) else -1.0
        u = rng.uniform(math.log10(FREQ_OFFSET_RANGE[0]), math.log10(FREQ_OFFSET_RANGE[1]))
        freq_offset = sign * 10.0**u
    return ImpairmentParams(
        sampling_ratio=float(ratio),
        phase=float(phase),
        delay=float(delay),
        rolloff=float(rolloff),
        snr_db=float(snr_db),
        freq_offset=float(freq_offset),
    )


def draw_symbols(scheme: ModulationScheme, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. symbols drawn uniformly from the constellation of ``scheme``."""
    points = constellation(scheme)
    return points[rng.integers(0, points.size, size=count)]


def synthesize_components(
    scheme: ModulationScheme,
    params: ImpairmentParams,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(signal, noise)`` before normalization.

    Draw order from ``rng``: symbols, then noise (real parts, imaginary parts).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    params.validate()
    first, last = symbol_range(n_samples, params.sampling_ratio, params.delay)
    symbols = draw_symbols(scheme, last - first + 1, rng)
    shaped = pulse_train(symbols, first, n_samples, params.sampling_ratio, params.delay, params.rolloff)

    n = np.arange(n_samples)
    rotation = np.exp(1j * (params.phase + 2.0 * np.pi * params.freq_offset * n))
    signal = shaped * rotation

    noise_power = np.mean(np.abs(signal) ** 2) * 10.0 ** (-params.snr_db / 10.0)
    sigma = np.sqrt(noise_power / 2.0)
    noise = sigma * (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples))
    return signal, noise


def synthesize(
    scheme: ModulationScheme,
    params: ImpairmentParams,
    n_samples: int,
    rng: np.random.Generator,
) -> IQFrame:
    """Synthesize one impaired frame normalized to unit RMS."""
    signal, noise = synthesize_components(scheme, params, n_samples, rng)
    z = signal + noise
    z = z / np.sqrt(np.mean(np.abs(z) ** 2))
    return IQFrame.from_complex(z)
