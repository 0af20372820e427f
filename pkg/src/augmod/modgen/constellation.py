"""Constellations for the seven linear modulations of the AugMod dataset."""

from __future__ import annotations

import enum
from functools import lru_cache

import numpy as np


class ModulationScheme(enum.Enum):
    """Linear modulation classes, in canonical class-index order."""

    BPSK = 0
    QPSK = 1
    PSK8 = 2
    QAM8 = 3
    QAM16 = 4
    QAM32 = 5
    QAM64 = 6

    @property
    def order(self) -> int:
        return _ORDERS[self]

    @classmethod
    def from_name(cls, name: str) -> "ModulationScheme":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(
                f"unknown modulation {name!r}; expected one of {[s.name for s in cls]}"
            ) from None


_ORDERS = {
    ModulationScheme.BPSK: 2,
    ModulationScheme.QPSK: 4,
    ModulationScheme.PSK8: 8,
    ModulationScheme.QAM8: 8,
    ModulationScheme.QAM16: 16,
    ModulationScheme.QAM32: 32,
    ModulationScheme.QAM64: 64,
}

ALL_SCHEMES: tuple[ModulationScheme, ...] = tuple(ModulationScheme)


def _gray_decode(g: int) -> int:
    n = 0
    while g:
        n ^= g
        g >>= 1
    return n


def _psk(order: int, offset: float) -> np.ndarray:
    # label m sits at ring position gray_decode(m): neighbouring labels differ by one bit
    positions = np.array([_gray_decode(m) for m in range(order)], dtype=float)
    return np.exp(1j * (2.0 * np.pi * positions / order + offset))


def _grid(levels_i: np.ndarray, levels_q: np.ndarray) -> np.ndarray:
    ii, qq = np.meshgrid(levels_i, levels_q, indexing="ij")
    return (ii + 1j * qq).ravel()


def _unit_energy(points: np.ndarray) -> np.ndarray:
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


@lru_cache(maxsize=None)
def _constellation(scheme: ModulationScheme) -> np.ndarray:
    if scheme is ModulationScheme.BPSK:
        pts = np.array([1.0 + 0j, -1.0 + 0j])
    elif scheme is ModulationScheme.QPSK:
        pts = _psk(4, np.pi / 4)
    elif scheme is ModulationScheme.PSK8:
        pts = _psk(8, 0.0)
    elif scheme is ModulationScheme.QAM8:
        pts = _grid(np.array([-3.0, -1.0, 1.0, 3.0]), np.array([-1.0, 1.0]))
    elif scheme is ModulationScheme.QAM16:
        lv = np.array([-3.0, -1.0, 1.0, 3.0])
        pts = _grid(lv, lv)
    elif scheme is ModulationScheme.QAM32:
        lv = np.array([-5.0, -3.0, -1.0, 1.0, 3.0, 5.0])
        full = _grid(lv, lv)
        pts = full[~((np.abs(full.real) == 5.0) & (np.abs(full.imag) == 5.0))]
    elif scheme is ModulationScheme.QAM64:
        lv = np.arange(-7.0, 8.0, 2.0)
        pts = _grid(lv, lv)
    else:  # pragma: no cover
        raise ValueError(scheme)
    pts = _unit_energy(pts.astype(np.complex128))
    pts.setflags(write=False)
    return pts


def constellation(scheme: ModulationScheme) -> np.ndarray:
    """Return the unit-average-energy point set of ``scheme`` (read-only complex array)."""
    return _constellation(ModulationScheme(scheme))
