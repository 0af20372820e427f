"""Root-raised-cosine pulse and fractional-rate pulse-train evaluation."""

from __future__ import annotations

import numpy as np

#: one-sided truncation of the pulse, in symbol periods
PULSE_SPAN = 8

_SINGULAR_TOL = 1e-9


def rrc_pulse(t, beta: float):
    """Root-raised-cosine impulse response at time ``t`` (symbol period = 1).

    Unit-energy continuous-time pulse. The removable singularities at
    ``t = 0`` and ``|t| = 1/(4 beta)`` are replaced by their limits.
    Accepts scalars or arrays; returns the same shape.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"roll-off must lie in (0, 1), got {beta}")
    t_arr = np.asarray(t, dtype=np.float64)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)

    at_zero = np.abs(t_arr) < _SINGULAR_TOL
    edge = 1.0 / (4.0 * beta)
    at_edge = np.abs(np.abs(t_arr) - edge) < _SINGULAR_TOL
    regular = ~(at_zero | at_edge)

    out = np.empty_like(t_arr)
    tr = t_arr[regular]
    num = np.sin(np.pi * tr * (1.0 - beta)) + 4.0 * beta * tr * np.cos(np.pi * tr * (1.0 + beta))
    den = np.pi * tr * (1.0 - (4.0 * beta * tr) ** 2)
    out[regular] = num / den
    out[at_zero] = 1.0 + beta * (4.0 / np.pi - 1.0)
    out[at_edge] = (beta / np.sqrt(2.0)) * (
        (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * beta))
        + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * beta))
    )
    return float(out[0]) if scalar else out


def symbol_range(n_samples: int, sampling_ratio: float, delay: float, span: int = PULSE_SPAN) -> tuple[int, int]:
    """Inclusive range of symbol indices whose truncated pulse reaches any output sample."""
    first = int(np.floor(-delay - span))
    last = int(np.ceil((n_samples - 1) * sampling_ratio - delay + span))
    return first, last


def pulse_train(
    symbols: np.ndarray,
    first_index: int,
    n_samples: int,
    sampling_ratio: float,
    delay: float,
    rolloff: float,
    span: int = PULSE_SPAN,
) -> np.ndarray:
    """Evaluate ``s[n] = sum_k a_k g(n r - k - delay)`` for ``n = 0..n_samples-1``.

    ``symbols[j]`` is the symbol with index ``k = first_index + j``; symbols
    outside the array count as zero. The pulse is evaluated directly at the
    fractional instants, truncated to ``|t| <= span``.
    """
    symbols = np.asarray(symbols)
    t = np.arange(n_samples, dtype=np.float64) * sampling_ratio - delay
    base = np.floor(t).astype(np.int64) - span
    # 2*span + 2 candidate symbols cover every k with |t - k| <= span
    k = base[:, None] + np.arange(2 * span + 2)[None, :]
    arg = t[:, None] - k
    g = rrc_pulse(arg, rolloff)
    j = k - first_index
    valid = (np.abs(arg) <= span) & (j >= 0) & (j < symbols.size)
    a = symbols[np.clip(j, 0, max(symbols.size - 1, 0))] if symbols.size else np.zeros(j.shape)
    return np.sum(np.where(valid, g * a, 0.0), axis=1)
