"""Theory curves: min-entropy versus efficiency and versus excess noise."""

from __future__ import annotations

import csv
import math
from typing import Sequence

import numpy as np

from .entropy import AdcGeometry, min_entropy_gaussian_p

__all__ = [
    "optimal_gain_entropy",
    "entropy_vs_efficiency",
    "entropy_vs_excess_noise",
    "write_curves_csv",
]


def _excess_db_to_variance(excess_db: float) -> float:
    """Total detected noise variance in vacuum units from dB above vacuum."""
    return 10.0 ** (excess_db / 10.0)


def optimal_gain_entropy(eta: float, adc: AdcGeometry, noise_variance_w: float):
    """Maximize the Gaussian-P bound over the gain; returns (g_opt, bits).

    The range term grows like +log2(g) and the in-range term shrinks like
    -log2(g), so the bound increases monotonically towards its large-gain
    plateau log2(d * sqrt((1-eta)/w)). The supremum is returned (clamped
    at zero), together with a gain that attains it to within 1e-6 bits.
    """
    if not 0.0 < eta < 1.0 or noise_variance_w <= 0:
        raise ValueError("need eta in (0, 1) and noise variance > 0")
    plateau = math.log2(adc.bins_d * math.sqrt((1.0 - eta) / noise_variance_w))
    target = max(0.0, plateau)
    g = adc.range_R / math.sqrt(noise_variance_w)  # 1 sigma spans the range
    while min_entropy_gaussian_p(eta, g, adc, noise_variance_w) < target - 1e-6:
        g *= 4.0
        if g > 1e30:
            break
    return g, target


def entropy_vs_efficiency(
    eta_grid: Sequence[float],
    adc_bits: Sequence[int] = (8, 12, 16),
    excess_db: float = 5.0,
) -> dict[int, np.ndarray]:
    """Min-entropy at the unconstrained-optimal gain, per ADC depth.

    Detected noise is Gaussian at ``excess_db`` above the vacuum level.
    """
    w = _excess_db_to_variance(excess_db)
    curves = {}
    for bits in adc_bits:
        adc = AdcGeometry.from_bits(bits)
        curves[bits] = np.array(
            [optimal_gain_entropy(eta, adc, w)[1] for eta in eta_grid]
        )
    return curves


def entropy_vs_excess_noise(
    excess_db_grid: Sequence[float],
    eta: float = 0.8,
    adc_bits: int = 16,
    sigmas_in_range: float = 6.0,
) -> np.ndarray:
    """Min-entropy with the gain tied to the ADC range.

    The gain is chosen so ``sigmas_in_range`` standard deviations of the
    detected signal fit into the range: g = R / (6 * sqrt(w)).
    """
    adc = AdcGeometry.from_bits(adc_bits)
    out = []
    for db in excess_db_grid:
        w = _excess_db_to_variance(db)
        g = adc.range_R / (sigmas_in_range * math.sqrt(w))
        out.append(min_entropy_gaussian_p(eta, g, adc, w))
    return np.array(out)


def write_curves_csv(path, x_name: str, x_values, columns: dict) -> None:
    """Write one x column plus named curve columns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([x_name] + list(columns))
        for i, x in enumerate(x_values):
            writer.writerow([repr(float(x))] + [repr(float(v[i])) for v in columns.values()])
