"""Conditional min-entropy bounds and extractable-length budgeting.

All entropies are in bits (log base 2). Gain parameters are expressed in
ADC-bin units unless stated otherwise, in which case ``range_R / bins_d``
equals 1/2 exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

__all__ = [
    "AdcGeometry",
    "ModelParams",
    "EpsilonBudget",
    "AdcEntropy",
    "EntropyReport",
    "min_entropy_ideal",
    "min_entropy_adc",
    "min_entropy_gaussian_p",
    "extractable_length",
    "build_report",
]

# erf argument beyond which the first term of the ADC bound is numerically
# zero and the certified entropy is exhausted (erf(6) = 1 - 2e-17).
_ERF_EXHAUSTED_ARG = 6.0


class DomainError(ValueError):
    """A model parameter is outside its allowed domain."""


@dataclass(frozen=True)
class AdcGeometry:
    """ADC range and bin count.

    ``range_R`` is half the full-scale span: codes cover (-R, R) in
    ``bins_d`` equal bins of width 2R/d.
    """

    range_R: float
    bins_d: int

    def __post_init__(self):
        if self.range_R <= 0:
            raise DomainError(f"range_R must be > 0, got {self.range_R}")
        if self.bins_d < 2:
            raise DomainError(f"bins_d must be >= 2, got {self.bins_d}")

    @classmethod
    def from_bits(cls, bits: int) -> "AdcGeometry":
        """Geometry of an ideal ``bits``-deep ADC in bin units (R/d = 1/2)."""
        d = 1 << bits
        return cls(range_R=d / 2.0, bins_d=d)

    @property
    def bits(self) -> int:
        return int(round(math.log2(self.bins_d)))

    @property
    def bin_width(self) -> float:
        return 2.0 * self.range_R / self.bins_d


@dataclass(frozen=True)
class ModelParams:
    """Certified stochastic-model parameters feeding the entropy budget."""

    eta: float
    g_chi0: float
    adc: AdcGeometry
    log2_P: float = 0.0
    b_adc: float = 0.0

    def __post_init__(self):
        _check_eta_gain(self.eta, self.g_chi0)
        if self.log2_P > 0:
            raise DomainError(f"log2_P must be <= 0, got {self.log2_P}")
        if self.b_adc < 0:
            raise DomainError(f"b_adc must be >= 0, got {self.b_adc}")


@dataclass(frozen=True)
class EpsilonBudget:
    """Failure probabilities for parameter estimation, ADC audit and hashing."""

    eps_param: float = 1e-10
    eps_adc: float = 6e-5
    eps_hash: float = 1e-17

    def __post_init__(self):
        for name in ("eps_param", "eps_adc", "eps_hash"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name} must be in (0, 1), got {v}")


def _check_eta_gain(eta: float, g_chi0: float) -> None:
    if not 0.0 < eta < 1.0:
        raise DomainError(f"eta must be in (0, 1), got {eta}")
    if g_chi0 <= 0:
        raise DomainError(f"g_chi0 must be > 0, got {g_chi0}")


def min_entropy_ideal(eta: float, g_chi0: float) -> float:
    """Min-entropy bound for an ideal continuous measurement, in bits.

    Returns -log2(1 / (2*pi*g_chi0*sqrt(1-eta))). Not clamped: may be
    negative for very small gains.
    """
    _check_eta_gain(eta, g_chi0)
    return math.log2(2.0 * math.pi * g_chi0 * math.sqrt(1.0 - eta))


@dataclass(frozen=True)
class AdcEntropy:
    """Result of the finite-ADC min-entropy bound.

    ``bits`` is clamped at zero; ``unclamped_bits`` keeps the raw value.
    ``exhausted`` is set when the erf argument exceeds 6, i.e. the first
    term is numerically zero and the bound degenerates to log2_P - b_adc.
    """

    bits: float
    unclamped_bits: float
    exhausted: bool


def min_entropy_adc(params: ModelParams) -> AdcEntropy:
    """Min-entropy bound per sample for a finite, imperfect ADC, in bits.

    Computes -log2 erf(R / (g_chi0 * d * sqrt(2(1-eta)))) + log2_P - b_adc,
    clamped below at zero.
    """
    arg = params.adc.range_R / (
        params.g_chi0 * params.adc.bins_d * math.sqrt(2.0 * (1.0 - params.eta))
    )
    raw = -math.log2(math.erf(arg)) + params.log2_P - params.b_adc
    return AdcEntropy(
        bits=max(0.0, raw),
        unclamped_bits=raw,
        exhausted=arg > _ERF_EXHAUSTED_ARG,
    )


def min_entropy_gaussian_p(
    eta: float, g: float, adc: AdcGeometry, noise_variance_w: float
) -> float:
    """ADC bound with the in-range probability of a Gaussian detected signal.

    For a detected mode with total variance ``noise_variance_w`` (vacuum
    units) the in-range probability is erf(R / (g*sqrt(2w))), giving

        -log2 erf(R/(g*d*sqrt(2(1-eta)))) + log2 erf(R/(g*sqrt(2w)))

    Used for theory curves, not for certification.
    """
    _check_eta_gain(eta, g)
    if noise_variance_w <= 0:
        raise DomainError(f"noise_variance_w must be > 0, got {noise_variance_w}")
    first = -math.log2(
        math.erf(adc.range_R / (g * adc.bins_d * math.sqrt(2.0 * (1.0 - eta))))
    )
    second = math.log2(math.erf(adc.range_R / (g * math.sqrt(2.0 * noise_variance_w))))
    return first + second


def extractable_length(
    l_bits: int, hmin_per_sample_bits: float, bits_per_sample: int, eps_hash: float
) -> int:
    """Number of extractable bits per l-bit block via the leftover hash lemma.

    floor(n_samples * hmin_per_sample - log2(1/(2 eps_hash^2))), clamped
    at zero. A zero return means the block is too short to extract from.
    """
    if l_bits <= 0 or l_bits % bits_per_sample != 0:
        raise DomainError(
            f"l_bits ({l_bits}) must be a positive multiple of bits_per_sample "
            f"({bits_per_sample})"
        )
    if not 0.0 < eps_hash < 1.0:
        raise DomainError(f"eps_hash must be in (0, 1), got {eps_hash}")
    if hmin_per_sample_bits < 0:
        raise DomainError(f"hmin_per_sample_bits must be >= 0, got {hmin_per_sample_bits}")
    n_samples = l_bits // bits_per_sample
    k = math.floor(n_samples * hmin_per_sample_bits - math.log2(1.0 / (2.0 * eps_hash**2)))
    return max(0, k)


@dataclass(frozen=True)
class EntropyReport:
    """Complete entropy budget for one parameter set and block geometry.

    Serialized with fixed field names so the CLI and the extractor gating
    agree on the wire format.
    """

    eta: float
    g_chi0: float
    range_R: float
    bins_d: int
    log2_P: float
    b_adc: float
    hmin_ideal: float
    hmin_adc: float
    hmin_final: float
    k: int
    l: int
    eps_param: float
    eps_adc: float
    eps_hash: float

    def to_json(self, **kwargs) -> str:
        return json.dumps(asdict(self), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "EntropyReport":
        return cls(**json.loads(text))


def build_report(
    params: ModelParams,
    eps: EpsilonBudget,
    l_bits: int = 7872,
    bits_per_sample: int = 16,
) -> EntropyReport:
    """Assemble the full budget: ideal bound, ADC bound and output length."""
    adc_result = min_entropy_adc(params)
    hmin_adc = -math.log2(
        math.erf(
            params.adc.range_R
            / (params.g_chi0 * params.adc.bins_d * math.sqrt(2.0 * (1.0 - params.eta)))
        )
    )
    k = extractable_length(l_bits, adc_result.bits, bits_per_sample, eps.eps_hash)
    return EntropyReport(
        eta=params.eta,
        g_chi0=params.g_chi0,
        range_R=params.adc.range_R,
        bins_d=params.adc.bins_d,
        log2_P=params.log2_P,
        b_adc=params.b_adc,
        hmin_ideal=min_entropy_ideal(params.eta, params.g_chi0),
        hmin_adc=hmin_adc,
        hmin_final=adc_result.bits,
        k=k,
        l=l_bits,
        eps_param=eps.eps_param,
        eps_adc=eps.eps_adc,
        eps_hash=eps.eps_hash,
    )
