"""Parameter estimation: raw sample streams to certified model parameters.

Covers Welch PSD estimation, vacuum-PSD isolation, the spectral
entropy-rate estimator of the finite-bandwidth gain product, shot-noise
linearity checks, responsivity-to-efficiency conversion, the Hoeffding
in-range bound and the ADC digitization audit.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import constants
from scipy.stats import norm

from .simulate import SampleBlock

__all__ = [
    "SpectralDensity",
    "DigitizationErrorModel",
    "CalibrationRecord",
    "ShotNoiseFit",
    "BootstrapResult",
    "EstimationError",
    "DegeneratePsdError",
    "psd_welch",
    "welch_segments",
    "vacuum_psd",
    "gain_bandwidth_estimate",
    "bootstrap_gain_bandwidth",
    "shot_noise_linearity",
    "quantum_efficiency",
    "responsivity_from_efficiency",
    "eta_upper_bound",
    "responsivity_fit",
    "in_range_bound",
    "read_calibration_csv",
    "write_psd_csv",
    "read_psd_csv",
]


class EstimationError(ValueError):
    """An estimator's preconditions are violated."""


class DegeneratePsdError(EstimationError):
    """Vacuum PSD is degenerate (laser not shot-noise limited)."""


@dataclass
class SpectralDensity:
    """Two-sided discrete PSD over lambda_k = 2*pi*k/M, k = 0..M-1.

    Normalization: (1/M) * sum(values) equals the (window-weighted) mean
    square of the analyzed samples, so a white process of variance s^2 has
    a flat spectrum at level s^2.
    """

    values: np.ndarray
    n_segments: int = 1
    dc_flagged: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        m = len(self.values)
        if m < 2 or m & (m - 1):
            raise EstimationError(f"PSD length must be a power of two, got {m}")
        if np.any(self.values < 0):
            raise EstimationError("PSD values must be non-negative")

    @property
    def M(self) -> int:
        return len(self.values)

    @property
    def lambdas(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.M) / self.M

    def mean_power(self) -> float:
        return float(self.values.mean())


def _window(name: str, m: int) -> np.ndarray:
    if name == "hann":
        return np.hanning(m)
    if name in ("boxcar", "rect", "rectangular"):
        return np.ones(m)
    if name == "hamming":
        return np.hamming(m)
    raise EstimationError(f"unknown window {name!r}")


def _as_samples(block) -> tuple[np.ndarray, Optional[float]]:
    if isinstance(block, SampleBlock):
        frac = block.n_out_of_range / max(block.n_total, 1)
        return block.codes.astype(float), frac
    return np.asarray(block, dtype=float), None


def welch_segments(
    block,
    segment_len: int = 4096,
    overlap: float = 0.5,
    window: str = "hann",
) -> np.ndarray:
    """Per-segment periodograms, shape (n_segments, M).

    Each row is |FFT(seg * w)|^2 / sum(w^2); averaging rows gives the
    Welch estimate under the module's normalization.
    """
    data, oob_frac = _as_samples(block)
    m = segment_len
    if m < 2 or m & (m - 1):
        raise EstimationError(f"segment_len must be a power of two, got {m}")
    if len(data) < 8 * m:
        raise EstimationError(
            f"block too short: {len(data)} samples < 8 * {m}"
        )
    if not 0.0 <= overlap < 1.0:
        raise EstimationError(f"overlap must be in [0, 1), got {overlap}")
    if oob_frac is not None and oob_frac > 0.01:
        warnings.warn(
            f"{100 * oob_frac:.1f}% of samples out of range; PSD may be biased",
            stacklevel=2,
        )
    w = _window(window, m)
    step = max(1, int(round(m * (1.0 - overlap))))
    n_seg = 1 + (len(data) - m) // step
    idx = step * np.arange(n_seg)[:, None] + np.arange(m)[None, :]
    segs = data[idx] * w
    spec = np.fft.fft(segs, axis=1)
    return (spec.real**2 + spec.imag**2) / float(w @ w)


def psd_welch(
    block,
    segment_len: int = 4096,
    overlap: float = 0.5,
    window: str = "hann",
) -> SpectralDensity:
    """Welch-averaged power spectral density of a sample block."""
    pgrams = welch_segments(block, segment_len, overlap, window)
    return SpectralDensity(
        values=pgrams.mean(axis=0),
        n_segments=pgrams.shape[0],
        dc_flagged=True,
        meta={"window": window, "overlap": overlap},
    )


def _low_freq_mask(m: int, zero_below_bin: int) -> np.ndarray:
    """Boolean mask of excluded low-frequency bins, mirrored (two-sided)."""
    mask = np.zeros(m, dtype=bool)
    zb = int(zero_below_bin)
    if zb > 0:
        mask[:zb] = True
        mask[m - zb + 1:] = True
    return mask


def vacuum_psd(
    psd_total: SpectralDensity,
    psd_electronic: SpectralDensity,
    zero_below_bin: int = 0,
    floor_factor: float = 1e-6,
    strict: bool = True,
) -> SpectralDensity:
    """Isolate the vacuum PSD by subtracting the electronic-noise PSD.

    Bins below ``zero_below_bin`` (mirrored at the top of the two-sided
    spectrum) and non-positive difference bins are set to a conservative
    floor of ``floor_factor`` times the median retained difference, so the
    downstream geometric mean cannot vanish. With ``strict`` set, more
    than 10% non-positive bins in the retained band raise
    DegeneratePsdError.
    """
    if psd_total.M != psd_electronic.M:
        raise EstimationError("PSD lengths differ")
    diff = psd_total.values - psd_electronic.values
    excluded = _low_freq_mask(psd_total.M, zero_below_bin)
    retained = ~excluded
    nonpos = diff[retained] <= 0
    if strict and retained.sum() and nonpos.mean() > 0.10:
        raise DegeneratePsdError(
            f"{100 * nonpos.mean():.0f}% of retained bins non-positive; "
            "input not shot-noise limited"
        )
    positive = diff[retained][~nonpos]
    median = float(np.median(positive)) if positive.size else 1.0
    floor = floor_factor * median
    out = np.maximum(diff, floor)
    out[excluded] = floor
    return SpectralDensity(
        values=out,
        n_segments=min(psd_total.n_segments, psd_electronic.n_segments),
        dc_flagged=True,
        meta={"zero_below_bin": int(zero_below_bin), "floor": floor},
    )


def gain_bandwidth_estimate(psd_vacuum: SpectralDensity, eta: float) -> float:
    """Finite-bandwidth gain product from the vacuum PSD.

    Discrete form of the entropy-rate relation: the conditional standard
    deviation of the vacuum contribution is the geometric mean
    exp((1/M) sum_k (1/2) ln f(lambda_k)), divided by sqrt(1-eta).
    """
    if not 0.0 < eta < 1.0:
        raise EstimationError(f"eta must be in (0, 1), got {eta}")
    f = psd_vacuum.values
    if np.any(f <= 0):
        raise EstimationError("vacuum PSD has non-positive bins; apply flooring first")
    return math.exp(0.5 * float(np.mean(np.log(f)))) / math.sqrt(1.0 - eta)


@dataclass(frozen=True)
class BootstrapResult:
    estimate: float
    lower: float
    upper: float
    n_resamples: int
    confidence: float


def bootstrap_gain_bandwidth(
    segments_total: np.ndarray,
    eta: float,
    psd_electronic: Optional[SpectralDensity] = None,
    zero_below_bin: int = 0,
    floor_factor: float = 1e-6,
    n_resamples: int = 1000,
    confidence: float = 0.95,
    seed: Optional[int] = None,
) -> BootstrapResult:
    """Percentile bootstrap of the gain product over Welch segments.

    Resamples segment periodograms with replacement; the lower endpoint
    is the certification value. Resample means are computed as a
    multinomial-count matrix product for speed; reduction order is fixed,
    so results are reproducible for a given seed.
    """
    segs = np.asarray(segments_total, dtype=float)
    n_seg, m = segs.shape
    elec = psd_electronic.values if psd_electronic is not None else np.zeros(m)

    def estimate_from(mean_psd: np.ndarray) -> float:
        total = SpectralDensity(mean_psd, n_segments=n_seg)
        vac = vacuum_psd(
            total, SpectralDensity(elec, n_segments=n_seg),
            zero_below_bin=zero_below_bin, floor_factor=floor_factor,
            strict=False,
        )
        return gain_bandwidth_estimate(vac, eta)

    point = estimate_from(segs.mean(axis=0))
    rng = np.random.Generator(np.random.Philox(seed))
    counts = rng.multinomial(n_seg, np.full(n_seg, 1.0 / n_seg), size=n_resamples)
    means = (counts @ segs) / n_seg
    stats = np.array([estimate_from(mu) for mu in means])
    alpha = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return BootstrapResult(
        estimate=point, lower=float(lo), upper=float(hi),
        n_resamples=n_resamples, confidence=confidence,
    )


@dataclass(frozen=True)
class CalibrationRecord:
    """One calibration point: optical power plus current or noise variance."""

    power: float
    current: Optional[float] = None
    variance: Optional[float] = None

    def __post_init__(self):
        if self.power <= 0:
            raise EstimationError(f"power must be > 0, got {self.power}")


@dataclass(frozen=True)
class ShotNoiseFit:
    slope: float
    max_rel_residual: float
    is_shot_limited: bool


def shot_noise_linearity(
    records: Sequence[CalibrationRecord],
    electronic_variance: float = 0.0,
    threshold: float = 0.05,
) -> ShotNoiseFit:
    """Least-squares fit of noise variance vs optical power through origin.

    The laser is flagged shot-noise limited when the largest relative
    residual of the fit stays below ``threshold`` after electronic-noise
    subtraction.
    """
    if len(records) < 3:
        raise EstimationError(f"need >= 3 calibration points, got {len(records)}")
    p = np.array([r.power for r in records], dtype=float)
    if len(np.unique(p)) != len(p):
        raise EstimationError("calibration powers must be distinct")
    v = np.array([r.variance for r in records], dtype=float) - electronic_variance
    slope = float((p @ v) / (p @ p))
    if slope <= 0:
        return ShotNoiseFit(slope=slope, max_rel_residual=math.inf, is_shot_limited=False)
    rel = np.abs(v - slope * p) / (slope * p)
    worst = float(rel.max())
    return ShotNoiseFit(slope=slope, max_rel_residual=worst,
                        is_shot_limited=worst < threshold)


def quantum_efficiency(responsivity: float, wavelength: float) -> float:
    """Quantum efficiency from photodiode responsivity (A/W) and wavelength (m).

    eta = K * h * c / (e * lambda); orientation fixed so that 0.5458 A/W
    at 850 nm gives eta = 0.796.
    """
    if responsivity <= 0 or wavelength <= 0:
        raise EstimationError("responsivity and wavelength must be > 0")
    eta = responsivity * constants.h * constants.c / (constants.e * wavelength)
    if not 0.0 < eta <= 1.0:
        raise EstimationError(
            f"responsivity {responsivity} A/W at {wavelength * 1e9:.0f} nm "
            f"gives unphysical eta = {eta:.4f}"
        )
    return eta


def responsivity_from_efficiency(eta: float, wavelength: float) -> float:
    """Inverse of quantum_efficiency: responsivity in A/W."""
    if not 0.0 < eta <= 1.0 or wavelength <= 0:
        raise EstimationError("eta must be in (0, 1] and wavelength > 0")
    return eta * constants.e * wavelength / (constants.h * constants.c)


def eta_upper_bound(
    eta_hat: float,
    sigma_fit: float,
    systematic_frac: float = 0.05,
    eps: float = 1e-11,
) -> float:
    """Upper confidence bound on eta at failure probability eps.

    The power-meter systematic inflates the fit standard error linearly
    (conservative), then a one-sided Gaussian tail bound is applied.
    """
    if sigma_fit < 0 or systematic_frac < 0:
        raise EstimationError("sigma_fit and systematic_frac must be >= 0")
    if not 0.0 < eps < 1.0:
        raise EstimationError(f"eps must be in (0, 1), got {eps}")
    z = float(norm.isf(eps))
    return eta_hat + z * sigma_fit * (1.0 + systematic_frac)


def responsivity_fit(records: Sequence[CalibrationRecord]) -> tuple[float, float]:
    """Through-origin fit of photocurrent vs power; returns (K, sigma_K)."""
    pts = [(r.power, r.current) for r in records if r.current is not None]
    if len(pts) < 3:
        raise EstimationError(f"need >= 3 (power, current) points, got {len(pts)}")
    p = np.array([q[0] for q in pts])
    i = np.array([q[1] for q in pts])
    k = float((p @ i) / (p @ p))
    resid = i - k * p
    dof = len(pts) - 1
    sigma = float(math.sqrt((resid @ resid) / dof / (p @ p)))
    return k, sigma


def in_range_bound(n_total: int, n_in_range: int, eps_P: float) -> float:
    """Hoeffding lower bound on log2 of the in-range probability.

    log2(max(0, N1/N - sqrt(ln(1/eps_P) / (2N)))); -inf when the argument
    hits zero.
    """
    if n_total < 1:
        raise EstimationError(f"n_total must be >= 1, got {n_total}")
    if not 0 <= n_in_range <= n_total:
        raise EstimationError("n_in_range must be in [0, n_total]")
    if not 0.0 < eps_P <= 1.0:
        raise EstimationError(f"eps_P must be in (0, 1], got {eps_P}")
    arg = n_in_range / n_total - math.sqrt(math.log(1.0 / eps_P) / (2.0 * n_total))
    if arg <= 0:
        return -math.inf
    return math.log2(arg)


@dataclass
class DigitizationErrorModel:
    """Per-code reachable sets of a noisy ADC, as (j, f_min, f_max) rows.

    A monotone ADC has one interval row per ideal code j; non-monotone
    devices may list several rows per code (set-valued table).
    """

    d: int
    rows: np.ndarray  # (n, 3) int: ideal code, reachable min, reachable max

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        if self.rows.ndim != 2 or self.rows.shape[1] != 3:
            raise EstimationError("rows must have shape (n, 3)")
        j, lo, hi = self.rows.T
        if np.any((j < 0) | (j >= self.d)) or np.any((lo < 0) | (hi >= self.d)):
            raise EstimationError("codes out of range")
        if np.any(lo > hi):
            raise EstimationError("empty reachable interval")
        covered = np.zeros(self.d, dtype=bool)
        covered[j] = True
        if not covered.all():
            raise EstimationError(
                f"{int((~covered).sum())} codes have no reachable set"
            )
        self._single = len(self.rows) == self.d and len(np.unique(j)) == self.d

    @classmethod
    def perfect(cls, d: int) -> "DigitizationErrorModel":
        j = np.arange(d)
        return cls(d=d, rows=np.column_stack([j, j, j]))

    @classmethod
    def smear(cls, d: int, spread: int = 1) -> "DigitizationErrorModel":
        """Each code reaches j +/- spread, clamped at the edges."""
        j = np.arange(d)
        lo = np.maximum(j - spread, 0)
        hi = np.minimum(j + spread, d - 1)
        return cls(d=d, rows=np.column_stack([j, lo, hi]))

    @classmethod
    def from_csv(cls, path, d: int) -> "DigitizationErrorModel":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].strip().startswith(("#", "j")):
                    continue
                rows.append([int(rec[0]), int(rec[1]), int(rec[2])])
        return cls(d=d, rows=np.array(rows))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["j", "f_min", "f_max"])
            writer.writerows(self.rows.tolist())

    def penalty_bits(self) -> float:
        """Digitization penalty: log2 of the largest preimage set |J_f|.

        J_f collects the ideal codes j from which output f is reachable;
        computed by inverting the reachable-set table with a sweep.
        """
        delta = np.zeros(self.d + 1, dtype=np.int64)
        if self._single:
            np.add.at(delta, self.rows[:, 1], 1)
            np.add.at(delta, self.rows[:, 2] + 1, -1)
        else:
            for j in np.unique(self.rows[:, 0]):
                mask = self.rows[:, 0] == j
                # union of this code's intervals, so overlapping rows count once
                covered = np.zeros(self.d, dtype=bool)
                for _, lo, hi in self.rows[mask]:
                    covered[lo : hi + 1] = True
                delta[:-1] += covered
        hits = np.cumsum(delta[: self.d]) if self._single else delta[: self.d]
        return math.log2(int(hits.max()))

    def remap(self, codes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw noisy output codes for ideal codes, uniform over reachable sets."""
        codes = np.asarray(codes, dtype=np.int64)
        if self._single:
            order = np.argsort(self.rows[:, 0], kind="stable")
            lo = self.rows[order, 1][codes]
            hi = self.rows[order, 2][codes]
            return rng.integers(lo, hi + 1)
        out = np.empty_like(codes)
        for j in np.unique(codes):
            mask = self.rows[:, 0] == j
            pool = np.concatenate(
                [np.arange(lo, hi + 1) for _, lo, hi in self.rows[mask]]
            )
            sel = codes == j
            out[sel] = rng.choice(pool, size=int(sel.sum()))
        return out


def read_calibration_csv(path) -> list[CalibrationRecord]:
    """Read calibration points: (power_W, current_A) or (power_W, variance).

    The header row names the second column; ``current``/``current_A``
    selects responsivity mode, anything else is treated as variance.
    """
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        is_current = len(header) > 1 and "current" in header[1].strip().lower()
        for rec in reader:
            if not rec:
                continue
            power = float(rec[0])
            val = float(rec[1])
            if is_current:
                records.append(CalibrationRecord(power=power, current=val))
            else:
                records.append(CalibrationRecord(power=power, variance=val))
    return records


def write_psd_csv(path, psd: SpectralDensity) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "value"])
        for lam, val in zip(psd.lambdas, psd.values):
            writer.writerow([repr(float(lam)), repr(float(val))])


def read_psd_csv(path) -> SpectralDensity:
    values = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            if rec:
                values.append(float(rec[1]))
    return SpectralDensity(values=np.array(values))
