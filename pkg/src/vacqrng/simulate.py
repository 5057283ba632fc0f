"""Synthetic detector streams: filtered laser + vacuum noise through an ADC.

The analog model is y(t) = g * (sqrt(eta) * x~(t) + sqrt(1-eta) * u~(t))
where x~ and u~ are the laser/electronic and vacuum paths after the
detector response, u(t) is always i.i.d. standard Gaussian (the trusted
vacuum), and the optical carrier is assumed removed by the highpass.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal as sps

from .entropy import AdcGeometry

__all__ = [
    "NoiseSpec",
    "DetectorResponse",
    "AdcModel",
    "SampleBlock",
    "ConfigError",
    "generate_stream",
    "simulate_analog",
    "quantize",
    "write_block",
    "read_block",
    "OUT_OF_RANGE",
]

# Sentinel code for samples outside (-R, R); never a valid bin index.
OUT_OF_RANGE = -1

_BLOCK_MAGIC = b"VRQ1"
_BLOCK_VERSION = 1
# magic, version u16, bits u16, n_total u64, n_oob u64, seed u64, sha256 digest
_HEADER_FMT = "<4sHHQQQ32s"


class ConfigError(ValueError):
    """Simulator configuration is invalid or unstable."""


@dataclass(frozen=True)
class NoiseSpec:
    """Distribution of the untrusted laser/electronic noise innovations.

    ``variance`` is in vacuum-normalized units (vacuum == 1). ``params``
    holds kind-specific shape parameters:

    - mixture: means, sigmas, weights (Gaussian mixture, rescaled to the
      requested variance)
    - file-replay: path to a float64 ``.npy`` file of raw innovations,
      rescaled to the requested variance
    """

    kind: str = "gaussian"
    variance: float = 1.0
    params: dict = field(default_factory=dict)

    _KINDS = ("gaussian", "uniform", "laplace", "mixture", "file-replay")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.variance < 0:
            raise ConfigError(f"variance must be >= 0, got {self.variance}")
        if self.kind == "mixture":
            w = np.asarray(self.params.get("weights", []), dtype=float)
            if w.size == 0 or abs(w.sum() - 1.0) > 1e-9:
                raise ConfigError("mixture weights must be given and sum to 1")

    def sample(self, rng: np.random.Generator, n: int, offset: int = 0) -> np.ndarray:
        """Draw n innovations with the requested variance.

        ``offset`` is only used by file-replay and selects where in the
        file this chunk starts.
        """
        if self.variance == 0.0:
            return np.zeros(n)
        scale = math.sqrt(self.variance)
        if self.kind == "gaussian":
            return rng.standard_normal(n) * scale
        if self.kind == "uniform":
            # Var of U(-a, a) is a^2/3
            a = math.sqrt(3.0)
            return rng.uniform(-a, a, n) * scale
        if self.kind == "laplace":
            # Var of Laplace(0, b) is 2 b^2
            return rng.laplace(0.0, 1.0 / math.sqrt(2.0), n) * scale
        if self.kind == "mixture":
            means = np.asarray(self.params["means"], dtype=float)
            sigmas = np.asarray(self.params["sigmas"], dtype=float)
            weights = np.asarray(self.params["weights"], dtype=float)
            comp = rng.choice(len(weights), size=n, p=weights)
            draws = means[comp] + sigmas[comp] * rng.standard_normal(n)
            mean = float(weights @ means)
            var = float(weights @ (sigmas**2 + means**2) - mean**2)
            return (draws - mean) * (scale / math.sqrt(var))
        # file-replay: normalize with whole-file moments so chunked reads
        # compose into the same stream as a single read
        data = np.load(self.params["path"]).astype(float)
        if data.size < offset + n:
            raise ConfigError(
                f"replay file has {data.size} samples, need {offset + n}"
            )
        std = data.std()
        if std == 0:
            raise ConfigError("replay file is constant")
        return (data[offset:offset + n] - data.mean()) * (scale / std)


@dataclass(frozen=True)
class DetectorResponse:
    """Linear detector response applied to the innovation streams.

    ``kind`` selects the filter form: "fir" convolves the taps with the
    innovations; "ar" uses taps[0] as the innovation weight and taps[1:]
    as the recursion coefficients on past filtered values. The optional
    one-pole highpass models carrier removal; its cutoff is expressed in
    PSD bins of a 4096-point grid (0 disables it).
    """

    kind: str = "ar"
    taps: tuple = (1.0,)
    highpass_cutoff_bins: int = 0

    _HP_GRID = 4096

    def __post_init__(self):
        if self.kind not in ("fir", "ar"):
            raise ConfigError(f"unknown response kind {self.kind!r}")
        taps = np.asarray(self.taps, dtype=float)
        if taps.size == 0 or taps[0] <= 0:
            raise ConfigError("first tap (chi_0) must be > 0")
        if not np.all(np.isfinite(taps)):
            raise ConfigError("taps must be finite")
        if self.kind == "ar" and taps.size > 1:
            poles = np.roots(np.concatenate(([1.0], -taps[1:])))
            if np.any(np.abs(poles) >= 1.0):
                raise ConfigError("unstable recursion: pole on or outside unit circle")
        if self.highpass_cutoff_bins < 0:
            raise ConfigError("highpass_cutoff_bins must be >= 0")

    @property
    def chi0(self) -> float:
        return float(self.taps[0])

    def transfer(self) -> tuple[np.ndarray, np.ndarray]:
        """(b, a) coefficients of the response, excluding the highpass."""
        taps = np.asarray(self.taps, dtype=float)
        if self.kind == "fir":
            return taps, np.array([1.0])
        return taps[:1], np.concatenate(([1.0], -taps[1:]))

    def highpass(self) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """(b, a) of the one-pole carrier-removal highpass, or None."""
        if self.highpass_cutoff_bins == 0:
            return None
        fc = self.highpass_cutoff_bins / self._HP_GRID  # cycles per sample
        t = math.tan(math.pi * fc)
        a1 = (1.0 - t) / (1.0 + t)
        g = (1.0 + a1) / 2.0
        return np.array([g, -g]), np.array([1.0, -a1])

    def apply(self, innovations: np.ndarray, zi=None):
        """Filter an innovation stream; returns (out, zi) for chunked use."""
        b, a = self.transfer()
        if zi is None:
            zi = [np.zeros(max(len(b), len(a)) - 1)]
            hp = self.highpass()
            if hp is not None:
                zi.append(np.zeros(1))
        out, zi0 = sps.lfilter(b, a, innovations, zi=zi[0])
        new_zi = [zi0]
        hp = self.highpass()
        if hp is not None:
            out, zi1 = sps.lfilter(hp[0], hp[1], out, zi=zi[1])
            new_zi.append(zi1)
        return out, new_zi


@dataclass(frozen=True)
class AdcModel:
    """ADC geometry, gain and optional digitization-error remapping.

    ``error_model`` is a DigitizationErrorModel (characterize module) or
    None; when present, ideal codes are remapped within their reachable
    interval. Samples with |y| >= R are discarded (boundary-bin policy)
    and counted.
    """

    geometry: AdcGeometry
    gain_g: float = 1.0
    error_model: Optional[object] = None

    def __post_init__(self):
        if self.gain_g <= 0:
            raise ConfigError(f"gain_g must be > 0, got {self.gain_g}")


@dataclass
class SampleBlock:
    """A contiguous run of retained signed ADC codes plus metadata."""

    codes: np.ndarray  # signed, centered: code = bin index - d/2
    n_total: int
    n_out_of_range: int
    rng_seed: int
    params_snapshot: dict
    bits_per_sample: int = 16

    def __post_init__(self):
        assert len(self.codes) == self.n_total - self.n_out_of_range

    def config_digest(self) -> bytes:
        blob = json.dumps(self.params_snapshot, sort_keys=True).encode()
        return hashlib.sha256(blob).digest()


def quantize(y, adc: AdcModel, rng: Optional[np.random.Generator] = None):
    """Map analog values to bin indices; out-of-range values get OUT_OF_RANGE.

    Bin j covers [-R + 2Rj/d, -R + 2R(j+1)/d); the range check is on the
    open interval (-R, R). Scalar in, scalar out; array in, array out.
    """
    geom = adc.geometry
    y_arr = np.asarray(y, dtype=float)
    scalar = y_arr.ndim == 0
    y_arr = np.atleast_1d(y_arr)
    codes = np.floor((y_arr + geom.range_R) * geom.bins_d / (2.0 * geom.range_R))
    codes = codes.astype(np.int64)
    np.clip(codes, 0, geom.bins_d - 1, out=codes)
    oob = np.abs(y_arr) >= geom.range_R
    if adc.error_model is not None:
        ok = ~oob
        if rng is None:
            rng = np.random.default_rng()
        codes[ok] = adc.error_model.remap(codes[ok], rng)
    codes[oob] = OUT_OF_RANGE
    if scalar:
        return int(codes[0])
    return codes


def simulate_analog(
    noise: NoiseSpec,
    response: DetectorResponse,
    eta: float,
    gain_g: float,
    n: int,
    rng: np.random.Generator,
    include_vacuum: bool = True,
    state=None,
    rng_vacuum: Optional[np.random.Generator] = None,
):
    """Pre-quantization detector output and its two path contributions.

    Returns (y, x_part, u_part, state) where y = x_part + u_part,
    x_part = g*sqrt(eta)*x~ and u_part = g*sqrt(1-eta)*u~. ``state``
    carries filter tails (and the replay offset) across chunks. When
    ``rng_vacuum`` is given the vacuum path draws from its own stream,
    which makes single-draw noise kinds invariant to chunk boundaries.
    """
    if not 0.0 < eta < 1.0:
        raise ConfigError(f"eta must be in (0, 1), got {eta}")
    if state is None:
        state = {"x": None, "u": None, "offset": 0}
    x_innov = noise.sample(rng, n, offset=state.get("offset", 0))
    state["offset"] = state.get("offset", 0) + n
    x_f, state["x"] = response.apply(x_innov, state["x"])
    x_part = gain_g * math.sqrt(eta) * x_f
    if include_vacuum:
        u_innov = (rng_vacuum or rng).standard_normal(n)
        u_f, state["u"] = response.apply(u_innov, state["u"])
        u_part = gain_g * math.sqrt(1.0 - eta) * u_f
    else:
        u_part = np.zeros(n)
    return x_part + u_part, x_part, u_part, state


def _snapshot(noise, response, eta, adc, n, seed, include_vacuum) -> dict:
    return {
        "noise": {"kind": noise.kind, "variance": noise.variance,
                  "params": {k: v for k, v in noise.params.items()}},
        "response": {"kind": response.kind, "taps": list(response.taps),
                     "highpass_cutoff_bins": response.highpass_cutoff_bins},
        "eta": eta,
        "adc": {"range_R": adc.geometry.range_R, "bins_d": adc.geometry.bins_d,
                "gain_g": adc.gain_g,
                "error_model": adc.error_model is not None},
        "n": n,
        "seed": seed,
        "include_vacuum": include_vacuum,
    }


def generate_stream(
    noise: NoiseSpec,
    response: DetectorResponse,
    eta: float,
    adc: AdcModel,
    n: int,
    seed: int,
    include_vacuum: bool = True,
    chunk: int = 4_000_000,
) -> SampleBlock:
    """Generate n samples and quantize them into a SampleBlock.

    Deterministic in (seed, config); uses counter-based Philox streams,
    one per noise path, so the output does not depend on the chunk size
    (mixture noise excepted: it interleaves two draws per chunk). Raises
    ConfigError when more than half the samples fall out of range
    (misconfigured gain).
    """
    if n <= 0:
        raise ConfigError(f"n must be > 0, got {n}")
    seq_x, seq_u, seq_q = np.random.SeedSequence(seed).spawn(3)
    rng_x = np.random.Generator(np.random.Philox(seq_x))
    rng_u = np.random.Generator(np.random.Philox(seq_u))
    rng_q = np.random.Generator(np.random.Philox(seq_q))
    state = None
    pieces = []
    n_oob = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        y, _, _, state = simulate_analog(
            noise, response, eta, adc.gain_g, m, rng_x,
            include_vacuum=include_vacuum, state=state, rng_vacuum=rng_u,
        )
        codes = quantize(y, adc, rng_q)
        keep = codes != OUT_OF_RANGE
        n_oob += int(m - keep.sum())
        pieces.append((codes[keep] - adc.geometry.bins_d // 2).astype(np.int16))
        done += m
    if n_oob > n // 2:
        raise ConfigError(
            f"{n_oob}/{n} samples out of range; gain is misconfigured"
        )
    bits = adc.geometry.bits
    return SampleBlock(
        codes=np.concatenate(pieces),
        n_total=n,
        n_out_of_range=n_oob,
        rng_seed=seed,
        params_snapshot=_snapshot(noise, response, eta, adc, n, seed, include_vacuum),
        bits_per_sample=16 if bits <= 16 else bits,
    )


def write_block(block: SampleBlock, path) -> None:
    """Serialize a SampleBlock: fixed header then little-endian int16 codes."""
    header = struct.pack(
        _HEADER_FMT,
        _BLOCK_MAGIC,
        _BLOCK_VERSION,
        block.bits_per_sample,
        block.n_total,
        block.n_out_of_range,
        block.rng_seed & 0xFFFFFFFFFFFFFFFF,
        block.config_digest(),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(json.dumps(block.params_snapshot, sort_keys=True).encode() + b"\n")
        fh.write(block.codes.astype("<i2").tobytes())


def read_block(path) -> SampleBlock:
    """Read a SampleBlock written by write_block; verifies magic and digest."""
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize(_HEADER_FMT))
        magic, version, bits, n_total, n_oob, seed, digest = struct.unpack(
            _HEADER_FMT, header
        )
        if magic != _BLOCK_MAGIC:
            raise ConfigError(f"{path}: not a sample-block file")
        if version != _BLOCK_VERSION:
            raise ConfigError(f"{path}: unsupported version {version}")
        snapshot_line = fh.readline()
        snapshot = json.loads(snapshot_line)
        if hashlib.sha256(snapshot_line.rstrip(b"\n")).digest() != digest:
            raise ConfigError(f"{path}: config digest mismatch")
        codes = np.frombuffer(fh.read(), dtype="<i2").astype(np.int16)
    return SampleBlock(
        codes=codes,
        n_total=n_total,
        n_out_of_range=n_oob,
        rng_seed=seed,
        params_snapshot=snapshot,
        bits_per_sample=bits,
    )
