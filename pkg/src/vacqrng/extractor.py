"""Streaming Toeplitz randomness extractor over GF(2).

Conventions, pinned by test vectors:

- matrix entry M[r][c] = seed_bits[r + (l - 1 - c)], seed length k + l - 1
- input codes are packed little-endian, bits consumed LSB-first per byte
- output bits are packed MSB-first per byte
- seed files are raw bytes, bits MSB-first
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from .entropy import EntropyReport, extractable_length

__all__ = [
    "ToeplitzSeed",
    "ExtractorConfig",
    "RandomOutput",
    "BudgetError",
    "toeplitz_hash_naive",
    "toeplitz_hash_stream",
    "ToeplitzStreamHasher",
    "extract_blocks",
    "codes_to_block_bytes",
    "monobit_pvalue",
    "byte_chisquare_pvalue",
]


class BudgetError(RuntimeError):
    """Requested output length exceeds the certified entropy budget."""


@dataclass(frozen=True)
class ToeplitzSeed:
    """The (k + l - 1)-bit seed defining the hash matrix."""

    bits: np.ndarray  # uint8, values 0/1
    k: int
    l: int
    source_tag: str = "unspecified"

    def __post_init__(self):
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=np.uint8) & 1)
        if self.k <= 0 or self.l <= 0 or self.k > self.l:
            raise ValueError(f"need 0 < k <= l, got k={self.k}, l={self.l}")
        if len(self.bits) != self.k + self.l - 1:
            raise ValueError(
                f"seed must have {self.k + self.l - 1} bits, got {len(self.bits)}"
            )

    @classmethod
    def from_bytes(cls, raw: bytes, k: int, l: int, source_tag: str = "file") -> "ToeplitzSeed":
        need = k + l - 1
        if len(raw) * 8 < need:
            raise ValueError(f"seed file too short: {len(raw)} bytes for {need} bits")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="big")[:need]
        return cls(bits=bits, k=k, l=l, source_tag=source_tag)

    @classmethod
    def from_file(cls, path, k: int, l: int) -> "ToeplitzSeed":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), k, l, source_tag=str(path))

    @classmethod
    def system_entropy(cls, k: int, l: int) -> "ToeplitzSeed":
        """Seed from the OS entropy pool; tagged as non-certified (testing)."""
        raw = os.urandom((k + l - 1 + 7) // 8)
        return cls.from_bytes(raw, k, l, source_tag="system-entropy-noncertified")

    def to_bytes(self) -> bytes:
        return np.packbits(self.bits, bitorder="big").tobytes()

    def matrix(self) -> np.ndarray:
        """Dense k x l matrix; reference representation, memory-heavy."""
        rows = np.arange(self.k)[:, None]
        cols = (self.l - 1) - np.arange(self.l)[None, :]
        return self.bits[rows + cols]


@dataclass(frozen=True)
class ExtractorConfig:
    k: int
    l: int
    eps_hash: float = 1e-17
    column_stripe_width: int = 64
    bits_per_sample: int = 16

    def __post_init__(self):
        if self.l % self.bits_per_sample != 0:
            raise ValueError(
                f"l = {self.l} not divisible by bits_per_sample = {self.bits_per_sample}"
            )
        if self.l % self.column_stripe_width != 0:
            raise ValueError(
                f"stripe width {self.column_stripe_width} does not divide l = {self.l}"
            )


@dataclass(frozen=True)
class RandomOutput:
    """k hashed bits of one input block, packed MSB-first."""

    data: bytes
    block_index: int
    n_bits: int


def toeplitz_hash_naive(seed: ToeplitzSeed, input_bits: np.ndarray) -> np.ndarray:
    """Reference GF(2) matrix-vector product, directly from the definition.

    Correctness over speed; the oracle the streaming path is checked
    against.
    """
    x = np.asarray(input_bits, dtype=np.uint8) & 1
    if len(x) != seed.l:
        raise ValueError(f"input must have {seed.l} bits, got {len(x)}")
    m = seed.matrix()
    return (m.astype(np.uint32) @ x.astype(np.uint32)) & 1


class ToeplitzStreamHasher:
    """Submatrix-method hasher: one 64-column stripe ingested per step.

    Partial row XORs accumulate per stripe; within a stripe each input
    byte selects a precomputed 256-entry table of packed partial outputs,
    so a stripe costs eight table lookups and XORs. Tables are built once
    per seed, matching a seed reused across blocks.
    """

    def __init__(self, seed: ToeplitzSeed, stripe_width: int = 64):
        if stripe_width % 8 != 0 or seed.l % stripe_width != 0:
            raise ValueError(
                f"stripe width must be a multiple of 8 dividing l, got {stripe_width}"
            )
        self.seed = seed
        self.stripe_width = stripe_width
        self.k = seed.k
        self.l = seed.l
        self._kw = (seed.k + 63) // 64  # output words per block
        self._n_chunks = seed.l // 8
        self._tables = self._build_tables()

    def _build_tables(self) -> np.ndarray:
        k, l = self.k, self.l
        # column c of the matrix is the contiguous seed slice starting at l-1-c
        windows = np.lib.stride_tricks.sliding_window_view(self.seed.bits, k)
        cols = windows[l - 1 - np.arange(l)]  # (l, k)
        packed = np.packbits(cols, axis=1, bitorder="little")
        pad = self._kw * 8 - packed.shape[1]
        if pad:
            packed = np.pad(packed, ((0, 0), (0, pad)))
        colw = packed.view("<u8").reshape(self._n_chunks, 8, self._kw)
        tables = np.zeros((self._n_chunks, 256, self._kw), dtype=np.uint64)
        for v in range(1, 256):
            low = (v & -v).bit_length() - 1
            tables[:, v, :] = tables[:, v & (v - 1), :] ^ colw[:, low, :]
        return tables

    def hash_block_words(self, words: np.ndarray) -> np.ndarray:
        """Hash one block given as l/64 little-endian 64-bit words.

        Streaming entry point: stripes are ingested in order, partial row
        XORs accumulated, then the packed result is expanded.
        """
        words = np.asarray(words, dtype="<u8")
        if len(words) * 64 != self.l:
            raise ValueError(f"expected {self.l // 64} words, got {len(words)}")
        block = words.view(np.uint8).reshape(1, -1)
        return self._finalize(self._accumulate(block))[0]

    def hash_blocks(self, blocks_bytes: np.ndarray) -> np.ndarray:
        """Hash many blocks at once; rows are l/8-byte blocks.

        Returns packed output bytes, shape (n_blocks, ceil(k/8)),
        MSB-first per byte.
        """
        blocks = np.asarray(blocks_bytes, dtype=np.uint8)
        if blocks.ndim != 2 or blocks.shape[1] != self.l // 8:
            raise ValueError(f"blocks must have shape (n, {self.l // 8})")
        return self._finalize(self._accumulate(blocks))

    def _accumulate(self, blocks: np.ndarray) -> np.ndarray:
        acc = np.zeros((blocks.shape[0], self._kw), dtype=np.uint64)
        bytes_per_stripe = self.stripe_width // 8
        for stripe in range(0, self._n_chunks, bytes_per_stripe):
            for t in range(stripe, stripe + bytes_per_stripe):
                acc ^= self._tables[t, blocks[:, t], :]
        return acc

    def _finalize(self, acc: np.ndarray) -> np.ndarray:
        # accumulator is LSB-first within words; repack MSB-first per byte
        bits = np.unpackbits(
            acc.view(np.uint8).reshape(acc.shape[0], -1), axis=1, bitorder="little"
        )[:, : self.k]
        return np.packbits(bits, axis=1, bitorder="big")

    def hash_bits(self, input_bits: np.ndarray) -> np.ndarray:
        """Hash one block of l bits; returns k output bits (for tests)."""
        x = np.asarray(input_bits, dtype=np.uint8) & 1
        if len(x) != self.l:
            raise ValueError(f"input must have {self.l} bits, got {len(x)}")
        block = np.packbits(x, bitorder="little").reshape(1, -1)
        out = self._finalize(self._accumulate(block))
        return np.unpackbits(out[0], bitorder="big")[: self.k]


def toeplitz_hash_stream(seed: ToeplitzSeed, input_bits: np.ndarray,
                         stripe_width: int = 64) -> np.ndarray:
    """One-shot streaming hash of a single block of l bits."""
    return ToeplitzStreamHasher(seed, stripe_width).hash_bits(input_bits)


def codes_to_block_bytes(codes: np.ndarray, l_bits: int) -> np.ndarray:
    """Pack 16-bit codes into full l-bit blocks, little-endian, row per block.

    The trailing partial block is discarded. Returns shape (n_blocks, l/8).
    """
    raw = np.asarray(codes, dtype="<i2").tobytes()
    bytes_per_block = l_bits // 8
    n_blocks = len(raw) // bytes_per_block
    buf = np.frombuffer(raw[: n_blocks * bytes_per_block], dtype=np.uint8)
    return buf.reshape(n_blocks, bytes_per_block)


def extract_blocks(
    config: ExtractorConfig,
    report: EntropyReport,
    seed: ToeplitzSeed,
    codes: Iterable[np.ndarray],
    batch: int = 2048,
) -> Iterator[RandomOutput]:
    """Hash retained ADC codes into k-bit outputs, gated by the budget.

    Refuses to start unless hmin_final > 0 and config.k fits within the
    leftover-hash-lemma bound for the report. ``codes`` is an iterable of
    int16 arrays; a trailing partial block is discarded.
    """
    if report.hmin_final <= 0:
        raise BudgetError("certified min-entropy is zero; nothing extractable")
    budget = extractable_length(
        config.l, report.hmin_final, config.bits_per_sample, config.eps_hash
    )
    if config.k > budget:
        raise BudgetError(
            f"k = {config.k} exceeds extractable length {budget} for "
            f"hmin = {report.hmin_final:.4f}, l = {config.l}, "
            f"eps_hash = {config.eps_hash}"
        )
    if (seed.k, seed.l) != (config.k, config.l):
        raise ValueError("seed geometry does not match extractor config")
    hasher = ToeplitzStreamHasher(seed, config.column_stripe_width)
    out_bytes = (config.k + 7) // 8
    leftover = np.zeros(0, dtype=np.int16)
    block_index = 0
    samples_per_block = config.l // config.bits_per_sample
    for arr in codes:
        pool = np.concatenate([leftover, np.asarray(arr, dtype=np.int16)])
        n_full = len(pool) // samples_per_block
        usable = pool[: n_full * samples_per_block]
        leftover = pool[n_full * samples_per_block :]
        if not n_full:
            continue
        blocks = codes_to_block_bytes(usable, config.l)
        for start in range(0, len(blocks), batch):
            out = hasher.hash_blocks(blocks[start : start + batch])
            for row in out:
                yield RandomOutput(
                    data=row[:out_bytes].tobytes(),
                    block_index=block_index,
                    n_bits=config.k,
                )
                block_index += 1


def monobit_pvalue(data: bytes) -> float:
    """Two-sided monobit frequency test p-value over all bits."""
    arr = np.frombuffer(data, dtype=np.uint8)
    n = len(arr) * 8
    if n == 0:
        raise ValueError("empty input")
    ones = int(np.unpackbits(arr).sum())
    s = abs(2 * ones - n) / math.sqrt(n)
    return math.erfc(s / math.sqrt(2.0))


def byte_chisquare_pvalue(data: bytes) -> float:
    """Chi-square uniformity test over byte values."""
    from scipy.stats import chi2

    arr = np.frombuffer(data, dtype=np.uint8)
    if len(arr) < 256 * 5:
        raise ValueError("need at least 1280 bytes")
    counts = np.bincount(arr, minlength=256)
    expected = len(arr) / 256.0
    stat = float(((counts - expected) ** 2 / expected).sum())
    return float(chi2.sf(stat, 255))
