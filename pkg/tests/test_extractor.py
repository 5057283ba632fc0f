import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vacqrng.entropy import EntropyReport
from vacqrng.extractor import (
    BudgetError,
    ExtractorConfig,
    ToeplitzSeed,
    ToeplitzStreamHasher,
    byte_chisquare_pvalue,
    codes_to_block_bytes,
    extract_blocks,
    monobit_pvalue,
    toeplitz_hash_naive,
    toeplitz_hash_stream,
)


def random_seed(k, l, rng):
    return ToeplitzSeed(bits=rng.integers(0, 2, k + l - 1, dtype=np.uint8),
                        k=k, l=l)


def make_report(hmin_final, k=1680, l=7872, eps_hash=1e-17):
    return EntropyReport(
        eta=0.81, g_chi0=2581.0, range_R=32768.0, bins_d=65536,
        log2_P=-1.548e-4, b_adc=7.80, hmin_ideal=12.787, hmin_adc=11.461,
        hmin_final=hmin_final, k=k, l=l,
        eps_param=1e-11, eps_adc=1e-10, eps_hash=eps_hash,
    )


class TestNaiveOracle:
    def test_pinned_vector_k2_l3(self):
        # seed (b0..b3) = 1,0,1,1 gives M = [[1,0,1],[1,1,0]]
        seed = ToeplitzSeed(bits=np.array([1, 0, 1, 1], dtype=np.uint8), k=2, l=3)
        assert seed.matrix().tolist() == [[1, 0, 1], [1, 1, 0]]
        out = toeplitz_hash_naive(seed, np.array([1, 1, 0], dtype=np.uint8))
        assert out.tolist() == [1, 0]

    def test_zero_seed_gives_zero_output(self):
        seed = ToeplitzSeed(bits=np.zeros(10, dtype=np.uint8), k=3, l=8)
        x = np.random.default_rng(0).integers(0, 2, 8, dtype=np.uint8)
        assert toeplitz_hash_naive(seed, x).tolist() == [0, 0, 0]

    def test_zero_input_gives_zero_output(self):
        seed = random_seed(3, 8, np.random.default_rng(1))
        assert toeplitz_hash_naive(seed, np.zeros(8, dtype=np.uint8)).tolist() == \
            [0, 0, 0]

    def test_length_mismatch(self):
        seed = random_seed(3, 8, np.random.default_rng(2))
        with pytest.raises(ValueError):
            toeplitz_hash_naive(seed, np.zeros(7, dtype=np.uint8))

    @given(data=st.data(), k=st.integers(1, 12), l=st.integers(1, 24))
    @settings(max_examples=100)
    def test_linearity(self, data, k, l):
        if k > l:
            k, l = l, k
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        seed = random_seed(k, l, rng)
        a = rng.integers(0, 2, l, dtype=np.uint8)
        b = rng.integers(0, 2, l, dtype=np.uint8)
        direct = toeplitz_hash_naive(seed, a ^ b)
        combined = toeplitz_hash_naive(seed, a) ^ toeplitz_hash_naive(seed, b)
        assert np.array_equal(direct, combined)


class TestStreamEquivalence:
    def test_single_stripe_degenerate_case(self):
        rng = np.random.default_rng(3)
        seed = random_seed(40, 64, rng)
        x = rng.integers(0, 2, 64, dtype=np.uint8)
        assert np.array_equal(toeplitz_hash_stream(seed, x, stripe_width=64),
                              toeplitz_hash_naive(seed, x))

    def test_randomized_small_geometries(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            stripe = 8 * int(rng.integers(1, 5))
            l = stripe * int(rng.integers(1, 9))
            k = int(rng.integers(1, l + 1))
            seed = random_seed(k, l, rng)
            x = rng.integers(0, 2, l, dtype=np.uint8)
            stream = toeplitz_hash_stream(seed, x, stripe_width=stripe)
            assert np.array_equal(stream, toeplitz_hash_naive(seed, x))

    def test_full_geometry_matches_naive(self):
        rng = np.random.default_rng(5)
        seed = random_seed(1680, 7872, rng)
        hasher = ToeplitzStreamHasher(seed)
        for _ in range(3):
            x = rng.integers(0, 2, 7872, dtype=np.uint8)
            assert np.array_equal(hasher.hash_bits(x),
                                  toeplitz_hash_naive(seed, x))

    def test_large_randomized_geometry(self):
        rng = np.random.default_rng(6)
        seed = random_seed(2048, 8192, rng)
        x = rng.integers(0, 2, 8192, dtype=np.uint8)
        assert np.array_equal(toeplitz_hash_stream(seed, x),
                              toeplitz_hash_naive(seed, x))

    def test_batched_equals_single(self):
        rng = np.random.default_rng(7)
        seed = random_seed(48, 128, rng)
        hasher = ToeplitzStreamHasher(seed, stripe_width=64)
        blocks = rng.integers(0, 256, (10, 16), dtype=np.uint8)
        batched = hasher.hash_blocks(blocks)
        for i in range(10):
            words = blocks[i].view("<u8")
            assert np.array_equal(hasher.hash_block_words(words), batched[i])

    def test_invalid_stripe(self):
        seed = random_seed(8, 64, np.random.default_rng(8))
        with pytest.raises(ValueError):
            ToeplitzStreamHasher(seed, stripe_width=12)
        with pytest.raises(ValueError):
            ToeplitzStreamHasher(seed, stripe_width=48)  # does not divide 64


class TestPackingConventions:
    def test_seed_bytes_are_msb_first(self):
        seed = ToeplitzSeed.from_bytes(bytes([0b10110000]), k=2, l=3)
        assert seed.bits.tolist() == [1, 0, 1, 1]
        # roundtrip pads trailing bits with zeros
        assert seed.to_bytes() == bytes([0b10110000])

    def test_seed_file_too_short(self):
        with pytest.raises(ValueError):
            ToeplitzSeed.from_bytes(b"\x00", k=16, l=16)

    def test_codes_pack_little_endian(self):
        codes = np.array([1, -2], dtype=np.int16)
        blocks = codes_to_block_bytes(codes, 32)
        assert blocks.tolist() == [[0x01, 0x00, 0xFE, 0xFF]]

    def test_trailing_partial_block_discarded(self):
        codes = np.arange(10, dtype=np.int16)  # 160 bits, l = 64 -> 2 blocks
        blocks = codes_to_block_bytes(codes, 64)
        assert blocks.shape == (2, 8)

    def test_block_bytes_consumed_lsb_first(self):
        rng = np.random.default_rng(9)
        seed = random_seed(16, 64, rng)
        codes = rng.integers(-100, 100, 4, dtype=np.int16)
        raw = codes.astype("<i2").tobytes()
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
        expected = toeplitz_hash_naive(seed, bits)
        hasher = ToeplitzStreamHasher(seed, stripe_width=64)
        out = hasher.hash_blocks(codes_to_block_bytes(codes, 64))[0]
        assert np.array_equal(np.unpackbits(out)[:16], expected)

    def test_output_packed_msb_first(self):
        rng = np.random.default_rng(10)
        seed = random_seed(12, 64, rng)
        x = rng.integers(0, 2, 64, dtype=np.uint8)
        bits = toeplitz_hash_naive(seed, x)
        hasher = ToeplitzStreamHasher(seed, stripe_width=64)
        packed = hasher.hash_blocks(
            np.packbits(x, bitorder="little").reshape(1, -1)
        )[0]
        assert np.array_equal(packed, np.packbits(bits, bitorder="big"))


class TestExtractBlocks:
    def _run(self, config, report, seed, codes_arrays):
        return list(extract_blocks(config, report, seed, codes_arrays))

    def test_reference_geometry_accepted(self):
        config = ExtractorConfig(k=1680, l=7872)
        seed = random_seed(1680, 7872, np.random.default_rng(11))
        codes = np.random.default_rng(12).integers(-500, 500, 492 * 3,
                                                   dtype=np.int16)
        outs = self._run(config, make_report(3.67), seed, [codes])
        assert len(outs) == 3
        assert all(o.n_bits == 1680 and len(o.data) == 210 for o in outs)
        assert [o.block_index for o in outs] == [0, 1, 2]

    def test_budget_refusal_just_above_limit(self):
        # extractable length at hmin = 3.67 is 1693 bits
        config = ExtractorConfig(k=1696, l=7872)
        seed = random_seed(1696, 7872, np.random.default_rng(13))
        with pytest.raises(BudgetError):
            self._run(config, make_report(3.67), seed, [])

    def test_zero_entropy_refused(self):
        config = ExtractorConfig(k=16, l=64, eps_hash=0.25)
        seed = random_seed(16, 64, np.random.default_rng(14))
        with pytest.raises(BudgetError):
            self._run(config, make_report(0.0), seed, [])

    def test_seed_geometry_mismatch(self):
        config = ExtractorConfig(k=16, l=64, eps_hash=0.25)
        seed = random_seed(16, 128, np.random.default_rng(15))
        with pytest.raises(ValueError):
            self._run(config, make_report(8.0), seed, [])

    def test_empty_stream_yields_nothing(self):
        config = ExtractorConfig(k=16, l=64, eps_hash=0.25)
        seed = random_seed(16, 64, np.random.default_rng(16))
        assert self._run(config, make_report(8.0), seed, []) == []
        assert self._run(config, make_report(8.0), seed,
                         [np.zeros(0, dtype=np.int16)]) == []

    def test_chunk_boundaries_do_not_matter(self):
        config = ExtractorConfig(k=16, l=64, eps_hash=0.25)
        seed = random_seed(16, 64, np.random.default_rng(17))
        codes = np.random.default_rng(18).integers(-500, 500, 41,
                                                   dtype=np.int16)
        whole = self._run(config, make_report(8.0), seed, [codes])
        split = self._run(config, make_report(8.0), seed,
                          [codes[:3], codes[3:10], codes[10:]])
        assert [o.data for o in whole] == [o.data for o in split]
        # 41 samples = 10 blocks of 4 plus one discarded leftover sample
        assert len(whole) == 10

    def test_deterministic(self):
        config = ExtractorConfig(k=1680, l=7872)
        seed = random_seed(1680, 7872, np.random.default_rng(19))
        codes = np.random.default_rng(20).integers(-500, 500, 492 * 5,
                                                   dtype=np.int16)
        a = self._run(config, make_report(3.67), seed, [codes])
        b = self._run(config, make_report(3.67), seed, [codes])
        assert [o.data for o in a] == [o.data for o in b]

    def test_thousand_blocks_bit_accounting(self):
        config = ExtractorConfig(k=1680, l=7872)
        seed = random_seed(1680, 7872, np.random.default_rng(21))
        codes = np.random.default_rng(22).integers(-2000, 2000, 492 * 1000,
                                                   dtype=np.int16)
        outs = self._run(config, make_report(3.67), seed, [codes])
        total_bits = sum(o.n_bits for o in outs)
        assert total_bits == 1680 * 1000
        # rate arithmetic of the reference geometry
        assert 1680 / 7872 * 16.0 == pytest.approx(3.4146, abs=1e-3)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExtractorConfig(k=10, l=100)  # not divisible by 16
        with pytest.raises(ValueError):
            ExtractorConfig(k=10, l=7872, column_stripe_width=60)


class TestUniformityHelpers:
    def test_monobit_accepts_balanced(self):
        data = np.random.default_rng(23).integers(0, 256, 10**5,
                                                  dtype=np.uint8).tobytes()
        assert monobit_pvalue(data) > 0.001

    def test_monobit_rejects_biased(self):
        assert monobit_pvalue(b"\xff" * 1000) < 1e-10

    def test_chisquare_accepts_uniform(self):
        data = np.random.default_rng(24).integers(0, 256, 10**5,
                                                  dtype=np.uint8).tobytes()
        assert byte_chisquare_pvalue(data) > 0.001

    def test_chisquare_rejects_skewed(self):
        data = bytes(np.random.default_rng(25).integers(0, 128, 10**5,
                                                        dtype=np.uint8))
        assert byte_chisquare_pvalue(data) < 1e-10

    def test_minimum_sizes(self):
        with pytest.raises(ValueError):
            monobit_pvalue(b"")
        with pytest.raises(ValueError):
            byte_chisquare_pvalue(b"\x00" * 100)
