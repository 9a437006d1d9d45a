"""Tests for serialization, size accounting, and random-access decode."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probegrid.errors import (
    BadMagic,
    DomainViolation,
    InvariantViolation,
    ModelFileError,
    TruncatedFile,
    UnbakedModel,
    VersionMismatch,
)
from probegrid.model import HyperParams, init_model
from probegrid.model_io import (
    HEADER_BYTES,
    TouchCounter,
    decode_at,
    decode_image,
    decode_pixels,
    decode_rect,
    deserialize,
    pack_indices,
    read_header,
    serialize,
    size_report,
    to_inference,
    unpack_indices,
)
from probegrid.trainer import TrainConfig, fit

TINY = HyperParams(n_f=64, n_c=256, n_p=4, n_levels=4, n_min=4, n_max=16,
                   n_neurons=16)


def trained_inference(seed=0, hyper=TINY, steps=15):
    img = np.random.default_rng(seed).random((16, 16, 3)).astype(np.float32)
    res = fit(img, hyper, TrainConfig(steps=steps, batch_size=128, seed=seed))
    return res.inference


class TestBitPacking:
    def test_spec_example_byte(self):
        entries = np.array([1, 0, 1, 1, 0, 0, 1, 0], dtype=np.uint8)
        packed = pack_indices(entries, n_p=2)
        assert packed == bytes([0b01001101])

    def test_round_trip_various_widths(self):
        rng = np.random.default_rng(0)
        for n_p in [2, 4, 8, 16]:
            for n_c in [1, 5, 8, 33, 256]:
                entries = rng.integers(0, n_p, size=n_c).astype(np.uint8)
                raw = pack_indices(entries, n_p)
                assert len(raw) == (n_c * (n_p.bit_length() - 1) + 7) // 8
                np.testing.assert_array_equal(
                    unpack_indices(raw, n_c, n_p), entries)

    @settings(max_examples=100)
    @given(st.lists(st.integers(0, 15), min_size=1, max_size=64))
    def test_round_trip_property(self, values):
        entries = np.array(values, dtype=np.uint8)
        raw = pack_indices(entries, 16)
        np.testing.assert_array_equal(unpack_indices(raw, len(values), 16),
                                      entries)


class TestSizeReport:
    def test_feature_bytes_formula(self):
        h = HyperParams(n_f=2**6, n_c=2**10, n_p=2, n_levels=16,
                        n_min=16, n_max=512)
        assert size_report(h).feature_bytes == 16 * 64 * 2 * 2

    def test_index_bytes_formula(self):
        h = HyperParams(n_f=2**6, n_c=2**16, n_p=2**4, n_levels=16,
                        n_min=16, n_max=512)
        # All 16 levels are hashed at n_f=64; 4 bits per entry.
        assert size_report(h).index_bytes == 16 * (65536 * 4 // 8)

    def test_dense_levels_omit_index_block(self):
        from probegrid.indexing import build_level_specs
        h = HyperParams(n_f=2**12, n_c=2**10, n_p=2**2, n_levels=16,
                        n_min=16, n_max=512)
        hashed = sum(1 for s in build_level_specs(16, 512, 16, 2**12, 2)
                     if (s.resolution + 1) ** 2 > 2**12)
        assert 0 < hashed < 16
        assert size_report(h).index_bytes == hashed * (1024 * 2 // 8)

    def test_np1_has_no_index_bytes(self):
        h = TINY.with_updates(n_p=1)
        assert size_report(h).index_bytes == 0

    def test_total_matches_file_length(self):
        inf = trained_inference()
        assert len(serialize(inf)) == size_report(TINY).total_bytes


class TestSerializeRoundTrip:
    def test_byte_identical_round_trip(self):
        inf = trained_inference()
        raw = serialize(inf)
        again = serialize(deserialize(raw))
        assert raw == again

    def test_inference_outputs_survive_round_trip(self):
        inf = trained_inference(seed=1)
        clone = deserialize(serialize(inf))
        xs = np.random.default_rng(2).random((64, 2)).astype(np.float32)
        np.testing.assert_array_equal(decode_pixels(inf, xs),
                                      decode_pixels(clone, xs))

    def test_many_random_configs_round_trip(self):
        rng = np.random.default_rng(3)
        for trial in range(50):
            hyper = HyperParams(
                n_f=int(2 ** rng.integers(4, 9)),
                n_c=int(2 ** rng.integers(3, 10)),
                n_p=int(2 ** rng.integers(0, 5)),
                n_levels=int(rng.integers(1, 5)),
                n_min=2,
                n_max=int(2 ** rng.integers(1, 6)),
                n_neurons=int(2 ** rng.integers(2, 6)),
                feature_dim=int(rng.integers(1, 4)),
            )
            if hyper.n_p > hyper.n_f:
                hyper = hyper.with_updates(n_p=hyper.n_f)
            model = init_model(hyper, seed=trial)
            inf = to_inference(model, width=int(rng.integers(1, 64)),
                               height=int(rng.integers(1, 64)))
            raw = serialize(inf)
            assert len(raw) == size_report(hyper).total_bytes
            assert serialize(deserialize(raw)) == raw

    def test_unbaked_model_rejected(self):
        model = init_model(TINY, seed=0)
        model.levels[-1].baked = None
        with pytest.raises(UnbakedModel):
            serialize(model)


class TestDeserializeErrors:
    def test_bad_magic(self):
        raw = bytearray(serialize(trained_inference()))
        raw[:4] = b"NOPE"
        with pytest.raises(BadMagic):
            deserialize(bytes(raw))

    def test_version_mismatch(self):
        raw = bytearray(serialize(trained_inference()))
        raw[4] = 99
        with pytest.raises(VersionMismatch):
            deserialize(bytes(raw))

    def test_truncation_everywhere(self):
        raw = serialize(trained_inference())
        for cut in [0, 3, HEADER_BYTES - 1, HEADER_BYTES, HEADER_BYTES + 17,
                    len(raw) // 2, len(raw) - 1]:
            with pytest.raises(TruncatedFile):
                deserialize(raw[:cut])

    def test_trailing_garbage(self):
        raw = serialize(trained_inference())
        with pytest.raises(InvariantViolation):
            deserialize(raw + b"\x00")

    def test_invalid_hyperparameters_in_header(self):
        raw = bytearray(serialize(trained_inference()))
        raw[20:24] = (3).to_bytes(4, "little")  # n_f = 3, not a power of two
        with pytest.raises(InvariantViolation):
            deserialize(bytes(raw))

    @settings(max_examples=200, deadline=None)
    @given(st.binary(min_size=0, max_size=200))
    def test_fuzzed_headers_never_crash(self, blob):
        try:
            deserialize(blob)
        except ModelFileError:
            pass  # typed errors are the contract; anything else is a crash

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 51), st.binary(min_size=1, max_size=4))
    def test_fuzzed_header_mutations_never_crash(self, offset, patch):
        raw = bytearray(serialize(trained_inference()))
        raw[offset:offset + len(patch)] = patch
        try:
            deserialize(bytes(raw[:len(raw)]))
        except ModelFileError:
            pass


class TestRandomAccessDecode:
    def test_decode_at_matches_full_decode(self):
        inf = trained_inference(seed=4)
        full = decode_image(inf)
        rng = np.random.default_rng(5)
        for _ in range(25):
            r, c = rng.integers(0, 16, size=2)
            x = np.array([(c + 0.5) / 16, (r + 0.5) / 16], dtype=np.float32)
            np.testing.assert_array_equal(decode_at(inf, x), full[r, c])

    def test_rect_decode_equals_crop_of_full(self):
        inf = trained_inference(seed=6)
        full = decode_image(inf)
        rect = decode_rect(inf, (3, 5, 11, 14))
        np.testing.assert_array_equal(rect, full[5:14, 3:11])

    def test_degenerate_rect_rejected(self):
        inf = trained_inference(seed=6)
        for rect in [(3, 5, 3, 14), (0, 0, 17, 4), (-1, 0, 4, 4)]:
            with pytest.raises(DomainViolation):
                decode_rect(inf, rect)

    def test_out_of_range_point_rejected(self):
        inf = trained_inference(seed=6)
        with pytest.raises(DomainViolation):
            decode_at(inf, np.array([1.5, 0.5]))

    def test_touch_count_bound(self):
        # <= L * 2^d * 2 rows per query: one index row and one feature row
        # per corner per level.
        inf = trained_inference(seed=7)
        hyper = inf.hyper
        counter = TouchCounter()
        decode_at(inf, np.array([0.37, 0.83]), counter)
        bound = hyper.n_levels * (2 ** hyper.d) * 2
        assert counter.total <= bound
        assert counter.index_rows <= hyper.n_levels * 2 ** hyper.d

    def test_touch_count_smaller_without_probing(self):
        hyper = TINY.with_updates(n_p=1)
        inf = trained_inference(seed=8, hyper=hyper)
        counter = TouchCounter()
        decode_at(inf, np.array([0.2, 0.4]), counter)
        assert counter.index_rows == 0
        assert counter.feature_rows == hyper.n_levels * 2 ** hyper.d

    def test_concurrent_readers(self):
        from concurrent.futures import ThreadPoolExecutor
        inf = trained_inference(seed=9)
        xs = np.random.default_rng(10).random((8, 16, 2)).astype(np.float32)
        expected = [decode_pixels(inf, x) for x in xs]
        with ThreadPoolExecutor(max_workers=4) as pool:
            got = list(pool.map(lambda x: decode_pixels(inf, x), xs))
        for e, g in zip(expected, got):
            np.testing.assert_array_equal(e, g)


class TestHeaderOnlyRead:
    def test_read_header_uses_prefix_only(self):
        inf = trained_inference(seed=11)
        raw = serialize(inf)
        hyper, w, h = read_header(raw[:HEADER_BYTES])
        assert hyper == inf.hyper
        assert (w, h) == (inf.width, inf.height)
