"""Dataset container: round-trips, determinism, validation, filtering."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xmodal.errors import ConfigError, FormatError, ValidationError
from xmodal.store import (AlignmentScores, DatasetDims, EmbeddingDataset,
                          Segment, SegmentMeta, Split, SynthConfig,
                          datasets_equal, filter_by_alignment,
                          generate_synthetic, load_dataset, manifest_path,
                          save_dataset)


def make_dataset(seed=0, n=5, d_a=6, with_layers=False, with_visual=True,
                 n_patches=3, scores=None):
    rng = np.random.default_rng(seed)
    dims = DatasetDims(
        d_a=d_a if d_a else 0,
        L=2 if with_layers else 0, S=4 if with_layers else 0,
        d_w=3 if with_layers else 0,
        N=n_patches if with_visual else 0,
        has_audio=bool(d_a), has_layers=with_layers, has_visual=with_visual)
    segments = []
    for i in range(n):
        seg_scores = scores[i] if scores else tuple(
            float(np.float32(s)) for s in rng.uniform(0, 10, 5))
        segments.append(Segment(
            meta=SegmentMeta(id=f"seg{i}", scores=AlignmentScores(*seg_scores),
                             split=Split(i % 3)),
            audio=rng.normal(size=d_a).astype(np.float32) if d_a else None,
            layers=rng.normal(size=(2, 4, 3)).astype(np.float32)
            if with_layers else None,
            visual=rng.normal(size=(n_patches + 1, 1024)).astype(np.float32)
            if with_visual else None))
    return EmbeddingDataset(dims=dims, segments=tuple(segments))


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path):
        ds = make_dataset(seed=1, with_layers=True)
        path = tmp_path / "data.aveb"
        save_dataset(ds, path)
        assert datasets_equal(ds, load_dataset(path))

    def test_save_twice_byte_identical(self, tmp_path):
        ds = make_dataset(seed=2)
        p1, p2 = tmp_path / "a.aveb", tmp_path / "b.aveb"
        save_dataset(ds, p1)
        save_dataset(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert (tmp_path / "a.aveb.manifest.jsonl").read_bytes() == \
               (tmp_path / "b.aveb.manifest.jsonl").read_bytes()

    def test_manifest_written(self, tmp_path):
        ds = make_dataset(seed=3, n=2)
        path = tmp_path / "data.aveb"
        save_dataset(ds, path)
        lines = open(manifest_path(path)).read().strip().split("\n")
        assert len(lines) == 3  # header + one per segment

    def test_header_dims_preserved(self, tmp_path):
        # Grid rows: CLS + the standard 576 patches.
        ds = make_dataset(seed=4, n=2, d_a=512, n_patches=576)
        path = tmp_path / "n576.aveb"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert loaded.dims.N == 576 and loaded.dims.d_a == 512
        assert loaded.segments[0].visual.shape == (577, 1024)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8),
           d_a=st.integers(1, 16),
           with_layers=st.booleans(), with_visual=st.booleans())
    def test_round_trip_property(self, tmp_path_factory, seed, n, d_a,
                                 with_layers, with_visual):
        ds = make_dataset(seed=seed, n=n, d_a=d_a, with_layers=with_layers,
                          with_visual=with_visual, n_patches=2)
        path = tmp_path_factory.mktemp("rt") / "ds.aveb"
        save_dataset(ds, path)
        assert datasets_equal(ds, load_dataset(path))


class TestValidation:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.aveb"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(FormatError) as info:
            load_dataset(path)
        assert info.value.offset == 0

    def test_bad_version(self, tmp_path):
        ds = make_dataset()
        path = tmp_path / "v.aveb"
        save_dataset(ds, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_dataset(path)

    def test_truncated_record(self, tmp_path):
        ds = make_dataset()
        path = tmp_path / "t.aveb"
        save_dataset(ds, path)
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(FormatError):
            load_dataset(path)

    def test_audio_length_mismatch_rejected(self):
        rng = np.random.default_rng(0)
        dims = DatasetDims(d_a=4, has_audio=True)
        with pytest.raises(ValidationError):
            EmbeddingDataset(dims=dims, segments=(Segment(
                meta=SegmentMeta("x", AlignmentScores(5, 5, 5, 5, 5),
                                 Split.TRAIN),
                audio=rng.normal(size=7).astype(np.float32)),))

    def test_non_finite_rejected(self):
        dims = DatasetDims(d_a=2, has_audio=True)
        with pytest.raises(ValidationError):
            EmbeddingDataset(dims=dims, segments=(Segment(
                meta=SegmentMeta("x", AlignmentScores(5, 5, 5, 5, 5),
                                 Split.TRAIN),
                audio=np.array([1.0, np.nan], dtype=np.float32)),))

    def test_duplicate_ids_rejected(self):
        rng = np.random.default_rng(0)
        dims = DatasetDims(d_a=2, has_audio=True)
        seg = Segment(
            meta=SegmentMeta("dup", AlignmentScores(5, 5, 5, 5, 5),
                             Split.TRAIN),
            audio=rng.normal(size=2).astype(np.float32))
        with pytest.raises(ValidationError):
            EmbeddingDataset(dims=dims, segments=(seg, seg))

    def test_score_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            AlignmentScores(11.0, 5, 5, 5, 5).validate()

    def test_save_refuses_invalid(self, tmp_path):
        ds = make_dataset(seed=5)
        # Mutate an array after construction; save must re-check.
        ds.segments[0].audio[0] = np.inf
        path = tmp_path / "refused.aveb"
        with pytest.raises(ValidationError):
            save_dataset(ds, path)
        assert not path.exists()

    def test_corrupt_byte_always_format_error(self, tmp_path):
        """Any single flipped byte is caught by the content checksum."""
        ds = make_dataset(seed=6, n=3, with_layers=True)
        path = tmp_path / "fuzz.aveb"
        save_dataset(ds, path)
        original = path.read_bytes()
        rng = np.random.default_rng(99)
        for _ in range(40):
            pos = int(rng.integers(0, len(original)))
            corrupted = bytearray(original)
            corrupted[pos] ^= 1 << int(rng.integers(0, 8))
            path.write_bytes(bytes(corrupted))
            with pytest.raises(FormatError):
                load_dataset(path)


class TestSynthetic:
    def test_zero_noise_identity_map(self):
        """d_a = 1024 uses the identity mix, so z_a equals the CLS exactly."""
        ds = generate_synthetic(SynthConfig(n_segments=3, d_a=1024, N=2,
                                            noise_level=0.0, seed=5))
        for seg in ds.segments:
            np.testing.assert_array_equal(
                seg.audio, seg.visual[0].astype(np.float64).astype(np.float32))

    def test_same_seed_bit_identical(self, tmp_path):
        cfg = SynthConfig(n_segments=10, d_a=16, N=2, noise_level=0.4, seed=21)
        a, b = generate_synthetic(cfg), generate_synthetic(cfg)
        assert datasets_equal(a, b)
        pa, pb = tmp_path / "a.aveb", tmp_path / "b.aveb"
        save_dataset(a, pa)
        save_dataset(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_different_seed_differs(self):
        base = SynthConfig(n_segments=10, d_a=16, N=0, noise_level=0.4, seed=1)
        other = SynthConfig(n_segments=10, d_a=16, N=0, noise_level=0.4, seed=2)
        assert not datasets_equal(generate_synthetic(base),
                                  generate_synthetic(other))

    def test_noise_level_out_of_range(self):
        with pytest.raises(ConfigError):
            generate_synthetic(SynthConfig(n_segments=1, noise_level=1.5))

    def test_split_assignment(self):
        ds = generate_synthetic(SynthConfig(n_segments=100, d_a=4, N=0, seed=0))
        counts = {s: len(ds.subset(s)) for s in Split}
        assert counts[Split.TRAIN] == 80
        assert counts[Split.VAL] == 10
        assert counts[Split.TEST] == 10


class TestFilter:
    def test_vacuous_threshold_keeps_all(self):
        ds = make_dataset(seed=7, scores=[(5, 6, 7, 8, 9)] * 5)
        assert datasets_equal(filter_by_alignment(ds, 0.0), ds)

    def test_threshold_eight_semantics(self):
        ds = make_dataset(seed=8, n=2,
                          scores=[(9, 9, 9, 9, 9), (7, 7, 7, 7, 7)])
        kept = filter_by_alignment(ds, 8.0)
        assert [s.meta.id for s in kept.segments] == ["seg0"]

    def test_strict_inequality_at_boundary(self):
        ds = make_dataset(seed=9, n=1, scores=[(8, 8, 8, 8, 8)])
        assert len(filter_by_alignment(ds, 8.0)) == 0

    def test_matches_brute_force(self):
        ds = make_dataset(seed=10, n=30)
        threshold = 5.0
        kept = filter_by_alignment(ds, threshold)
        expected = [s for s in ds.segments
                    if sum(s.meta.scores.as_tuple()) / 5.0 > threshold]
        assert list(kept.segments) == expected

    def test_idempotent(self):
        ds = make_dataset(seed=11, n=30)
        once = filter_by_alignment(ds, 6.0)
        twice = filter_by_alignment(once, 6.0)
        assert datasets_equal(once, twice)

    def test_threshold_out_of_range(self):
        with pytest.raises(ConfigError):
            filter_by_alignment(make_dataset(), 12.0)
