import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foleygen.dataset import (
    AudioClip,
    CategoryTable,
    DEFAULT_CATEGORY_NAMES,
    catalog_report,
    effective_length,
    full_length_fraction,
    length_histogram,
    load_clip,
    scan_dataset,
    write_histogram_csv,
    write_report,
    write_wav,
)
from foleygen.errors import DatasetError

from conftest import make_corpus, tiny_config

RATE = 22050
FULL = 88200


def _write(path, samples, rate=RATE):
    write_wav(path, samples, rate)
    return path


class TestCategoryTable:
    def test_default_has_seven_categories(self):
        table = CategoryTable.default()
        assert len(table) == 7
        assert table.names == DEFAULT_CATEGORY_NAMES

    def test_name_lookup_ignores_separators_and_case(self):
        table = CategoryTable.default()
        assert table.id_of("dog_bark") == 0
        assert table.id_of("Sneeze/Cough") == 6

    def test_bad_ids_rejected(self):
        with pytest.raises(DatasetError):
            CategoryTable(((0, "a"), (2, "b")))
        with pytest.raises(DatasetError):
            CategoryTable(((0, "a"), (1, "a")))


class TestLoadClip:
    def test_full_length_clip_loads_as_is(self, tmp_path):
        rng = np.random.default_rng(0)
        samples = (rng.uniform(-0.5, 0.5, FULL)).astype(np.float32)
        path = _write(tmp_path / "a.wav", samples)
        clip = load_clip(path, RATE)
        assert len(clip.samples) == FULL
        assert np.abs(clip.samples).max() <= 1.0

    def test_short_clip_zero_padded_to_four_seconds(self, tmp_path):
        samples = np.ones(FULL // 2, dtype=np.float32) * 0.25
        path = _write(tmp_path / "b.wav", samples)
        clip = load_clip(path, RATE)
        assert len(clip.samples) == FULL
        assert np.all(clip.samples[FULL // 2 :] == 0)
        assert np.all(clip.samples[: FULL // 2] != 0)

    def test_long_clip_truncated_with_warning(self, tmp_path):
        path = _write(tmp_path / "c.wav", np.ones(FULL + 100, dtype=np.float32) * 0.1)
        with pytest.warns(UserWarning, match="truncated"):
            clip = load_clip(path, RATE)
        assert len(clip.samples) == FULL

    def test_wrong_sample_rate_rejected(self, tmp_path):
        path = _write(tmp_path / "d.wav", np.zeros(1000, dtype=np.float32), rate=44100)
        with pytest.raises(DatasetError, match="sample rate"):
            load_clip(path, RATE)

    def test_multichannel_rejected(self, tmp_path):
        from scipy.io import wavfile

        stereo = np.zeros((1000, 2), dtype=np.int16)
        wavfile.write(str(tmp_path / "e.wav"), RATE, stereo)
        with pytest.raises(DatasetError, match="mono"):
            load_clip(tmp_path / "e.wav", RATE)

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "f.wav"
        path.write_bytes(b"RIFFgarbage not a wav")
        with pytest.raises(DatasetError, match="decode"):
            load_clip(path, RATE)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DatasetError, match="no such file"):
            load_clip(tmp_path / "missing.wav", RATE)

    def test_loading_is_idempotent(self, tmp_path):
        rng = np.random.default_rng(1)
        path = _write(tmp_path / "g.wav", rng.uniform(-1, 1, 5000).astype(np.float32) * 0.9)
        a = load_clip(path, RATE)
        b = load_clip(path, RATE)
        assert np.array_equal(a.samples, b.samples)

    def test_padding_preserves_leading_samples(self, tmp_path):
        rng = np.random.default_rng(2)
        original = rng.uniform(-0.9, 0.9, 3000).astype(np.float32)
        path = _write(tmp_path / "h.wav", original)
        clip = load_clip(path, RATE)
        # PCM16 round trip: write scales by 32767, read divides by 32768
        assert np.abs(clip.samples[:3000] - original).max() <= 1.5 / 32768


class TestEffectiveLength:
    def test_last_nonzero_at_index_44099_gives_two_seconds(self):
        samples = np.zeros(FULL, dtype=np.float32)
        samples[:44100] = 0.5
        clip = AudioClip(samples, RATE)
        assert effective_length(clip) == pytest.approx(2.0)

    def test_all_zero_clip_has_zero_length(self):
        clip = AudioClip(np.zeros(FULL, dtype=np.float32), RATE)
        assert effective_length(clip) == 0.0

    def test_nonzero_final_sample_gives_full_length(self):
        samples = np.zeros(FULL, dtype=np.float32)
        samples[-1] = 0.1
        clip = AudioClip(samples, RATE)
        assert effective_length(clip) == pytest.approx(4.0)

    def test_threshold_skips_quiet_tail(self):
        samples = np.zeros(FULL, dtype=np.float32)
        samples[:22050] = 0.5
        samples[22050:44100] = 1e-4
        clip = AudioClip(samples, RATE)
        assert effective_length(clip, threshold=1e-3) == pytest.approx(1.0)
        assert effective_length(clip, threshold=0.0) == pytest.approx(2.0)


class TestScanDataset:
    def test_counts_per_category(self, tmp_path):
        cfg = tiny_config()
        make_corpus(tmp_path, cfg, per_category=2, names=DEFAULT_CATEGORY_NAMES)
        catalog = scan_dataset(
            tmp_path, expected_rate=cfg.sample_rate, clip_seconds=cfg.clip_seconds
        )
        assert catalog.clips_per_category == {i: 2 for i in range(7)}
        assert catalog.total == 14

    def test_empty_directory_gives_zero_counts(self, tmp_path):
        catalog = scan_dataset(tmp_path)
        assert catalog.total == 0
        assert all(v == 0 for v in catalog.clips_per_category.values())

    def test_single_category_file(self, tmp_path):
        (tmp_path / "DogBark").mkdir()
        _write(tmp_path / "DogBark" / "bark.wav", np.ones(1000, dtype=np.float32) * 0.2)
        catalog = scan_dataset(tmp_path)
        assert catalog.clips_per_category[0] == 1
        assert sum(catalog.clips_per_category.values()) == 1

    def test_unknown_category_directory_rejected_listing_files(self, tmp_path):
        (tmp_path / "Thunder").mkdir()
        _write(tmp_path / "Thunder" / "boom.wav", np.ones(500, dtype=np.float32) * 0.3)
        with pytest.raises(DatasetError, match="boom.wav"):
            scan_dataset(tmp_path)

    def test_manifest_override(self, tmp_path):
        _write(tmp_path / "x1.wav", np.ones(400, dtype=np.float32) * 0.1)
        _write(tmp_path / "x2.wav", np.ones(400, dtype=np.float32) * 0.1)
        manifest = tmp_path / "labels.csv"
        manifest.write_text("filename,category_id\nx1.wav,3\nx2.wav,5\n")
        catalog = scan_dataset(tmp_path, manifest=manifest)
        assert catalog.clips_per_category[3] == 1
        assert catalog.clips_per_category[5] == 1
        assert catalog.total == 2

    def test_manifest_with_unknown_id_rejected(self, tmp_path):
        _write(tmp_path / "y.wav", np.ones(400, dtype=np.float32) * 0.1)
        manifest = tmp_path / "labels.csv"
        manifest.write_text("filename,category_id\ny.wav,9\n")
        with pytest.raises(DatasetError, match="y.wav"):
            scan_dataset(tmp_path, manifest=manifest)

    def test_total_equals_sum_of_counts(self, tmp_path):
        cfg = tiny_config()
        make_corpus(tmp_path, cfg, per_category=3, names=("DogBark", "Rain"))
        # only two of the seven categories are populated
        catalog = scan_dataset(
            tmp_path, expected_rate=cfg.sample_rate, clip_seconds=cfg.clip_seconds
        )
        assert catalog.total == sum(catalog.clips_per_category.values()) == 6


class TestHistogram:
    def _catalog(self, lengths_by_cat, clip_seconds=4.0):
        from foleygen.dataset import DatasetCatalog

        counts = {cid: len(v) for cid, v in lengths_by_cat.items()}
        return DatasetCatalog(
            clips_per_category=counts,
            total=sum(counts.values()),
            effective_lengths=lengths_by_cat,
            clip_seconds=clip_seconds,
        )

    def test_single_full_length_clip_lands_in_final_bin(self):
        catalog = self._catalog({0: [4.0]})
        _, hists = length_histogram(catalog, bins=8)
        assert hists[0][-1] == 1
        assert hists[0][:-1].sum() == 0

    def test_hand_binned_pair(self):
        # bins over [0,4) are left-closed: 1.0 -> [1,2), 3.0 -> [3,4]
        catalog = self._catalog({0: [1.0, 3.0]})
        _, hists = length_histogram(catalog, bins=4)
        assert list(hists[0]) == [0, 1, 0, 1]

    def test_bins_must_be_positive(self):
        catalog = self._catalog({0: [1.0]})
        with pytest.raises(DatasetError):
            length_histogram(catalog, bins=0)

    @given(
        st.lists(st.floats(min_value=0.0, max_value=4.0), min_size=1, max_size=40),
        st.integers(min_value=1, max_value=32),
    )
    @settings(max_examples=50, deadline=None)
    def test_mass_conservation(self, lengths, bins):
        catalog = self._catalog({0: lengths})
        _, hists = length_histogram(catalog, bins=bins)
        assert hists[0].sum() == len(lengths)

    def test_full_length_fraction(self):
        catalog = self._catalog({0: [4.0, 2.0], 1: [4.0, 4.0]})
        assert full_length_fraction(catalog) == pytest.approx(0.75)


class TestReports:
    def test_report_json_roundtrip(self, tmp_path):
        cfg = tiny_config()
        make_corpus(tmp_path / "data", cfg, per_category=2, names=DEFAULT_CATEGORY_NAMES)
        catalog = scan_dataset(
            tmp_path / "data", expected_rate=cfg.sample_rate, clip_seconds=cfg.clip_seconds
        )
        out = tmp_path / "report.json"
        write_report(catalog, out)
        loaded = json.loads(out.read_text())
        assert loaded["total"] == 14
        assert set(loaded["categories"]) == set(DEFAULT_CATEGORY_NAMES)
        assert 0.0 <= loaded["fraction_full_length_exact"] <= 1.0

    def test_histogram_csv(self, tmp_path):
        cfg = tiny_config()
        make_corpus(tmp_path / "data", cfg, per_category=1, names=DEFAULT_CATEGORY_NAMES)
        catalog = scan_dataset(
            tmp_path / "data", expected_rate=cfg.sample_rate, clip_seconds=cfg.clip_seconds
        )
        out = tmp_path / "hist.csv"
        write_histogram_csv(catalog, 10, out)
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 1 + 7 * 10
