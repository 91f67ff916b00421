"""STFT framing, magnitudes, reversible unit normalization, feature io."""

import numpy as np
import pytest

from stftgan.dataset import EVENT_LENGTH, EventClass, EventSignal
from stftgan.exceptions import ConfigurationError, InputError, ShapeError
from stftgan.features import (
    ALLOWED_WINDOWS,
    DEFAULT_FLOOR_DB,
    SCALE_LINEAR,
    SCALE_UNIT,
    SpectrogramTensor,
    StftParams,
    expected_shape,
    frame_count,
    from_unit_range,
    load_feature_split,
    load_spectrogram,
    save_spectrogram,
    stft,
    to_unit_range,
    write_feature_set,
)

EXPECTED_SHAPES = {64: (33, 31), 128: (65, 15), 256: (129, 7), 512: (257, 3)}


def _hann_periodic(w):
    n = np.arange(w)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / w)


class TestFraming:
    @pytest.mark.parametrize("window", ALLOWED_WINDOWS)
    def test_shape_contract(self, window, rng):
        params = StftParams(window_size=window)
        spec = stft(rng.uniform(-1, 1, EVENT_LENGTH), params)
        assert spec.shape == EXPECTED_SHAPES[window]
        assert expected_shape(EVENT_LENGTH, params) == EXPECTED_SHAPES[window]

    def test_frame_count_arithmetic(self):
        params = StftParams(window_size=128)
        # ceil((n - w) / hop) + 1 with hop = w / 2
        assert frame_count(128, params) == 1
        assert frame_count(129, params) == 2
        assert frame_count(192, params) == 2
        assert frame_count(193, params) == 3
        with pytest.raises(InputError):
            frame_count(127, params)

    def test_head_is_never_padded(self, rng):
        # frame 0 must be the raw signal head, not a half-window lead-in
        params = StftParams(window_size=128)
        x = rng.uniform(-1, 1, EVENT_LENGTH)
        spec = stft(x, params)
        manual = np.abs(np.fft.rfft(x[:128] * _hann_periodic(128)))
        np.testing.assert_allclose(spec.values[:, 0], manual, atol=1e-12)

    def test_tail_zero_padding(self):
        # 1000 samples at window 128 end mid-frame; the final frame sees the
        # remaining 40 real samples then zeros
        params = StftParams(window_size=128)
        x = np.ones(EVENT_LENGTH)
        spec = stft(x, params)
        tail = np.zeros(128)
        tail[: EVENT_LENGTH - 14 * 64] = 1.0
        manual = np.abs(np.fft.rfft(tail * _hann_periodic(128)))
        np.testing.assert_allclose(spec.values[:, -1], manual, atol=1e-12)


class TestStftValues:
    def test_matches_naive_dft(self, rng):
        # oracle: direct O(N^2) DFT-matrix evaluation per frame
        params = StftParams(window_size=64)
        x = rng.uniform(-1, 1, EVENT_LENGTH)
        spec = stft(x, params)
        w, hop = 64, 32
        win = _hann_periodic(w)
        n = np.arange(w)
        padded = np.zeros(30 * hop + w)
        padded[:EVENT_LENGTH] = x
        for frame in range(spec.shape[1]):
            segment = padded[frame * hop : frame * hop + w] * win
            for k in range(spec.shape[0]):
                coeff = np.sum(segment * np.exp(-2j * np.pi * k * n / w))
                assert abs(spec.values[k, frame] - abs(coeff)) < 1e-6

    def test_parseval_per_frame(self, rng):
        params = StftParams(window_size=128)
        x = rng.uniform(-1, 1, EVENT_LENGTH)
        spec = stft(x, params)
        win = _hann_periodic(128)
        padded = np.zeros(14 * 64 + 128)
        padded[:EVENT_LENGTH] = x
        for frame in range(spec.shape[1]):
            segment = padded[frame * 64 : frame * 64 + 128] * win
            mags = spec.values[:, frame]
            full_energy = mags[0] ** 2 + 2.0 * np.sum(mags[1:-1] ** 2) + mags[-1] ** 2
            time_energy = np.sum(segment**2)
            assert full_energy / 128.0 == pytest.approx(time_energy, rel=1e-6)

    def test_bin_centered_sinusoid_dominates_its_row(self):
        params = StftParams(window_size=128)
        k0 = 16  # 12 kHz at 96 kHz / 128-point window
        t = np.arange(EVENT_LENGTH)
        x = np.sin(2.0 * np.pi * k0 * t / 128)
        spec = stft(x, params)
        for frame in range(spec.shape[1]):
            assert int(np.argmax(spec.values[:, frame])) == k0

    def test_event_metadata_carried(self, small_corpus):
        spec = stft(small_corpus[0], StftParams(window_size=128))
        assert spec.event_id == small_corpus[0].source_id
        assert spec.event_class == small_corpus[0].event_class.value
        assert spec.scale == SCALE_LINEAR


class TestUnitRange:
    def test_roundtrip_above_floor(self, rng):
        params = StftParams(window_size=128)
        values = rng.uniform(1e-3, 10.0, EXPECTED_SHAPES[128])
        spec = SpectrogramTensor(values=values, params=params)
        back = from_unit_range(to_unit_range(spec))
        np.testing.assert_allclose(back.values, values, rtol=1e-6)

    def test_endpoints(self, rng):
        params = StftParams(window_size=128)
        values = rng.uniform(0.5, 2.0, EXPECTED_SHAPES[128])
        unit = to_unit_range(SpectrogramTensor(values=values, params=params))
        assert unit.scale == SCALE_UNIT
        assert unit.values.max() == pytest.approx(1.0, abs=1e-12)
        assert unit.values.min() >= -1.0
        assert unit.floor_db == DEFAULT_FLOOR_DB
        assert unit.peak_db == pytest.approx(20.0 * np.log10(values.max() + 1e-10))

    def test_all_zero_maps_to_floor(self):
        params = StftParams(window_size=128)
        unit = to_unit_range(
            SpectrogramTensor(values=np.zeros(EXPECTED_SHAPES[128]), params=params)
        )
        assert np.all(unit.values == -1.0)
        assert unit.peak_db == unit.floor_db

    def test_monotone_in_magnitude(self):
        params = StftParams(window_size=128)
        values = np.ones(EXPECTED_SHAPES[128]) * 1e-3
        values[0, 0], values[1, 0], values[2, 0] = 0.01, 0.1, 1.0
        unit = to_unit_range(SpectrogramTensor(values=values, params=params))
        assert unit.values[0, 0] < unit.values[1, 0] < unit.values[2, 0] == 1.0

    def test_scale_guards(self, rng):
        params = StftParams(window_size=128)
        linear = SpectrogramTensor(
            values=rng.uniform(0, 1, EXPECTED_SHAPES[128]), params=params
        )
        unit = to_unit_range(linear)
        with pytest.raises(InputError):
            to_unit_range(unit)  # already normalized
        with pytest.raises(InputError):
            from_unit_range(linear)  # not normalized yet
        with pytest.raises(ConfigurationError):
            to_unit_range(linear, floor_db=10.0)
        missing = SpectrogramTensor(
            values=unit.values, params=params, scale=SCALE_UNIT
        )
        with pytest.raises(InputError):
            from_unit_range(missing)


class TestParamsValidation:
    def test_window_whitelist(self):
        with pytest.raises(ConfigurationError):
            StftParams(window_size=100)

    def test_fixed_overlap_and_window_function(self):
        with pytest.raises(ConfigurationError):
            StftParams(window_size=128, overlap_fraction=0.75)
        with pytest.raises(ConfigurationError):
            StftParams(window_size=128, window_function="hamming")

    def test_derived_quantities(self):
        params = StftParams(window_size=256)
        assert params.hop == 128
        assert params.freq_bins == 129

    def test_tensor_bin_check(self):
        with pytest.raises(ShapeError):
            SpectrogramTensor(values=np.zeros((64, 15)), params=StftParams(window_size=128))
        with pytest.raises(ShapeError):
            SpectrogramTensor(values=np.zeros(65), params=StftParams(window_size=128))


class TestFeatureIo:
    def test_spectrogram_roundtrip(self, tmp_path, trimmer_unit_w128):
        spec = trimmer_unit_w128[0]
        path = tmp_path / "one.npz"
        save_spectrogram(path, spec)
        back = load_spectrogram(path)
        np.testing.assert_array_equal(back.values, spec.values)
        assert back.params.window_size == 128
        assert back.scale == spec.scale
        assert back.floor_db == spec.floor_db
        assert back.peak_db == spec.peak_db
        assert back.event_id == spec.event_id
        assert back.event_class == spec.event_class

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            load_spectrogram(tmp_path / "absent.npz")

    def test_feature_set_split_loading(self, tmp_path, trimmer_unit_w128):
        splits = {
            spec.event_id: ("val" if i % 4 == 0 else "train")
            for i, spec in enumerate(trimmer_unit_w128)
        }
        write_feature_set(tmp_path, trimmer_unit_w128, splits)
        train = load_feature_split(tmp_path, EventClass.TRIMMER.value, "train")
        val = load_feature_split(tmp_path, EventClass.TRIMMER.value, "val")
        assert len(train) + len(val) == len(trimmer_unit_w128)
        assert {s.event_id for s in train}.isdisjoint({s.event_id for s in val})
        assert all(splits[s.event_id] == "train" for s in train)
        with pytest.raises(InputError):
            load_feature_split(tmp_path, EventClass.HAMMER.value, "train")

    def test_feature_set_requires_ids(self, tmp_path):
        nameless = SpectrogramTensor(
            values=np.zeros(EXPECTED_SHAPES[128]), params=StftParams(window_size=128)
        )
        with pytest.raises(InputError):
            write_feature_set(tmp_path, [nameless], {})
