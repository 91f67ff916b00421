"""STFT feature extraction and the reversible decibel normalization.

Spectrograms are single-channel magnitude arrays of shape
``(window // 2 + 1, frames)`` where framing pads only the tail of the
signal with zeros. The unit-range transform maps log-magnitudes onto
``[-1, 1]`` (the generator's output range) and keeps the affine endpoints
so it can be inverted.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import get_window

from .dataset import EventSignal
from .exceptions import ConfigurationError, InputError, ShapeError

ALLOWED_WINDOWS = (64, 128, 256, 512)
LOG_EPS = 1e-10
DEFAULT_FLOOR_DB = -80.0

SCALE_LINEAR = "linear_magnitude"
SCALE_LOG = "log_magnitude"
SCALE_UNIT = "normalized_unit"
_SCALES = (SCALE_LINEAR, SCALE_LOG, SCALE_UNIT)


@dataclass(frozen=True)
class StftParams:
    """Transform parameters; hop length is pinned to half the window."""

    window_size: int
    overlap_fraction: float = 0.5
    window_function: str = "hann"

    def __post_init__(self) -> None:
        if self.window_size not in ALLOWED_WINDOWS:
            raise ConfigurationError(
                f"window_size must be one of {ALLOWED_WINDOWS}, got {self.window_size}"
            )
        if self.overlap_fraction != 0.5:
            raise ConfigurationError(
                f"only 50% overlap is supported, got {self.overlap_fraction}"
            )
        if self.window_function != "hann":
            raise ConfigurationError(
                f"only the Hann window is supported, got {self.window_function!r}"
            )

    @property
    def hop(self) -> int:
        return self.window_size // 2

    @property
    def freq_bins(self) -> int:
        return self.window_size // 2 + 1


def frame_count(n_samples: int, params: StftParams) -> int:
    """Number of frames for a signal of ``n_samples``; the tail frame may be
    zero-padded, the head never is."""
    if n_samples < params.window_size:
        raise InputError(
            f"signal of {n_samples} samples is shorter than window {params.window_size}"
        )
    return math.ceil((n_samples - params.window_size) / params.hop) + 1


def expected_shape(n_samples: int, params: StftParams) -> tuple[int, int]:
    return params.freq_bins, frame_count(n_samples, params)


@dataclass
class SpectrogramTensor:
    """A magnitude spectrogram plus the metadata needed to invert it."""

    values: np.ndarray
    params: StftParams
    scale: str = SCALE_LINEAR
    floor_db: float | None = None
    peak_db: float | None = None
    event_id: str = ""
    event_class: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"spectrogram must be 2-D, got shape {self.values.shape}")
        if self.values.shape[0] != self.params.freq_bins:
            raise ShapeError(
                f"expected {self.params.freq_bins} frequency bins for window "
                f"{self.params.window_size}, got {self.values.shape[0]}"
            )
        if self.scale not in _SCALES:
            raise ConfigurationError(f"unknown scale {self.scale!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def stft(event: EventSignal | np.ndarray, params: StftParams) -> SpectrogramTensor:
    """Magnitude STFT with a periodic Hann window and tail-only zero padding."""
    if isinstance(event, EventSignal):
        samples = event.samples
        event_id = event.source_id
        event_class = event.event_class.value
    else:
        samples = np.asarray(event, dtype=np.float64)
        event_id = ""
        event_class = ""
        if samples.ndim != 1:
            raise InputError(f"signal must be 1-D, got shape {samples.shape}")
    w = params.window_size
    hop = params.hop
    frames = frame_count(samples.size, params)
    window = get_window("hann", w, fftbins=True)
    padded = np.zeros((frames - 1) * hop + w)
    padded[: samples.size] = samples
    values = np.empty((params.freq_bins, frames))
    for i in range(frames):
        segment = padded[i * hop : i * hop + w]
        values[:, i] = np.abs(np.fft.rfft(segment * window))
    return SpectrogramTensor(
        values=values,
        params=params,
        scale=SCALE_LINEAR,
        event_id=event_id,
        event_class=event_class,
    )


def to_unit_range(
    spec: SpectrogramTensor, floor_db: float = DEFAULT_FLOOR_DB
) -> SpectrogramTensor:
    """Map a linear-magnitude spectrogram onto ``[-1, 1]`` via clipped decibels.

    The decibel image is floored at ``floor_db`` and rescaled affinely so the
    floor maps to -1 and the per-spectrogram peak maps to +1; both endpoints
    are stored for :func:`from_unit_range`.
    """
    if spec.scale != SCALE_LINEAR:
        raise InputError(f"expected a {SCALE_LINEAR} spectrogram, got {spec.scale}")
    if floor_db >= 0.0:
        raise ConfigurationError(f"floor_db must be negative, got {floor_db}")
    db = 20.0 * np.log10(spec.values + LOG_EPS)
    db = np.maximum(db, floor_db)
    peak_db = float(db.max())
    if peak_db <= floor_db:
        unit = np.full_like(db, -1.0)
        peak_db = floor_db
    else:
        unit = 2.0 * (db - floor_db) / (peak_db - floor_db) - 1.0
    return replace(
        spec, values=unit, scale=SCALE_UNIT, floor_db=float(floor_db), peak_db=peak_db
    )


def from_unit_range(spec: SpectrogramTensor) -> SpectrogramTensor:
    """Invert :func:`to_unit_range` back to linear magnitudes."""
    if spec.scale != SCALE_UNIT:
        raise InputError(f"expected a {SCALE_UNIT} spectrogram, got {spec.scale}")
    if spec.floor_db is None or spec.peak_db is None:
        raise InputError("normalized spectrogram is missing its affine endpoints")
    db = spec.floor_db + (spec.values + 1.0) * 0.5 * (spec.peak_db - spec.floor_db)
    values = np.maximum(10.0 ** (db / 20.0) - LOG_EPS, 0.0)
    return replace(spec, values=values, scale=SCALE_LINEAR)


def save_spectrogram(path: Path, spec: SpectrogramTensor) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        values=spec.values,
        window_size=spec.params.window_size,
        scale=spec.scale,
        floor_db=np.nan if spec.floor_db is None else spec.floor_db,
        peak_db=np.nan if spec.peak_db is None else spec.peak_db,
        event_id=spec.event_id,
        event_class=spec.event_class,
    )


def load_spectrogram(path: Path) -> SpectrogramTensor:
    path = Path(path)
    if not path.exists():
        raise InputError(f"spectrogram file not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        floor_db = float(data["floor_db"])
        peak_db = float(data["peak_db"])
        return SpectrogramTensor(
            values=data["values"],
            params=StftParams(window_size=int(data["window_size"])),
            scale=str(data["scale"]),
            floor_db=None if math.isnan(floor_db) else floor_db,
            peak_db=None if math.isnan(peak_db) else peak_db,
            event_id=str(data["event_id"]),
            event_class=str(data["event_class"]),
        )


FEATURE_MANIFEST_COLUMNS = (
    "event_id",
    "event_class",
    "split",
    "window_size",
    "floor_db",
    "peak_db",
    "path",
)


def write_feature_set(
    out_dir: Path,
    specs: Sequence[SpectrogramTensor],
    splits: dict[str, str],
) -> Path:
    """Persist normalized spectrograms plus a manifest carrying their split."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for spec in specs:
        if not spec.event_id:
            raise InputError("feature-set spectrograms need event ids")
        fname = f"{spec.event_id}.npz"
        save_spectrogram(out_dir / fname, spec)
        rows.append(
            {
                "event_id": spec.event_id,
                "event_class": spec.event_class,
                "split": splits.get(spec.event_id, ""),
                "window_size": spec.params.window_size,
                "floor_db": "" if spec.floor_db is None else spec.floor_db,
                "peak_db": "" if spec.peak_db is None else spec.peak_db,
                "path": fname,
            }
        )
    manifest_path = out_dir / "features.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FEATURE_MANIFEST_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: str(row[k]) for k in FEATURE_MANIFEST_COLUMNS})
    return manifest_path


def read_feature_manifest(feature_dir: Path) -> list[dict]:
    manifest_path = Path(feature_dir) / "features.csv"
    if not manifest_path.exists():
        raise InputError(f"feature manifest not found: {manifest_path}")
    with open(manifest_path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_feature_split(
    feature_dir: Path,
    event_class: str,
    split: str,
    loader=None,
) -> list[SpectrogramTensor]:
    """Load every spectrogram of one class and split, in manifest order.

    ``loader`` exists so callers can audit exactly which files a consumer
    touches (training must never read validation rows); it resolves at call
    time so module-level instrumentation is honored.
    """
    if loader is None:
        loader = load_spectrogram
    feature_dir = Path(feature_dir)
    rows = read_feature_manifest(feature_dir)
    out = []
    for row in rows:
        if row["event_class"] != str(event_class) or row["split"] != split:
            continue
        out.append(loader(feature_dir / row["path"]))
    if not out:
        raise InputError(
            f"no {split!r} spectrograms for class {event_class!r} in {feature_dir}"
        )
    return out
