"""Event containers, ingestion, normalization, and the train/validation split.

An event is a fixed-length mono snippet cut from a longer recording (or
synthesized directly). Everything downstream operates on peak-normalized
events grouped by class, so the split logic lives here next to the
containers it partitions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile

from .exceptions import ConfigurationError, InputError

SAMPLE_RATE = 96_000
EVENT_LENGTH = 1_000

VALID_CHANNELS = ("left", "right", "mono")

MANIFEST_COLUMNS = ("event_id", "event_class", "channel", "source_id", "split")


class EventClass(str, Enum):
    """The four acoustic event classes the benchmark distinguishes."""

    BREAKAGE = "breakage"
    HAMMER = "hammer"
    TRIMMER = "trimmer"
    TRAFFIC = "traffic"

    def __str__(self) -> str:  # csv/paths want the bare value
        return self.value


#: Class order used everywhere an index is needed (seeding, manifests).
CLASS_ORDER = (
    EventClass.BREAKAGE,
    EventClass.HAMMER,
    EventClass.TRIMMER,
    EventClass.TRAFFIC,
)


@dataclass
class EventSignal:
    """One fixed-length acoustic event.

    samples are float64 and, after :func:`normalize`, peak amplitude is 1.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    event_class: EventClass = EventClass.BREAKAGE
    channel: str = "mono"
    source_id: str = ""

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InputError(f"event samples must be 1-D, got shape {self.samples.shape}")
        if self.samples.size != EVENT_LENGTH:
            raise InputError(
                f"event length must be exactly {EVENT_LENGTH} samples, got {self.samples.size}"
            )
        if self.channel not in VALID_CHANNELS:
            raise InputError(f"channel must be one of {VALID_CHANNELS}, got {self.channel!r}")
        self.event_class = EventClass(self.event_class)

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples)))


def extract_events(
    recording: np.ndarray,
    event_starts: Sequence[int],
    event_class: EventClass,
    sample_rate: int = SAMPLE_RATE,
    channel: str = "mono",
    source_id: str = "",
) -> list[EventSignal]:
    """Cut fixed-length events out of a longer mono recording.

    ``event_starts`` are sample offsets into ``recording``; each event is
    ``EVENT_LENGTH`` samples long. Offsets that would run past either end of
    the recording are rejected.
    """
    recording = np.asarray(recording, dtype=np.float64)
    if recording.ndim != 1:
        raise InputError(f"recording must be 1-D mono, got shape {recording.shape}")
    events = []
    for start in event_starts:
        start = int(start)
        if start < 0 or start + EVENT_LENGTH > recording.size:
            raise InputError(
                f"event at offset {start} overruns recording of {recording.size} samples"
            )
        events.append(
            EventSignal(
                samples=recording[start : start + EVENT_LENGTH].copy(),
                sample_rate=sample_rate,
                event_class=event_class,
                channel=channel,
                source_id=f"{source_id}-{start}" if source_id else str(start),
            )
        )
    return events


def normalize(event: EventSignal) -> EventSignal:
    """Scale an event so its peak absolute amplitude is exactly 1."""
    peak = event.peak
    if peak == 0.0:
        raise InputError(f"cannot normalize all-zero event {event.source_id!r}")
    return replace(event, samples=event.samples / peak)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class SplitManifest:
    """Per-class id lists for the train/validation partition."""

    train_ids: dict[EventClass, list[str]] = field(default_factory=dict)
    val_ids: dict[EventClass, list[str]] = field(default_factory=dict)
    holdout_fraction: float = 0.15
    split_seed: int = 0

    def split_of(self, event_id: str) -> str:
        for ids in self.val_ids.values():
            if event_id in ids:
                return "val"
        for ids in self.train_ids.values():
            if event_id in ids:
                return "train"
        raise InputError(f"event id {event_id!r} not present in split manifest")

    def all_train_ids(self) -> list[str]:
        return [i for cls in CLASS_ORDER for i in self.train_ids.get(cls, [])]

    def all_val_ids(self) -> list[str]:
        return [i for cls in CLASS_ORDER for i in self.val_ids.get(cls, [])]


def split(
    corpus: Sequence[EventSignal],
    holdout_fraction: float = 0.15,
    split_seed: int = 0,
) -> SplitManifest:
    """Stratified train/validation split over event ids.

    Within each class the validation count is round-half-up of
    ``holdout_fraction * class_count``; membership is drawn with a seeded
    shuffle so the same seed always yields the same manifest. Every class
    must keep at least one training event.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ConfigurationError(
            f"holdout_fraction must lie strictly between 0 and 1, got {holdout_fraction}"
        )
    by_class: dict[EventClass, list[str]] = {}
    for ev in corpus:
        by_class.setdefault(ev.event_class, []).append(ev.source_id)
    manifest = SplitManifest(holdout_fraction=holdout_fraction, split_seed=split_seed)
    for cls_idx, cls in enumerate(CLASS_ORDER):
        ids = by_class.get(cls)
        if not ids:
            continue
        if len(ids) != len(set(ids)):
            raise InputError(f"duplicate event ids in class {cls}")
        n_val = _round_half_up(holdout_fraction * len(ids))
        if n_val >= len(ids):
            raise ConfigurationError(
                f"class {cls} would keep no training events "
                f"({n_val} of {len(ids)} held out)"
            )
        rng = np.random.default_rng(np.random.SeedSequence([split_seed, cls_idx]))
        order = rng.permutation(len(ids))
        chosen = sorted(ids[i] for i in order[:n_val])
        manifest.val_ids[cls] = chosen
        manifest.train_ids[cls] = sorted(set(ids) - set(chosen))
    return manifest


def write_event_wav(path: Path, event: EventSignal) -> None:
    wavfile.write(path, event.sample_rate, event.samples.astype(np.float32))


def read_event_wav(
    path: Path,
    event_class: EventClass,
    channel: str = "mono",
    source_id: str = "",
) -> EventSignal:
    rate, samples = wavfile.read(path)
    return EventSignal(
        samples=np.asarray(samples, dtype=np.float64),
        sample_rate=int(rate),
        event_class=event_class,
        channel=channel,
        source_id=source_id or Path(path).stem,
    )


def write_manifest(path: Path, rows: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: str(row.get(k, "")) for k in MANIFEST_COLUMNS})


def read_manifest(path: Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"manifest not found: {path}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def save_corpus(out_dir: Path, events: Sequence[EventSignal]) -> Path:
    """Write one WAV per event plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for ev in events:
        write_event_wav(out_dir / f"{ev.source_id}.wav", ev)
        rows.append(
            {
                "event_id": ev.source_id,
                "event_class": ev.event_class.value,
                "channel": ev.channel,
                "source_id": ev.source_id,
                "split": "",
            }
        )
    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest_path, rows)
    return manifest_path


def load_corpus(raw_dir: Path) -> list[EventSignal]:
    """Read a corpus written by :func:`save_corpus`."""
    raw_dir = Path(raw_dir)
    rows = read_manifest(raw_dir / "manifest.csv")
    events = []
    for row in rows:
        events.append(
            read_event_wav(
                raw_dir / f"{row['event_id']}.wav",
                event_class=EventClass(row["event_class"]),
                channel=row["channel"],
                source_id=row["event_id"],
            )
        )
    return events
