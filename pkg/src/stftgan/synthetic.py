"""Synthetic stand-ins for the four structural-monitoring event classes.

Each family is a seeded parametric waveform with per-event amplitude and
frequency jitter, designed so the classes occupy clearly separated spectral
regions: traffic rumbles below ~2 kHz, hammer strikes ring around a few kHz,
trimmer tones sit on a harmonic stack near 8 kHz, and breakage bursts sweep
through the upper band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CLASS_ORDER, EVENT_LENGTH, SAMPLE_RATE, EventClass, EventSignal
from .exceptions import ConfigurationError

#: Nominal fundamental of the trimmer tone before jitter is applied.
TRIMMER_BASE_FUNDAMENTAL_HZ = 8_000.0

#: Default per-class corpus sizes.
DEFAULT_CLASS_COUNTS: dict[EventClass, int] = {
    EventClass.BREAKAGE: 202,
    EventClass.HAMMER: 264,
    EventClass.TRIMMER: 459,
    EventClass.TRAFFIC: 415,
}

_MAX_JITTER = 0.3
_BASE_AMPLITUDE = 0.75


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for one synthetic event draw."""

    event_class: EventClass
    sample_rate: int = SAMPLE_RATE
    length: int = EVENT_LENGTH
    seed: int = 0
    amplitude_jitter: float = 0.1
    frequency_jitter: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "event_class", EventClass(self.event_class))
        if self.sample_rate != SAMPLE_RATE:
            raise ConfigurationError(
                f"sample_rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}"
            )
        if self.length != EVENT_LENGTH:
            raise ConfigurationError(
                f"length must be {EVENT_LENGTH} samples, got {self.length}"
            )
        for name in ("amplitude_jitter", "frequency_jitter"):
            value = getattr(self, name)
            if not 0.0 <= value <= _MAX_JITTER:
                raise ConfigurationError(
                    f"{name} must lie in [0, {_MAX_JITTER}], got {value}"
                )


def _draw_common(spec: SynthSpec) -> tuple[float, float, np.random.Generator]:
    """Seeded rng plus the two jitter factors shared by every family.

    The draw order is part of the contract: helpers that recompute derived
    quantities (for example the jittered trimmer fundamental) rely on it.
    """
    rng = np.random.default_rng(spec.seed)
    amp_scale = 1.0 + spec.amplitude_jitter * rng.uniform(-1.0, 1.0)
    freq_scale = 1.0 + spec.frequency_jitter * rng.uniform(-1.0, 1.0)
    return amp_scale, freq_scale, rng


def trimmer_fundamental_hz(spec: SynthSpec) -> float:
    """The jittered fundamental a trimmer event synthesized from ``spec`` uses."""
    if spec.event_class is not EventClass.TRIMMER:
        raise ConfigurationError("fundamental is only defined for trimmer events")
    _, freq_scale, _ = _draw_common(spec)
    return TRIMMER_BASE_FUNDAMENTAL_HZ * freq_scale


def _breakage(t: np.ndarray, freq_scale: float, rng: np.random.Generator) -> np.ndarray:
    # Decaying downward chirp with a short broadband crack at onset.
    onset = 0.0008
    tau = 0.0012
    f_hi = 28_000.0 * freq_scale
    f_lo = 6_000.0 * freq_scale
    tt = np.maximum(t - onset, 0.0)
    span = t[-1] - onset
    inst_freq = f_hi + (f_lo - f_hi) * (tt / span)
    phase = 2.0 * np.pi * np.cumsum(inst_freq) / SAMPLE_RATE
    body = np.sin(phase + rng.uniform(0.0, 2.0 * np.pi)) * np.exp(-tt / tau)
    crack = 0.4 * rng.standard_normal(t.size) * np.exp(-tt / 0.0003)
    x = (body + crack) * (t >= onset)
    return x


def _hammer(t: np.ndarray, freq_scale: float, rng: np.random.Generator) -> np.ndarray:
    # Single impact exciting two damped low-frequency modes.
    onset = 0.0005
    tt = np.maximum(t - onset, 0.0)
    modes = ((2_200.0, 1.0, 0.0028), (5_100.0, 0.55, 0.0018))
    x = np.zeros_like(t)
    for freq, amp, tau in modes:
        phi = rng.uniform(0.0, 2.0 * np.pi)
        x += amp * np.sin(2.0 * np.pi * freq * freq_scale * tt + phi) * np.exp(-tt / tau)
    return x * (t >= onset)


def _trimmer(t: np.ndarray, freq_scale: float, rng: np.random.Generator) -> np.ndarray:
    # Sustained harmonic stack with mild amplitude modulation.
    fundamental = TRIMMER_BASE_FUNDAMENTAL_HZ * freq_scale
    harmonics = ((1, 1.0), (2, 0.45), (3, 0.2))
    x = np.zeros_like(t)
    for order, amp in harmonics:
        phi = rng.uniform(0.0, 2.0 * np.pi)
        x += amp * np.sin(2.0 * np.pi * order * fundamental * t + phi)
    am = 1.0 + 0.05 * np.sin(2.0 * np.pi * 300.0 * t + rng.uniform(0.0, 2.0 * np.pi))
    noise = 0.01 * rng.standard_normal(t.size)
    return x * am + noise


def _traffic(t: np.ndarray, freq_scale: float, rng: np.random.Generator) -> np.ndarray:
    # Band-limited colored noise: 1/f-like shaping with a hard upper roll-off.
    white = rng.standard_normal(t.size)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(t.size, d=1.0 / SAMPLE_RATE)
    knee = 800.0 * freq_scale
    shaping = 1.0 / (1.0 + (freqs / knee) ** 1.5)
    shaping *= np.exp(-np.maximum(freqs - 4_000.0, 0.0) / 1_500.0)
    return np.fft.irfft(spectrum * shaping, n=t.size)


_FAMILIES = {
    EventClass.BREAKAGE: _breakage,
    EventClass.HAMMER: _hammer,
    EventClass.TRIMMER: _trimmer,
    EventClass.TRAFFIC: _traffic,
}


def synthesize_event(spec: SynthSpec) -> EventSignal:
    """Render one event; identical specs yield identical signals."""
    amp_scale, freq_scale, rng = _draw_common(spec)
    t = np.arange(spec.length) / spec.sample_rate
    x = _FAMILIES[spec.event_class](t, freq_scale, rng)
    peak = np.max(np.abs(x))
    target = _BASE_AMPLITUDE * amp_scale
    x = x * (target / peak)
    return EventSignal(
        samples=x,
        sample_rate=spec.sample_rate,
        event_class=spec.event_class,
        source_id=f"{spec.event_class.value}-seed{spec.seed}",
    )


def synthesize_corpus(
    class_counts: dict[EventClass, int] | None = None,
    seed: int = 0,
    amplitude_jitter: float = 0.1,
    frequency_jitter: float = 0.1,
) -> list[EventSignal]:
    """Render a labeled corpus with per-event derived seeds.

    Event ``i`` of class ``c`` is seeded from ``(seed, class_index, i)`` so
    any event can be regenerated in isolation and corpora with different
    top-level seeds do not share waveforms.
    """
    counts = dict(DEFAULT_CLASS_COUNTS if class_counts is None else class_counts)
    for cls, n in counts.items():
        if int(n) < 1:
            raise ConfigurationError(f"class count for {cls} must be >= 1, got {n}")
    events = []
    for cls_idx, cls in enumerate(CLASS_ORDER):
        if cls not in counts:
            continue
        for i in range(int(counts[cls])):
            event_seed = int(
                np.random.SeedSequence([seed, cls_idx, i]).generate_state(1)[0]
            )
            spec = SynthSpec(
                event_class=cls,
                seed=event_seed,
                amplitude_jitter=amplitude_jitter,
                frequency_jitter=frequency_jitter,
            )
            ev = synthesize_event(spec)
            events.append(
                EventSignal(
                    samples=ev.samples,
                    sample_rate=ev.sample_rate,
                    event_class=cls,
                    source_id=f"{cls.value}-{i:04d}",
                )
            )
    return events
