"""Shared fixtures: a small deterministic corpus and featurized workspaces."""

from pathlib import Path

import numpy as np
import pytest

from stftgan.dataset import CLASS_ORDER, EventClass, normalize
from stftgan.features import StftParams, stft, to_unit_range
from stftgan.synthetic import synthesize_corpus

SMALL_COUNTS = {cls: 6 for cls in CLASS_ORDER}


@pytest.fixture(scope="session")
def small_corpus():
    """24 normalized events, 6 per class, fixed seed."""
    return [normalize(ev) for ev in synthesize_corpus(SMALL_COUNTS, seed=0)]


@pytest.fixture(scope="session")
def trimmer_events():
    return [normalize(ev) for ev in synthesize_corpus({EventClass.TRIMMER: 24}, seed=0)]


@pytest.fixture(scope="session")
def trimmer_unit_w128(trimmer_events):
    params = StftParams(window_size=128)
    return [to_unit_range(stft(ev, params)) for ev in trimmer_events]


@pytest.fixture(scope="session")
def unit_batch_w128(trimmer_unit_w128):
    return np.stack([s.values for s in trimmer_unit_w128])


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def _build_workspace(root: Path, samples_per_class: int = 20, windows=(128,)) -> Path:
    """Synthesize, normalize, and featurize a tiny corpus under ``root``.

    20 events per class leaves 17 in each train split after the 15% holdout,
    just enough to fill one training batch of 16.
    """
    from stftgan import experiment

    settings = experiment.resolve_profile(
        "desk", {"samples_per_class": samples_per_class, "windows": list(windows)}
    )
    experiment.build_corpus(root, settings)
    experiment.build_features(root, settings)
    return root


@pytest.fixture()
def tiny_workspace(tmp_path):
    """A ready-to-train workspace: 20 events/class, window 128 features."""
    return _build_workspace(tmp_path / "ws")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion after the run."""
    lines = []
    for status, reports in sorted(terminalreporter.stats.items()):
        if status not in ("passed", "failed", "error"):
            continue
        for rep in reports:
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid or "criterion" not in nodeid:
                continue
            if status == "passed" and getattr(rep, "when", "call") != "call":
                continue
            label = "PASS" if status == "passed" else "FAIL"
            lines.append((nodeid.rsplit("::", 1)[-1], label))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in sorted(lines):
        terminalreporter.write_line(f"{label}: {name}")
