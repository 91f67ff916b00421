"""End-to-end acceptance gates, one test per guaranteed behaviour.

Criteria 1-5 are fast identity and oracle checks on the core numerics.
Criteria 6-9 train real models on the CPU: the ablation cost ordering,
the quality-improves-with-training gate, determinism/resume, and the
full benchmark matrix with its report. Expect the tail of this file to
take tens of minutes; everything it needs is synthesized on the fly.

Each test prints through the terminal summary hook in conftest.py as a
single PASS/FAIL line.
"""

import math
import shutil
import time

import numpy as np
import pytest
import torch
from torch import nn

from test_gru import _scalar_step
from test_metrics import naive_ssim

from stftgan import experiment
from stftgan.dataset import EventClass, normalize
from stftgan.features import StftParams, stft, to_unit_range
from stftgan.gru import GruCell
from stftgan.losses import (
    GpConfig,
    bce_discriminator_loss,
    gradient_penalty,
    lsgan_discriminator_loss,
)
from stftgan.metrics import extract_features, fid, psnr, ssim
from stftgan.models import (
    build_discriminator,
    build_generator,
    make_gan_spec,
    parameter_count,
)
from stftgan.synthetic import synthesize_corpus
from stftgan.training import Checkpoint, TrainConfig, generate, read_losses_csv, train


@pytest.fixture(scope="module")
def trimmer_unit_set():
    """64 synthetic trimmer events, normalized, as unit-range spectrograms."""
    events = [
        normalize(ev) for ev in synthesize_corpus({EventClass.TRIMMER: 64}, seed=0)
    ]
    params = StftParams(window_size=128)
    return [to_unit_range(stft(ev, params)) for ev in events]


def test_criterion_1_stft_shape_contract():
    events = [
        normalize(ev)
        for ev in synthesize_corpus({cls: 1 for cls in EventClass}, seed=7)
    ]
    rng = np.random.default_rng(0)
    signals = [ev.samples for ev in events] + [rng.normal(size=1000)]
    start = time.perf_counter()
    for samples in signals:
        assert samples.size == 1000
        assert stft(samples, StftParams(window_size=128)).shape == (65, 15)
        assert stft(samples, StftParams(window_size=256)).shape == (129, 7)
    assert time.perf_counter() - start < 1.0


def test_criterion_2_gru_matches_scalar_recurrence():
    torch.manual_seed(202)
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        input_size = int(rng.integers(1, 5))
        hidden_size = int(rng.integers(1, 6))
        steps = int(rng.integers(1, 6))
        cell = GruCell(input_size, hidden_size)
        xs = rng.uniform(-1.5, 1.5, (steps, input_size))
        h_torch = torch.zeros(1, hidden_size)
        h_scalar = [0.0] * hidden_size
        for t in range(steps):
            x_t = torch.tensor(xs[t : t + 1], dtype=torch.float32)
            h_torch = cell.step(x_t, h_torch)
            h_scalar = _scalar_step(cell, xs[t], h_scalar)
            diff = np.abs(h_torch.detach().numpy()[0] - np.array(h_scalar)).max()
            worst = max(worst, float(diff))
    assert worst < 1e-5, f"worst recurrence deviation {worst}"


def test_criterion_3_loss_identities():
    torch.manual_seed(3)

    class UnitNormCritic(nn.Module):
        """Linear critic whose input gradient has norm exactly 1."""

        def __init__(self, n):
            super().__init__()
            w = torch.randn(n, dtype=torch.float64)
            self.w = nn.Parameter(w / w.norm())

        def forward(self, x):
            return x.reshape(x.shape[0], -1) @ self.w

    class ConstantCritic(nn.Module):
        """Flat scorer; the zero factor keeps the input in the graph."""

        def forward(self, x):
            return x.reshape(x.shape[0], -1).sum(dim=1) * 0.0 + 3.0

    real = torch.rand(8, 1, 6, 5, dtype=torch.float64)
    fake = torch.rand(8, 1, 6, 5, dtype=torch.float64)

    gp_unit = gradient_penalty(UnitNormCritic(30), real, fake, GpConfig())
    assert abs(gp_unit.item()) < 1e-9

    gp_flat = gradient_penalty(ConstantCritic(), real, fake, GpConfig())
    assert abs(gp_flat.item() - 12.0) < 1e-9

    half = torch.full((16,), 0.5, dtype=torch.float64)
    bce = bce_discriminator_loss(half, half)
    assert abs(bce.item() - 2.0 * math.log(2.0)) < 1e-9

    ones = torch.ones(16, dtype=torch.float64)
    zeros = torch.zeros(16, dtype=torch.float64)
    assert lsgan_discriminator_loss(ones, zeros).item() == 0.0


def test_criterion_4_metric_identities():
    rng = np.random.default_rng(4)

    x = rng.uniform(0, 1, (65, 15))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)

    feats = rng.normal(size=(40, 8))
    assert fid(feats, feats.copy()) <= 1e-6

    ref = rng.uniform(0.2, 0.8, (65, 15))
    noise = rng.normal(size=ref.shape)
    ladder = [psnr(ref, ref + 0.005 * 3**k * noise).value_db for k in range(5)]
    assert all(a > b for a, b in zip(ladder, ladder[1:])), ladder

    for _ in range(20):
        a = rng.uniform(0, 1, (13, 10))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-6)


def test_criterion_5_fid_closed_form():
    # sample sets drawn so mean/covariance are exact: mean 0 vs 1, both
    # unit sample variance, so the distance is (1-0)^2 + (1+1-2) = 1
    base = np.array([[-1.0], [0.0], [1.0]])
    assert fid(base, base + 1.0) == pytest.approx(1.0, abs=1e-9)


@pytest.fixture(scope="module")
def ablation_workspace(tmp_path_factory):
    ws = tmp_path_factory.mktemp("acceptance-ablation")
    settings = experiment.resolve_profile("desk", {"windows": [128]})
    experiment.build_corpus(ws, settings)
    experiment.build_features(ws, settings)
    return ws, settings


def test_criterion_6_ablation_variants_and_cost_ordering(ablation_workspace):
    ws, settings = ablation_workspace
    shape = experiment.target_shape_for(128)
    g_ch, d_ch = settings["g_channels"], settings["d_channels"]

    # all four ablation variants build and produce correctly shaped tensors
    for variant in experiment.ABLATION_VARIANTS:
        spec = make_gan_spec(variant, shape, g_channels=g_ch, d_channels=d_ch)
        gen = build_generator(spec).eval()
        disc = build_discriminator(spec).eval()
        with torch.no_grad():
            batch = gen(torch.randn(2, spec.latent_dim))
            scores = disc(batch)
        assert batch.shape == (2, 1, *shape)
        assert scores.shape == (2,)

    # removing both enhancements collapses to the unenhanced baseline:
    # parameter counts match exactly, through either knockout spelling
    baseline = make_gan_spec("wgan_gp", shape, g_channels=g_ch, d_channels=d_ch)
    base_g = parameter_count(build_generator(baseline))
    base_d = parameter_count(build_discriminator(baseline))
    for knockout in ("stftsynth_no_drb", "stftsynth_no_bigru"):
        both_off = make_gan_spec(
            knockout, shape, g_channels=g_ch, d_channels=d_ch,
            use_drb=False, use_bigru=False,
        )
        assert parameter_count(build_generator(both_off)) == base_g
        assert parameter_count(build_discriminator(both_off)) == base_d

    # training cost ordering on a short run: full enhanced model is the
    # most expensive per epoch, the recurrence-free knockout sits between
    # it and the baseline (run the expensive one first so cold-start
    # overhead cannot flip the comparison)
    tte = {}
    for variant in ("stftsynth", "stftsynth_no_bigru", "wgan_gp"):
        _, state, _ = experiment.train_cell(
            ws, variant, "breakage", 128, 0, settings, epochs=20
        )
        tte[variant] = state.mean_epoch_seconds
    assert tte["stftsynth"] > tte["stftsynth_no_bigru"], tte
    assert tte["stftsynth_no_bigru"] >= tte["wgan_gp"], tte


def test_criterion_7_training_improves_generated_fid(trimmer_unit_set, tmp_path):
    settings = experiment.resolve_profile("desk")
    train_feats = extract_features(trimmer_unit_set)
    start = time.perf_counter()
    outcomes = []
    for seed in (0, 1, 2):
        run_dir = tmp_path / f"seed{seed}"
        spec = make_gan_spec(
            "stftsynth",
            (65, 15),
            g_channels=settings["g_channels"],
            d_channels=settings["d_channels"],
        )
        config = TrainConfig(
            lr_generator=settings["lr_generator"],
            lr_discriminator=settings["lr_discriminator"],
            batch_size=settings["batch_size"],
            seed=seed,
            max_epochs=200,
            checkpoint_every=10,
        )
        _, state = train(spec, trimmer_unit_set, config, run_dir)
        assert state.epoch == 200
        assert all(
            math.isfinite(r.loss_d) and math.isfinite(r.loss_g)
            for r in state.history
        )
        fids = {}
        for epoch in (10, 200):
            ck = Checkpoint.load(run_dir / "checkpoints" / f"epoch_{epoch:05d}")
            samples = generate(ck, 100, seed=seed + 1000)
            fids[epoch] = fid(train_feats, extract_features(samples))
        outcomes.append(fids[200] <= 0.75 * fids[10])
        shutil.rmtree(run_dir, ignore_errors=True)
        if sum(outcomes) >= 2:
            break
    elapsed = time.perf_counter() - start
    assert sum(outcomes) >= 2, f"improved for {sum(outcomes)} of {len(outcomes)} seeds"
    assert elapsed <= 900.0, f"took {elapsed:.0f}s"


def test_criterion_8_determinism_and_resume(trimmer_unit_set, tmp_path):
    settings = experiment.resolve_profile("desk")

    def run(run_dir, epochs):
        spec = make_gan_spec(
            "stftsynth",
            (65, 15),
            g_channels=settings["g_channels"],
            d_channels=settings["d_channels"],
        )
        config = TrainConfig(
            lr_generator=settings["lr_generator"],
            lr_discriminator=settings["lr_discriminator"],
            batch_size=settings["batch_size"],
            seed=0,
            max_epochs=epochs,
            checkpoint_every=4,
        )
        return train(spec, trimmer_unit_set, config, run_dir)

    ck_a, state_a = run(tmp_path / "a", 8)
    _, state_b = run(tmp_path / "b", 8)
    run(tmp_path / "c", 4)
    ck_c, state_c = run(tmp_path / "c", 8)  # resumes from the epoch-4 snapshot

    assert not all(r.loss_g == state_a.history[0].loss_g for r in state_a.history)
    for other in (state_b, state_c):
        assert [r.epoch for r in other.history] == [r.epoch for r in state_a.history]
        for ra, ro in zip(state_a.history, other.history):
            assert abs(ra.loss_d - ro.loss_d) <= 1e-6
            assert abs(ra.loss_g - ro.loss_g) <= 1e-6
            assert abs(ra.gp - ro.gp) <= 1e-6
            assert ra.lr_g == ro.lr_g and ra.lr_d == ro.lr_d

    # the on-disk log of the resumed run matches the uninterrupted one
    csv_a = read_losses_csv(tmp_path / "a")
    csv_c = read_losses_csv(tmp_path / "c")
    assert [r.epoch for r in csv_c] == [r.epoch for r in csv_a] == list(range(1, 9))

    # and so do the final weights, via samples drawn from each checkpoint
    gen_a = np.stack([s.values for s in generate(ck_a, 8, seed=99)])
    gen_c = np.stack([s.values for s in generate(ck_c, 8, seed=99)])
    assert np.abs(gen_a - gen_c).max() <= 1e-6


def test_criterion_9_full_matrix_report_idempotent(tmp_path_factory):
    ws = tmp_path_factory.mktemp("acceptance-matrix")
    settings = experiment.resolve_profile("desk")
    experiment.build_corpus(ws, settings)
    experiment.build_features(ws, settings)

    matrix = experiment.matrix_from_settings(settings)
    assert len(matrix.cells) == 32
    experiment.run_matrix(ws, settings)

    for variant, cls, window, seed in matrix.cells:
        run_dir = experiment.runs_dir(ws) / experiment.cell_id(variant, cls, window, seed)
        assert (run_dir / "COMPLETE.json").exists()
    rows = experiment.read_results(ws)
    assert len(rows) == 32 * 4  # ssim, psnr, fid, tte_seconds per cell

    experiment.write_report(ws)
    tables = (experiment.report_dir(ws) / "tables.md").read_text()
    for caption in (
        "Mean structural similarity",
        "Mean PSNR in dB",
        "Frechet distance between embedded sets",
    ):
        assert caption in tables
    for variant in matrix.variants:
        for window in matrix.window_sizes:
            assert f"{variant}/w{window}" in tables  # 8 columns per metric
    for cls in matrix.classes:
        assert tables.count(f"| {cls} |") >= 3  # one row per metric table

    # a rerun replays completed cells: no retraining, no duplicate rows
    results = experiment.results_path(ws)
    before = results.read_bytes()
    weights = sorted(experiment.runs_dir(ws).glob("*/checkpoints/*/weights.pt"))
    assert weights
    mtimes = [p.stat().st_mtime_ns for p in weights]
    experiment.run_matrix(ws, settings)
    assert results.read_bytes() == before
    assert [p.stat().st_mtime_ns for p in weights] == mtimes
