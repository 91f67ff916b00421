"""Benchmark orchestration: profiles, the variant matrix, ablations, reports.

A workspace directory accumulates everything one benchmark run produces:

    raw/                WAV corpus + manifest
    features/w<nnn>/    normalized spectrograms + split-aware manifest
    runs/<cell>/        training artifacts per (variant, class, window, seed)
    results/results.csv long-format metric rows, append-only
    report/             tables and figure grids

Completed cells leave a COMPLETE.json marker holding their metric rows, so
re-running a matrix skips straight past finished work.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, training
from .dataset import CLASS_ORDER, EVENT_LENGTH, EventClass, load_corpus, normalize, save_corpus, split
from .exceptions import ConfigurationError, InputError
from .features import (
    DEFAULT_FLOOR_DB,
    SpectrogramTensor,
    StftParams,
    expected_shape,
    load_feature_split,
    stft,
    to_unit_range,
    write_feature_set,
)
from .models import GanSpec, make_gan_spec
from .synthetic import DEFAULT_CLASS_COUNTS, synthesize_corpus
from .training import TrainConfig

BENCHMARK_VARIANTS = ("dcgan", "lsgan", "wgan_gp", "stftsynth")
ABLATION_VARIANTS = ("stftsynth", "stftsynth_no_drb", "stftsynth_no_bigru", "wgan_gp")
ABLATION_LABELS = {
    "stftsynth": "full model",
    "stftsynth_no_drb": "without dense residual blocks",
    "stftsynth_no_bigru": "without temporal recurrence",
    "wgan_gp": "baseline",
}
DEFAULT_WINDOWS = (128, 256)

RESULT_COLUMNS = (
    "variant",
    "event_class",
    "window_size",
    "seed",
    "metric",
    "value",
    "extractor_id",
    "pairing_policy",
    "n_real",
    "n_generated",
)

PROFILES: dict[str, dict] = {
    # The desk profile shrinks the corpus, epochs, and model width so the
    # whole benchmark runs on a CPU in minutes. The full profile's learning
    # rates assume roughly 70x more optimizer steps than a desk run provides,
    # so this profile raises both rates; at the full-profile rates neither
    # network moves measurably within 200 epochs on 64 samples.
    "desk": {
        "samples_per_class": 64,
        "epochs": 50,
        "g_channels": 16,
        "d_channels": 16,
        "eval_samples": 64,
        "seeds": [0],
        "batch_size": 16,
        "checkpoint_every": 50,
        "lr_generator": 2e-4,
        "lr_discriminator": 2e-4,
    },
    "full": {
        "samples_per_class": None,  # fall back to DEFAULT_CLASS_COUNTS
        "epochs": 2000,
        "g_channels": 64,
        "d_channels": 64,
        "eval_samples": 200,
        "seeds": [0],
        "batch_size": 16,
        "checkpoint_every": 100,
        "lr_generator": 2e-5,
        "lr_discriminator": 2e-6,
    },
}

_COMMON_DEFAULTS = {
    "windows": list(DEFAULT_WINDOWS),
    "holdout_fraction": 0.15,
    "split_seed": 0,
    "corpus_seed": 0,
    "floor_db": DEFAULT_FLOOR_DB,
    "extractor_id": metrics.DEFAULT_EXTRACTOR_ID,
    "pairing_policy": "all_pairs",
    "n_critic": None,
    "variants": list(BENCHMARK_VARIANTS),
    "classes": [cls.value for cls in CLASS_ORDER],
}


def resolve_profile(name: str = "desk", overrides: dict | None = None) -> dict:
    """Profile defaults merged with explicit overrides; unknown keys fail."""
    if name not in PROFILES:
        raise ConfigurationError(
            f"unknown profile {name!r}; available: {sorted(PROFILES)}"
        )
    settings = {**_COMMON_DEFAULTS, **PROFILES[name], "profile": name}
    if overrides:
        unknown = set(overrides) - set(settings)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        settings.update(overrides)
    return settings


def raw_dir(workspace: Path) -> Path:
    return Path(workspace) / "raw"


def features_dir(workspace: Path, window: int) -> Path:
    return Path(workspace) / "features" / f"w{window}"


def runs_dir(workspace: Path) -> Path:
    return Path(workspace) / "runs"


def results_path(workspace: Path) -> Path:
    return Path(workspace) / "results" / "results.csv"


def report_dir(workspace: Path) -> Path:
    return Path(workspace) / "report"


def cell_id(variant: str, event_class: str, window: int, seed: int) -> str:
    return f"{variant}-{event_class}-w{window}-s{seed}"


def build_corpus(workspace: Path, settings: dict) -> Path:
    """Synthesize + peak-normalize the event corpus and persist it as WAVs."""
    per_class = settings.get("samples_per_class")
    counts = (
        dict(DEFAULT_CLASS_COUNTS)
        if per_class is None
        else {cls: int(per_class) for cls in CLASS_ORDER}
    )
    events = [normalize(ev) for ev in synthesize_corpus(counts, seed=settings["corpus_seed"])]
    return save_corpus(raw_dir(workspace), events)


def build_features(workspace: Path, settings: dict) -> list[Path]:
    """Transform the raw corpus at each window size and persist split-tagged features."""
    corpus = load_corpus(raw_dir(workspace))
    manifest = split(
        corpus,
        holdout_fraction=settings["holdout_fraction"],
        split_seed=settings["split_seed"],
    )
    splits = {i: "train" for i in manifest.all_train_ids()}
    splits.update({i: "val" for i in manifest.all_val_ids()})
    out_paths = []
    for window in settings["windows"]:
        params = StftParams(window_size=int(window))
        specs = []
        for ev in corpus:
            spec = to_unit_range(stft(ev, params), floor_db=settings["floor_db"])
            specs.append(spec)
        out_paths.append(write_feature_set(features_dir(workspace, window), specs, splits))
    return out_paths


def _require_features(workspace: Path, window: int) -> Path:
    fdir = features_dir(workspace, window)
    if not (fdir / "features.csv").exists():
        raise ConfigurationError(
            f"no featurized corpus at {fdir}; run `stftgan synth-data` and "
            "`stftgan features` first"
        )
    return fdir


def _train_config(settings: dict, seed: int, epochs: int | None = None) -> TrainConfig:
    return TrainConfig(
        lr_generator=float(settings["lr_generator"]),
        lr_discriminator=float(settings["lr_discriminator"]),
        batch_size=int(settings["batch_size"]),
        max_epochs=int(epochs if epochs is not None else settings["epochs"]),
        seed=seed,
        n_critic=settings["n_critic"],
        checkpoint_every=int(settings["checkpoint_every"]),
    )


def target_shape_for(window: int) -> tuple[int, int]:
    return expected_shape(EVENT_LENGTH, StftParams(window_size=int(window)))


def train_cell(
    workspace: Path,
    variant: str,
    event_class: str,
    window: int,
    seed: int,
    settings: dict,
    epochs: int | None = None,
):
    """Train one cell's generator/discriminator pair; returns (checkpoint,
    state, run_dir). Resumes from the cell's latest checkpoint if present."""
    event_class = EventClass(event_class).value
    window = int(window)
    run_dir = runs_dir(workspace) / cell_id(variant, event_class, window, seed)
    fdir = _require_features(workspace, window)
    train_set = load_feature_split(fdir, event_class, "train")
    spec = make_gan_spec(
        variant,
        target_shape_for(window),
        g_channels=int(settings["g_channels"]),
        d_channels=int(settings["d_channels"]),
    )
    config = _train_config(settings, seed, epochs)
    checkpoint, state = training.train(spec, train_set, config, run_dir)
    return checkpoint, state, run_dir


def run_cell(
    workspace: Path,
    variant: str,
    event_class: str,
    window: int,
    seed: int,
    settings: dict,
    epochs: int | None = None,
) -> list[dict]:
    """Train, sample, and score one benchmark cell; skips if already complete."""
    event_class = EventClass(event_class).value
    window = int(window)
    cid = cell_id(variant, event_class, window, seed)
    run_dir = runs_dir(workspace) / cid
    marker = run_dir / "COMPLETE.json"
    if marker.exists():
        rows = json.loads(marker.read_text())["rows"]
        _append_results(workspace, rows)
        return rows

    fdir = _require_features(workspace, window)
    checkpoint, state, run_dir = train_cell(
        workspace, variant, event_class, window, seed, settings, epochs
    )

    generated = training.generate(checkpoint, int(settings["eval_samples"]), seed=seed + 1000)
    val_set = load_feature_split(fdir, event_class, "val")
    report = metrics.evaluate(
        generated,
        val_set,
        pairing_policy=settings["pairing_policy"],
        extractor_id=settings["extractor_id"],
    )

    base = {
        "variant": variant,
        "event_class": event_class,
        "window_size": window,
        "seed": seed,
    }
    rows = [{**base, **r} for r in report.as_rows()]
    rows.append(
        {
            **base,
            "metric": "tte_seconds",
            "value": state.mean_epoch_seconds,
            "extractor_id": "",
            "pairing_policy": "",
            "n_real": report.n_real,
            "n_generated": report.n_generated,
        }
    )
    _save_previews(run_dir, generated, val_set)
    marker.write_text(
        json.dumps({"rows": rows, "completed_at": time.time(), "epochs": state.epoch}, indent=2)
    )
    _append_results(workspace, rows)
    return rows


def _save_previews(run_dir: Path, generated, val_set, keep: int = 8) -> None:
    previews = Path(run_dir) / "previews"
    previews.mkdir(parents=True, exist_ok=True)
    gen = np.stack([g.values for g in generated[:keep]])
    real = np.stack([v.values for v in val_set[:keep]])
    np.save(previews / "generated.npy", gen)
    np.save(previews / "real.npy", real)


def _result_key(row: dict) -> tuple:
    return (
        str(row["variant"]),
        str(row["event_class"]),
        str(row["window_size"]),
        str(row["seed"]),
        str(row["metric"]),
        str(row["extractor_id"]),
        str(row["pairing_policy"]),
    )


def _append_results(workspace: Path, rows: list[dict]) -> None:
    path = results_path(workspace)
    path.parent.mkdir(parents=True, exist_ok=True)
    existing = set()
    if path.exists():
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                existing.add(_result_key(row))
    fresh = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        if fresh:
            writer.writeheader()
        for row in rows:
            if _result_key(row) in existing:
                continue
            writer.writerow({k: row.get(k, "") for k in RESULT_COLUMNS})
            existing.add(_result_key(row))


def read_results(workspace: Path) -> list[dict]:
    path = results_path(workspace)
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class ExperimentMatrix:
    """The benchmark grid: variants x classes x windows x seeds."""

    variants: tuple[str, ...] = BENCHMARK_VARIANTS
    classes: tuple[str, ...] = tuple(cls.value for cls in CLASS_ORDER)
    window_sizes: tuple[int, ...] = DEFAULT_WINDOWS
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        for variant in self.variants:
            GanSpec(variant=variant, target_shape=(65, 15))  # validates the name
        self.classes = tuple(EventClass(c).value for c in self.classes)
        self.window_sizes = tuple(int(w) for w in self.window_sizes)
        if not self.variants or not self.classes or not self.window_sizes or not self.seeds:
            raise ConfigurationError("matrix axes must all be non-empty")

    @property
    def cells(self) -> list[tuple[str, str, int, int]]:
        return [
            (v, c, w, s)
            for v in self.variants
            for c in self.classes
            for w in self.window_sizes
            for s in self.seeds
        ]


def matrix_from_settings(settings: dict) -> ExperimentMatrix:
    return ExperimentMatrix(
        variants=tuple(settings["variants"]),
        classes=tuple(settings["classes"]),
        window_sizes=tuple(settings["windows"]),
        seeds=tuple(settings["seeds"]),
    )


def run_matrix(
    workspace: Path,
    settings: dict,
    matrix: ExperimentMatrix | None = None,
    progress=None,
) -> list[dict]:
    matrix = matrix or matrix_from_settings(settings)
    all_rows = []
    for i, (variant, event_class, window, seed) in enumerate(matrix.cells, start=1):
        if progress:
            progress(f"[{i}/{len(matrix.cells)}] {cell_id(variant, event_class, window, seed)}")
        all_rows.extend(run_cell(workspace, variant, event_class, window, seed, settings))
    return all_rows


@dataclass
class AblationPlan:
    """Enhancement knockouts on one class/window, next to the unenhanced
    baseline they should collapse back to."""

    event_class: str = EventClass.BREAKAGE.value
    window_size: int = 128
    variants: tuple[str, ...] = ABLATION_VARIANTS
    seeds: tuple[int, ...] = (0,)
    epochs: int | None = None
    labels: dict = field(default_factory=lambda: dict(ABLATION_LABELS))

    def __post_init__(self) -> None:
        if set(self.variants) != set(ABLATION_VARIANTS):
            raise ConfigurationError(
                f"ablation compares exactly {sorted(ABLATION_VARIANTS)}, got {sorted(self.variants)}"
            )
        self.event_class = EventClass(self.event_class).value
        self.window_size = int(self.window_size)


def run_ablation(workspace: Path, settings: dict, plan: AblationPlan | None = None, progress=None) -> list[dict]:
    plan = plan or AblationPlan(seeds=tuple(settings["seeds"]))
    all_rows = []
    for i, variant in enumerate(plan.variants, start=1):
        for seed in plan.seeds:
            if progress:
                progress(
                    f"[{i}/{len(plan.variants)}] "
                    f"{cell_id(variant, plan.event_class, plan.window_size, seed)}"
                )
            all_rows.extend(
                run_cell(
                    workspace,
                    variant,
                    plan.event_class,
                    plan.window_size,
                    seed,
                    settings,
                    epochs=plan.epochs,
                )
            )
    return all_rows


def _pivot(rows: list[dict], metric: str) -> tuple[list[str], list[tuple[str, int]], dict]:
    """Arrange one metric as classes (rows) by (variant, window) columns.

    Seeds that share a cell are averaged.
    """
    picked = [r for r in rows if r["metric"] == metric]
    classes = sorted({r["event_class"] for r in picked})
    columns = sorted({(r["variant"], int(r["window_size"])) for r in picked})
    cells: dict = {}
    for r in picked:
        key = (r["event_class"], (r["variant"], int(r["window_size"])))
        cells.setdefault(key, []).append(float(r["value"]))
    averaged = {k: float(np.mean(v)) for k, v in cells.items()}
    return classes, columns, averaged


def _markdown_table(classes, columns, cells, fmt="{:.4f}") -> str:
    header = "| class | " + " | ".join(f"{v}/w{w}" for v, w in columns) + " |"
    rule = "|" + "---|" * (len(columns) + 1)
    lines = [header, rule]
    for cls in classes:
        row = [cls]
        for col in columns:
            value = cells.get((cls, col))
            row.append("-" if value is None else fmt.format(value))
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def write_report(workspace: Path, out_dir: Path | None = None) -> dict:
    """Render metric tables and preview figure grids from accumulated results."""
    rows = read_results(workspace)
    out = Path(out_dir) if out_dir else report_dir(workspace)
    out.mkdir(parents=True, exist_ok=True)
    sections = []
    for metric, caption in (
        ("ssim", "Mean structural similarity (higher is better)"),
        ("psnr", "Mean PSNR in dB (higher is better)"),
        ("fid", "Frechet distance between embedded sets (lower is better)"),
    ):
        classes, columns, cells = _pivot(rows, metric)
        sections.append(f"## {caption}\n")
        if not classes:
            sections.append(f"_No {metric} results recorded yet._\n")
        else:
            sections.append(_markdown_table(classes, columns, cells) + "\n")

    ablation_rows = [
        r
        for r in rows
        if r["variant"] in ABLATION_VARIANTS
        and r["event_class"] == EventClass.BREAKAGE.value
        and int(r["window_size"]) == 128
    ]
    sections.append("## Ablation (breakage, 128-sample window)\n")
    if not ablation_rows:
        sections.append("_No ablation results recorded yet._\n")
    else:
        metrics_order = ("ssim", "psnr", "fid", "tte_seconds")
        lines = [
            "| variant | configuration | " + " | ".join(metrics_order) + " |",
            "|" + "---|" * (len(metrics_order) + 2),
        ]
        for variant in ABLATION_VARIANTS:
            values = []
            for metric in metrics_order:
                vals = [
                    float(r["value"])
                    for r in ablation_rows
                    if r["variant"] == variant and r["metric"] == metric
                ]
                values.append("-" if not vals else f"{float(np.mean(vals)):.4f}")
            lines.append(
                f"| {variant} | {ABLATION_LABELS[variant]} | " + " | ".join(values) + " |"
            )
        sections.append("\n".join(lines) + "\n")

    tables_path = out / "tables.md"
    tables_path.write_text("# Benchmark results\n\n" + "\n".join(sections))

    figure_paths = _write_figures(workspace, out)
    return {"tables": tables_path, "figures": figure_paths}


def _write_figures(workspace: Path, out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    figures_dir = out / "figures"
    figures_dir.mkdir(parents=True, exist_ok=True)
    written = []
    root = runs_dir(workspace)
    if not root.exists():
        return written
    for run in sorted(root.iterdir()):
        previews = run / "previews"
        gen_path = previews / "generated.npy"
        real_path = previews / "real.npy"
        if not gen_path.exists() or not real_path.exists():
            continue
        generated = np.load(gen_path)
        real = np.load(real_path)
        window = (real.shape[1] - 1) * 2
        hop = window // 2
        duration = real.shape[2] * hop / 96_000.0
        extent = (0.0, duration, 0.0, 48_000.0)
        n_panels = 1 + generated.shape[0]
        cols = min(3, n_panels)
        rows_n = -(-n_panels // cols)
        fig, axes = plt.subplots(rows_n, cols, figsize=(3.2 * cols, 2.6 * rows_n))
        axes = np.atleast_1d(axes).ravel()
        panels = [("real", real[0])] + [
            (f"generated {i}", generated[i]) for i in range(generated.shape[0])
        ]
        for ax, (title, image) in zip(axes, panels):
            ax.imshow(image, origin="lower", aspect="auto", extent=extent, cmap="magma")
            ax.set_title(title, fontsize=8)
            ax.set_xlabel("Time (s)", fontsize=7)
            ax.set_ylabel("Frequency (Hz)", fontsize=7)
            ax.tick_params(labelsize=6)
        for ax in axes[len(panels) :]:
            ax.axis("off")
        fig.tight_layout()
        path = figures_dir / f"{run.name}.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)
    return written
