"""Command line entry point.

Subcommands walk the pipeline end to end: synthesize or extract events,
featurize them, train variants, sample and score them, and sweep the full
benchmark matrix. Exit codes: 0 on success, 2 for configuration or input
problems, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import experiment, metrics, training
from .dataset import EventClass, extract_events, normalize, save_corpus
from .models import VARIANTS
from .exceptions import (
    CheckpointError,
    ConfigurationError,
    InputError,
    NumericalError,
    StftGanError,
)
from .features import load_feature_split, save_spectrogram

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigurationError(f"config file not found: {config_path}")
    loaded = yaml.safe_load(config_path.read_text())
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ConfigurationError(f"config file must hold a mapping, got {type(loaded).__name__}")
    return loaded


def _settings(args, seed_keys: tuple[str, ...] = ()) -> dict:
    overrides = _load_config_file(getattr(args, "config", None))
    if getattr(args, "windows", None):
        overrides["windows"] = [int(w) for w in args.windows.split(",") if w]
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    settings = experiment.resolve_profile(getattr(args, "profile", "desk"), overrides)
    seed = getattr(args, "seed", None)
    if seed is not None:
        for key in seed_keys:
            settings[key] = [seed] if key == "seeds" else seed
    return settings


def _add_common(parser: argparse.ArgumentParser, workspace: bool = True) -> None:
    if workspace:
        parser.add_argument("--workspace", required=True, help="benchmark workspace directory")
    parser.add_argument("--profile", choices=sorted(experiment.PROFILES), default="desk")
    parser.add_argument("--config", help="YAML file overriding profile settings")
    parser.add_argument("--seed", type=int, default=None)


def _cmd_synth_data(args) -> int:
    settings = _settings(args, seed_keys=("corpus_seed",))
    manifest = experiment.build_corpus(args.workspace, settings)
    print(f"wrote corpus manifest {manifest}")
    return EXIT_OK


def _cmd_extract(args) -> int:
    offsets_path = Path(args.offsets)
    if not offsets_path.exists():
        raise ConfigurationError(f"offsets file not found: {offsets_path}")
    offsets = [
        int(line.split()[0])
        for line in offsets_path.read_text().splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    from scipy.io import wavfile

    rate, samples = wavfile.read(args.recording)
    events = extract_events(
        np.asarray(samples, dtype=np.float64),
        offsets,
        EventClass(args.event_class),
        sample_rate=int(rate),
        channel=args.channel,
        source_id=args.source_id or Path(args.recording).stem,
    )
    events = [normalize(ev) for ev in events]
    manifest = save_corpus(args.out, events)
    print(f"extracted {len(events)} events -> {manifest}")
    return EXIT_OK


def _cmd_features(args) -> int:
    settings = _settings(args, seed_keys=("split_seed",))
    paths = experiment.build_features(args.workspace, settings)
    for path in paths:
        print(f"wrote feature manifest {path}")
    return EXIT_OK


def _cmd_train(args) -> int:
    settings = _settings(args, seed_keys=())
    seed = args.seed if args.seed is not None else settings["seeds"][0]
    checkpoint, state, run_dir = experiment.train_cell(
        args.workspace, args.variant, args.event_class, args.window, seed, settings,
        epochs=args.epochs,
    )
    print(f"trained to epoch {state.epoch}; checkpoint at {checkpoint.directory}")
    return EXIT_OK


def _resolve_checkpoint(path: str) -> training.Checkpoint:
    root = Path(path)
    if (root / "weights.pt").exists():
        return training.Checkpoint.load(root)
    latest = training.find_latest_checkpoint(root)
    if latest is None:
        raise CheckpointError(f"no checkpoint found under {root}")
    return latest


def _cmd_generate(args) -> int:
    checkpoint = _resolve_checkpoint(args.checkpoint)
    samples = training.generate(checkpoint, args.n, seed=args.seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for spec in samples:
        save_spectrogram(out / f"{spec.event_id}.npz", spec)
    print(f"wrote {len(samples)} spectrograms to {out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    settings = _settings(args, seed_keys=())
    seed = args.seed if args.seed is not None else settings["seeds"][0]
    if args.checkpoint:
        checkpoint = _resolve_checkpoint(args.checkpoint)
    else:
        if not args.variant:
            raise ConfigurationError(
                "pass --variant to locate a trained cell, or --checkpoint directly"
            )
        run_dir = experiment.runs_dir(args.workspace) / experiment.cell_id(
            args.variant, args.event_class, int(args.window), seed
        )
        checkpoint = _resolve_checkpoint(run_dir)
    n = args.n if args.n is not None else int(settings["eval_samples"])
    generated = training.generate(checkpoint, n, seed=seed + 1000)
    fdir = experiment.features_dir(args.workspace, int(args.window))
    val_set = load_feature_split(fdir, EventClass(args.event_class).value, "val")
    report = metrics.evaluate(
        generated,
        val_set,
        pairing_policy=args.pairing or settings["pairing_policy"],
        extractor_id=args.extractor or settings["extractor_id"],
    )
    print(
        f"ssim={report.ssim:.4f} psnr={report.psnr:.2f} fid={report.fid:.4f} "
        f"(n_generated={report.n_generated}, n_real={report.n_real}, "
        f"extractor={report.extractor_id}, pairing={report.pairing_policy})"
    )
    return EXIT_OK


def _cmd_matrix(args) -> int:
    settings = _settings(args, seed_keys=("seeds",))
    rows = experiment.run_matrix(args.workspace, settings, progress=print)
    print(f"matrix complete: {len(rows)} metric rows -> {experiment.results_path(args.workspace)}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    settings = _settings(args, seed_keys=("seeds",))
    plan = experiment.AblationPlan(seeds=tuple(settings["seeds"]), epochs=args.epochs)
    rows = experiment.run_ablation(args.workspace, settings, plan, progress=print)
    print(f"ablation complete: {len(rows)} metric rows")
    return EXIT_OK


def _cmd_report(args) -> int:
    paths = experiment.write_report(args.workspace, args.out)
    print(f"wrote {paths['tables']}")
    for figure in paths["figures"]:
        print(f"wrote {figure}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stftgan",
        description="GAN benchmark for short structural-monitoring event spectrograms",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth-data", help="synthesize the labeled event corpus")
    _add_common(p)
    p.set_defaults(func=_cmd_synth_data)

    p = sub.add_parser("extract", help="cut events out of a longer recording")
    p.add_argument("--recording", required=True, help="input WAV file")
    p.add_argument("--offsets", required=True, help="text file of sample offsets")
    p.add_argument("--event-class", required=True, choices=[c.value for c in EventClass])
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--channel", default="mono", choices=["left", "right", "mono"])
    p.add_argument("--source-id", default="")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("features", help="compute normalized spectrogram features")
    _add_common(p)
    p.add_argument("--windows", help="comma-separated window sizes, e.g. 128,256")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train", help="train one variant on one class/window")
    _add_common(p)
    p.add_argument("--variant", required=True, choices=sorted(VARIANTS))
    p.add_argument("--event-class", required=True, choices=[c.value for c in EventClass])
    p.add_argument("--window", required=True, type=int)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("generate", help="sample spectrograms from a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint or run directory")
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="score generated samples against held-out data")
    _add_common(p)
    p.add_argument("--variant")
    p.add_argument("--event-class", required=True, choices=[c.value for c in EventClass])
    p.add_argument("--window", required=True, type=int)
    p.add_argument("--checkpoint", help="explicit checkpoint directory (otherwise cell lookup)")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--pairing", choices=metrics.PAIRING_POLICIES)
    p.add_argument("--extractor")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("matrix", help="run the full variants x classes x windows grid")
    _add_common(p)
    p.set_defaults(func=_cmd_matrix)

    p = sub.add_parser("ablate", help="run the enhancement knockout comparison")
    _add_common(p)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("report", help="render tables and figures from results")
    p.add_argument("--workspace", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigurationError, InputError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StftGanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
