"""Adversarial training with deterministic checkpoint/resume.

One global torch RNG, seeded once per run, drives every stochastic choice
(init, batch order, latents, dropout, penalty mixing). Its state is saved
in each checkpoint, so resuming replays the exact epoch sequence a straight
run would have produced.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import losses as L
from .exceptions import (
    CheckpointError,
    ConfigurationError,
    InputError,
    NumericalError,
)
from .features import ALLOWED_WINDOWS, SCALE_UNIT, DEFAULT_FLOOR_DB, SpectrogramTensor, StftParams
from .models import (
    LOSS_BCE,
    LOSS_LEAST_SQUARES,
    LOSS_WASSERSTEIN,
    GanSpec,
    build_discriminator,
    build_generator,
    describe_layers,
)

LOSS_COLUMNS = ("epoch", "loss_d", "loss_g", "gp", "lr_g", "lr_d", "tte_seconds")

_OPTIMIZERS = ("nadam", "adam")


@dataclass
class TrainConfig:
    lr_generator: float = 2e-5
    lr_discriminator: float = 2e-6
    lr_decay_factor: float = 0.15
    lr_patience: int = 5
    lr_smoothing_window: int = 5
    lr_warmup_epochs: int = 25
    batch_size: int = 16
    max_epochs: int = 2000
    n_critic: int | None = None
    optimizer: str = "nadam"
    dropout: float = 0.2
    lambda_gp: float = 12.0
    seed: int = 0
    checkpoint_every: int = 100
    collapse_distance_floor: float = 1e-3

    def __post_init__(self) -> None:
        if self.lr_generator <= 0 or self.lr_discriminator <= 0:
            raise ConfigurationError("learning rates must be positive")
        if not 0.0 < self.lr_decay_factor < 1.0:
            raise ConfigurationError(
                f"lr_decay_factor must lie in (0, 1), got {self.lr_decay_factor}"
            )
        if self.lr_patience < 1 or self.lr_smoothing_window < 1:
            raise ConfigurationError("lr_patience and lr_smoothing_window must be >= 1")
        if self.lr_warmup_epochs < 0:
            raise ConfigurationError("lr_warmup_epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.n_critic is not None and self.n_critic < 1:
            raise ConfigurationError(f"n_critic must be >= 1, got {self.n_critic}")
        if self.optimizer not in _OPTIMIZERS:
            raise ConfigurationError(
                f"optimizer must be one of {_OPTIMIZERS}, got {self.optimizer!r}"
            )
        if self.lambda_gp <= 0:
            raise ConfigurationError(f"lambda_gp must be positive, got {self.lambda_gp}")
        if self.checkpoint_every < 1:
            raise ConfigurationError("checkpoint_every must be >= 1")


def resolve_n_critic(config: TrainConfig, spec: GanSpec) -> int:
    if config.n_critic is not None:
        return config.n_critic
    return 5 if spec.loss_family == LOSS_WASSERSTEIN else 1


@dataclass
class EpochRecord:
    epoch: int
    loss_d: float
    loss_g: float
    gp: float
    lr_g: float
    lr_d: float
    tte_seconds: float

    def as_row(self) -> dict:
        return asdict(self)

    @classmethod
    def from_row(cls, row: dict) -> "EpochRecord":
        return cls(
            epoch=int(row["epoch"]),
            loss_d=float(row["loss_d"]),
            loss_g=float(row["loss_g"]),
            gp=float(row["gp"]),
            lr_g=float(row["lr_g"]),
            lr_d=float(row["lr_d"]),
            tte_seconds=float(row["tte_seconds"]),
        )


@dataclass
class TrainState:
    epoch: int = 0
    history: list[EpochRecord] = field(default_factory=list)

    @property
    def mean_epoch_seconds(self) -> float:
        if not self.history:
            return 0.0
        return float(np.mean([r.tte_seconds for r in self.history]))


class PlateauTracker:
    """Reduce-on-plateau bookkeeping over a smoothed monitored value.

    The monitored value is averaged over a short trailing window; when the
    smoothed value stops improving for ``patience`` consecutive epochs a
    reduction is signalled, followed by a cooldown of the same length. No
    reductions are signalled during the initial warmup.
    """

    def __init__(
        self,
        factor: float = 0.15,
        patience: int = 5,
        smoothing_window: int = 5,
        warmup: int = 25,
        threshold: float = 1e-6,
    ):
        self.factor = factor
        self.patience = patience
        self.smoothing_window = smoothing_window
        self.warmup = warmup
        self.threshold = threshold
        self.values: list[float] = []
        self.best = float("inf")
        self.bad_epochs = 0
        self.cooldown = 0

    def update(self, value: float) -> bool:
        self.values.append(float(value))
        if len(self.values) <= self.warmup:
            return False
        smoothed = float(np.mean(self.values[-self.smoothing_window :]))
        if self.cooldown > 0:
            self.cooldown -= 1
            self.best = min(self.best, smoothed)
            return False
        if smoothed < self.best - self.threshold:
            self.best = smoothed
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            self.cooldown = self.patience
            self.best = smoothed
            return True
        return False

    def state_dict(self) -> dict:
        return {
            "values": list(self.values),
            "best": self.best,
            "bad_epochs": self.bad_epochs,
            "cooldown": self.cooldown,
        }

    def load_state_dict(self, state: dict) -> None:
        self.values = [float(v) for v in state["values"]]
        self.best = float(state["best"])
        self.bad_epochs = int(state["bad_epochs"])
        self.cooldown = int(state["cooldown"])


@dataclass
class Checkpoint:
    directory: Path
    metadata: dict

    @classmethod
    def load(cls, directory: Path) -> "Checkpoint":
        directory = Path(directory)
        weights = directory / "weights.pt"
        meta = directory / "metadata.json"
        if not weights.exists() or not meta.exists():
            raise CheckpointError(
                f"checkpoint at {directory} is incomplete (needs weights.pt and metadata.json)"
            )
        try:
            metadata = json.loads(meta.read_text())
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"unreadable checkpoint metadata at {meta}: {exc}") from exc
        return cls(directory=directory, metadata=metadata)

    def load_payload(self) -> dict:
        try:
            return torch.load(self.directory / "weights.pt", map_location="cpu")
        except Exception as exc:  # torch raises several unpickling error types
            raise CheckpointError(f"corrupt checkpoint weights in {self.directory}: {exc}") from exc


def _spec_identity(spec: GanSpec, config: TrainConfig) -> dict:
    ident = {f"spec.{k}": v for k, v in asdict(spec).items()}
    for key in (
        "lr_generator",
        "lr_discriminator",
        "lr_decay_factor",
        "lr_patience",
        "lr_smoothing_window",
        "lr_warmup_epochs",
        "batch_size",
        "n_critic",
        "optimizer",
        "dropout",
        "lambda_gp",
        "seed",
    ):
        ident[f"train.{key}"] = getattr(config, key)
    ident["spec.target_shape"] = list(spec.target_shape)
    return ident


def _as_batch_array(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        arr = np.asarray(data, dtype=np.float32)
    else:
        arrs = []
        for item in data:
            arrs.append(item.values if isinstance(item, SpectrogramTensor) else np.asarray(item))
        if not arrs:
            raise InputError("empty training set")
        arr = np.stack(arrs).astype(np.float32)
    if arr.ndim != 3:
        raise InputError(f"expected (n, f, t) training data, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InputError("training data contains non-finite values")
    if float(np.abs(arr).max()) > 1.0 + 1e-6:
        raise InputError("training data must be in the unit range [-1, 1]")
    return arr


def _checkpoint_dir(run_dir: Path, epoch: int) -> Path:
    return Path(run_dir) / "checkpoints" / f"epoch_{epoch:05d}"


def find_latest_checkpoint(run_dir: Path) -> Checkpoint | None:
    root = Path(run_dir) / "checkpoints"
    if not root.exists():
        return None
    best = None
    for child in root.iterdir():
        if child.is_dir() and child.name.startswith("epoch_"):
            try:
                epoch = int(child.name.split("_", 1)[1])
            except ValueError:
                continue
            if best is None or epoch > best[0]:
                best = (epoch, child)
    if best is None:
        return None
    return Checkpoint.load(best[1])


def _write_losses_csv(run_dir: Path, history: Sequence[EpochRecord]) -> None:
    with open(Path(run_dir) / "losses.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS)
        writer.writeheader()
        for record in history:
            writer.writerow(record.as_row())


def _append_losses_csv(run_dir: Path, record: EpochRecord) -> None:
    path = Path(run_dir) / "losses.csv"
    fresh = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS)
        if fresh:
            writer.writeheader()
        writer.writerow(record.as_row())


def read_losses_csv(run_dir: Path) -> list[EpochRecord]:
    path = Path(run_dir) / "losses.csv"
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return [EpochRecord.from_row(row) for row in csv.DictReader(fh)]


def _infer_window(freq_bins: int) -> int | None:
    window = (freq_bins - 1) * 2
    return window if window in ALLOWED_WINDOWS else None


def _save_checkpoint(
    run_dir: Path,
    epoch: int,
    spec: GanSpec,
    config: TrainConfig,
    generator,
    discriminator,
    opt_g,
    opt_d,
    tracker_g: PlateauTracker,
    tracker_d: PlateauTracker,
) -> Checkpoint:
    directory = _checkpoint_dir(run_dir, epoch)
    directory.mkdir(parents=True, exist_ok=True)
    payload = {
        "epoch": epoch,
        "generator": generator.state_dict(),
        "discriminator": discriminator.state_dict(),
        "opt_g": opt_g.state_dict(),
        "opt_d": opt_d.state_dict(),
        "rng_state": torch.get_rng_state(),
        "tracker_g": tracker_g.state_dict(),
        "tracker_d": tracker_d.state_dict(),
        "lr_g": opt_g.param_groups[0]["lr"],
        "lr_d": opt_d.param_groups[0]["lr"],
    }
    torch.save(payload, directory / "weights.pt")
    metadata = {
        "variant": spec.variant,
        "target_shape": list(spec.target_shape),
        "latent_dim": spec.latent_dim,
        "g_channels": spec.g_channels,
        "d_channels": spec.d_channels,
        "use_drb": spec.use_drb,
        "use_bigru": spec.use_bigru,
        "loss_family": spec.loss_family,
        "dropout": spec.dropout,
        "use_spectral_norm_d": spec.use_spectral_norm_d,
        "epoch": epoch,
        "seed": config.seed,
        "window_size": _infer_window(spec.target_shape[0]),
        "generator_layers": describe_layers(generator),
        "discriminator_layers": describe_layers(discriminator),
    }
    (directory / "metadata.json").write_text(json.dumps(metadata, indent=2))
    return Checkpoint(directory=directory, metadata=metadata)


def spec_from_metadata(metadata: dict) -> GanSpec:
    return GanSpec(
        variant=metadata["variant"],
        target_shape=tuple(metadata["target_shape"]),
        latent_dim=int(metadata["latent_dim"]),
        g_channels=int(metadata["g_channels"]),
        d_channels=int(metadata["d_channels"]),
        dropout=float(metadata["dropout"]),
        use_spectral_norm_d=bool(metadata["use_spectral_norm_d"]),
        loss_family=metadata["loss_family"],
        use_drb=bool(metadata["use_drb"]),
        use_bigru=bool(metadata["use_bigru"]),
    )


def _make_optimizer(config: TrainConfig, params, lr: float):
    cls = torch.optim.NAdam if config.optimizer == "nadam" else torch.optim.Adam
    return cls(params, lr=lr)


def _check_finite(value: torch.Tensor, component: str, epoch: int) -> None:
    if not bool(torch.isfinite(value)):
        raise NumericalError(f"non-finite {component} loss at epoch {epoch}")


def train(
    spec: GanSpec,
    data,
    config: TrainConfig,
    run_dir: Path,
    resume: bool = True,
) -> tuple[Checkpoint, TrainState]:
    """Train one generator/discriminator pair on unit-range spectrograms.

    ``run_dir`` receives a config snapshot, per-epoch losses.csv rows, and
    checkpoints at the configured cadence plus the final epoch. If the run
    directory already holds checkpoints and ``resume`` is true, training
    continues from the latest one (after validating that the architecture
    and optimization settings match the snapshot) until ``max_epochs``.
    """
    if config.dropout != spec.dropout:
        raise ConfigurationError(
            f"dropout mismatch: config {config.dropout} vs architecture {spec.dropout}"
        )
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    arr = _as_batch_array(data)
    if tuple(arr.shape[1:]) != spec.target_shape:
        raise ConfigurationError(
            f"training data shape {tuple(arr.shape[1:])} does not match "
            f"model target {spec.target_shape}"
        )
    if arr.shape[0] < config.batch_size:
        raise ConfigurationError(
            f"{arr.shape[0]} samples cannot fill one batch of {config.batch_size}"
        )
    n_critic = resolve_n_critic(config, spec)
    identity = _spec_identity(spec, config)
    snapshot_path = run_dir / "config.json"

    latest = find_latest_checkpoint(run_dir) if resume else None
    torch.manual_seed(config.seed)
    generator = build_generator(spec)
    discriminator = build_discriminator(spec)
    opt_g = _make_optimizer(config, generator.parameters(), config.lr_generator)
    opt_d = _make_optimizer(config, discriminator.parameters(), config.lr_discriminator)
    tracker_args = dict(
        factor=config.lr_decay_factor,
        patience=config.lr_patience,
        smoothing_window=config.lr_smoothing_window,
        warmup=config.lr_warmup_epochs,
    )
    tracker_g = PlateauTracker(**tracker_args)
    tracker_d = PlateauTracker(**tracker_args)
    state = TrainState()

    if latest is not None:
        snapshot = json.loads(snapshot_path.read_text()) if snapshot_path.exists() else {}
        stale = {
            k: (snapshot.get(k), v)
            for k, v in identity.items()
            if snapshot.get(k) != v
        }
        if stale:
            raise ConfigurationError(
                f"resume settings differ from the run snapshot: {sorted(stale)}"
            )
        payload = latest.load_payload()
        generator.load_state_dict(payload["generator"])
        discriminator.load_state_dict(payload["discriminator"])
        opt_g.load_state_dict(payload["opt_g"])
        opt_d.load_state_dict(payload["opt_d"])
        tracker_g.load_state_dict(payload["tracker_g"])
        tracker_d.load_state_dict(payload["tracker_d"])
        torch.set_rng_state(payload["rng_state"])
        state.epoch = int(payload["epoch"])
        state.history = [r for r in read_losses_csv(run_dir) if r.epoch <= state.epoch]
        _write_losses_csv(run_dir, state.history)
    else:
        snapshot_path.write_text(json.dumps(identity, indent=2, sort_keys=True))
        _write_losses_csv(run_dir, [])

    data_tensor = torch.from_numpy(arr).unsqueeze(1)  # (n, 1, f, t)
    n_batches = arr.shape[0] // config.batch_size
    gp_config = L.GpConfig(lambda_gp=config.lambda_gp)
    checkpoint = latest

    for epoch in range(state.epoch + 1, config.max_epochs + 1):
        t_start = time.perf_counter()
        perm = torch.randperm(arr.shape[0])
        d_losses, g_losses, gp_values = [], [], []
        for b in range(n_batches):
            idx = perm[b * config.batch_size : (b + 1) * config.batch_size]
            real = data_tensor[idx]
            for _ in range(n_critic):
                z = torch.randn(config.batch_size, spec.latent_dim)
                with torch.no_grad():
                    fake = generator(z)
                if spec.loss_family == LOSS_WASSERSTEIN:
                    loss_d, _, gp = L.wgan_gp_losses(
                        discriminator, real, fake, gp_config
                    )
                    _check_finite(gp, "gradient-penalty", epoch)
                    gp_values.append(float(gp.detach()))
                else:
                    d_real = discriminator(real)
                    d_fake = discriminator(fake)
                    if spec.loss_family == LOSS_BCE:
                        loss_d = L.bce_discriminator_loss(d_real, d_fake)
                    else:
                        loss_d = L.lsgan_discriminator_loss(d_real, d_fake)
                _check_finite(loss_d, "discriminator", epoch)
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
                d_losses.append(float(loss_d.detach()))
            z = torch.randn(config.batch_size, spec.latent_dim)
            fake = generator(z)
            scores = discriminator(fake)
            if spec.loss_family == LOSS_WASSERSTEIN:
                loss_g = L.wasserstein_generator_loss(scores)
            elif spec.loss_family == LOSS_BCE:
                loss_g = L.bce_generator_loss(scores)
            else:
                loss_g = L.lsgan_generator_loss(scores)
            _check_finite(loss_g, "generator", epoch)
            opt_g.zero_grad()
            loss_g.backward()
            opt_g.step()
            g_losses.append(float(loss_g.detach()))

        # plateau signal: the critic's mean epoch loss for wasserstein
        # variants (it declines steadily while the critic is still learning),
        # the generator's mean loss otherwise
        if spec.loss_family == LOSS_WASSERSTEIN:
            monitored = abs(float(np.mean(d_losses)))
        else:
            monitored = float(np.mean(g_losses))
        if tracker_g.update(monitored):
            for group in opt_g.param_groups:
                group["lr"] *= config.lr_decay_factor
        if tracker_d.update(monitored):
            for group in opt_d.param_groups:
                group["lr"] *= config.lr_decay_factor

        record = EpochRecord(
            epoch=epoch,
            loss_d=float(np.mean(d_losses)),
            loss_g=float(np.mean(g_losses)),
            gp=float(np.mean(gp_values)) if gp_values else 0.0,
            lr_g=float(opt_g.param_groups[0]["lr"]),
            lr_d=float(opt_d.param_groups[0]["lr"]),
            tte_seconds=time.perf_counter() - t_start,
        )
        state.history.append(record)
        state.epoch = epoch
        _append_losses_csv(run_dir, record)
        if epoch % config.checkpoint_every == 0 or epoch == config.max_epochs:
            checkpoint = _save_checkpoint(
                run_dir, epoch, spec, config, generator, discriminator,
                opt_g, opt_d, tracker_g, tracker_d,
            )

    if checkpoint is None:
        checkpoint = _save_checkpoint(
            run_dir, state.epoch, spec, config, generator, discriminator,
            opt_g, opt_d, tracker_g, tracker_d,
        )
    return checkpoint, state


def generate(
    checkpoint: Checkpoint | Path,
    n: int,
    seed: int = 0,
    params: StftParams | None = None,
    batch_size: int = 64,
) -> list[SpectrogramTensor]:
    """Sample n spectrograms from a checkpointed generator.

    Sampling uses a dedicated RNG so it never perturbs training
    determinism. Outputs are unit-range spectrograms tagged with the
    normalization endpoints (peak at 0 dB, default floor) so they can be
    mapped back to linear magnitudes.
    """
    if n < 0:
        raise ConfigurationError(f"sample count must be >= 0, got {n}")
    if n == 0:
        return []
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint.load(Path(checkpoint))
    spec = spec_from_metadata(checkpoint.metadata)
    payload = checkpoint.load_payload()
    # building the generator consumes the global RNG for weight init before
    # the checkpointed weights replace them; snapshot it so sampling leaves
    # training determinism untouched
    rng_snapshot = torch.get_rng_state()
    try:
        generator = build_generator(spec)
    finally:
        torch.set_rng_state(rng_snapshot)
    try:
        generator.load_state_dict(payload["generator"])
    except (KeyError, RuntimeError) as exc:
        raise CheckpointError(f"generator weights do not match metadata: {exc}") from exc
    generator.eval()
    if params is None:
        window = checkpoint.metadata.get("window_size") or _infer_window(spec.target_shape[0])
        if window is None:
            raise ConfigurationError(
                f"cannot infer an analysis window from {spec.target_shape[0]} frequency "
                "bins; pass params explicitly"
            )
        params = StftParams(window_size=int(window))
    rng = torch.Generator().manual_seed(seed)
    chunks = []
    remaining = n
    with torch.no_grad():
        while remaining > 0:
            take = min(batch_size, remaining)
            z = torch.randn(take, spec.latent_dim, generator=rng)
            chunks.append(generator(z).squeeze(1).numpy().astype(np.float64))
            remaining -= take
    samples = np.concatenate(chunks, axis=0)
    return [
        SpectrogramTensor(
            values=samples[i],
            params=params,
            scale=SCALE_UNIT,
            floor_db=DEFAULT_FLOOR_DB,
            peak_db=0.0,
            event_id=f"generated-{seed}-{i:05d}",
            event_class=checkpoint.metadata.get("event_class", ""),
        )
        for i in range(n)
    ]


@dataclass
class CollapseDiagnostics:
    mean_pairwise_distance: float
    min_pairwise_distance: float
    collapse_flagged: bool
    recent_loss_g: float | None
    recent_loss_d: float | None


def monitor_collapse(
    history: Sequence[EpochRecord],
    generated,
    distance_floor: float = 1e-3,
) -> CollapseDiagnostics:
    """Flag mode collapse from sample diversity; losses give the trend context."""
    if isinstance(generated, np.ndarray):
        arr = np.asarray(generated, dtype=np.float64)
    else:
        arr = np.stack(
            [g.values if isinstance(g, SpectrogramTensor) else np.asarray(g) for g in generated]
        )
    if arr.ndim != 3 or arr.shape[0] < 2:
        raise InputError("collapse diagnostics need at least 2 generated samples")
    flat = arr.reshape(arr.shape[0], -1)
    diffs = flat[:, None, :] - flat[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=-1))
    upper = dist[np.triu_indices(arr.shape[0], k=1)]
    mean_d = float(upper.mean())
    min_d = float(upper.min())
    return CollapseDiagnostics(
        mean_pairwise_distance=mean_d,
        min_pairwise_distance=min_d,
        collapse_flagged=mean_d < distance_floor,
        recent_loss_g=history[-1].loss_g if history else None,
        recent_loss_d=history[-1].loss_d if history else None,
    )
