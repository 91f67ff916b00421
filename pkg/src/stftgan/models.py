"""Generator and discriminator architectures for every benchmark variant.

All variants share one topology family: the generator projects a latent
vector onto a coarse seed grid and upsamples through four transposed-conv
stages to a slight overshoot of the target shape, then center-crops; the
discriminator downsamples through four strided convs and scores with a
final conv averaged over space. The enhanced variant adds a dense residual
block after every stage and bidirectional recurrence over the time axis
after stages two and four, plus a two-kernel entry stage on the
discriminator side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import torch
from torch import nn
from torch.nn.utils.parametrizations import spectral_norm

from .exceptions import ConfigurationError, ShapeError
from .gru import BiGru

LATENT_DIM = 100
GENERATOR_STAGES = 4
DISCRIMINATOR_STAGES = 5
LEAKY_SLOPE = 0.2

LOSS_BCE = "bce"
LOSS_LEAST_SQUARES = "least_squares"
LOSS_WASSERSTEIN = "wasserstein_gp"
LOSS_FAMILIES = (LOSS_BCE, LOSS_LEAST_SQUARES, LOSS_WASSERSTEIN)

#: variant -> (loss family, default use_drb, default use_bigru)
VARIANTS: dict[str, tuple[str, bool, bool]] = {
    "dcgan": (LOSS_BCE, False, False),
    "lsgan": (LOSS_LEAST_SQUARES, False, False),
    "wgan_gp": (LOSS_WASSERSTEIN, False, False),
    "stftsynth": (LOSS_WASSERSTEIN, True, True),
    "stftsynth_no_drb": (LOSS_WASSERSTEIN, False, True),
    "stftsynth_no_bigru": (LOSS_WASSERSTEIN, True, False),
}

_UNSET = object()


@dataclass
class GanSpec:
    """Architecture description; flags default from the variant name.

    The three baselines must keep both enhancement flags off and the full
    enhanced variant must keep both on; the single-knockout variant names
    pin their removed block but leave the other flag free, so a
    both-blocks-removed spec is expressible through either knockout name.
    """

    variant: str
    target_shape: tuple[int, int]
    latent_dim: int = LATENT_DIM
    g_channels: int = 64
    d_channels: int = 64
    dropout: float = 0.2
    use_spectral_norm_d: bool = True
    loss_family: str = field(default=None)  # type: ignore[assignment]
    use_drb: bool = field(default=None)  # type: ignore[assignment]
    use_bigru: bool = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}"
            )
        family, drb_default, bigru_default = VARIANTS[self.variant]
        if self.loss_family is None:
            self.loss_family = family
        if self.use_drb is None:
            self.use_drb = drb_default
        if self.use_bigru is None:
            self.use_bigru = bigru_default
        if self.loss_family not in LOSS_FAMILIES:
            raise ConfigurationError(f"unknown loss family {self.loss_family!r}")
        if self.loss_family != family:
            raise ConfigurationError(
                f"variant {self.variant!r} trains with {family!r}, got {self.loss_family!r}"
            )
        if self.variant in ("dcgan", "lsgan", "wgan_gp") and (self.use_drb or self.use_bigru):
            raise ConfigurationError(
                f"baseline variant {self.variant!r} cannot enable enhancement blocks"
            )
        if self.variant == "stftsynth" and not (self.use_drb and self.use_bigru):
            raise ConfigurationError(
                "stftsynth keeps both enhancement blocks; use the knockout "
                "variants to disable one or both"
            )
        if self.variant == "stftsynth_no_drb" and self.use_drb:
            raise ConfigurationError("stftsynth_no_drb must keep use_drb disabled")
        if self.variant == "stftsynth_no_bigru" and self.use_bigru:
            raise ConfigurationError("stftsynth_no_bigru must keep use_bigru disabled")
        shape = tuple(int(v) for v in self.target_shape)
        if len(shape) != 2 or min(shape) < 1:
            raise ConfigurationError(
                f"target_shape must be two positive sizes, got {self.target_shape}"
            )
        self.target_shape = shape
        if self.latent_dim < 1:
            raise ConfigurationError(f"latent_dim must be positive, got {self.latent_dim}")
        if self.g_channels < 1 or self.d_channels < 1:
            raise ConfigurationError("channel widths must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.multiscale_d and self.d_channels % 2:
            raise ConfigurationError(
                "the two-kernel entry stage needs an even discriminator width"
            )

    @property
    def multiscale_d(self) -> bool:
        return bool(self.use_drb or self.use_bigru)


def make_gan_spec(variant: str, target_shape: tuple[int, int], **overrides) -> GanSpec:
    return GanSpec(variant=variant, target_shape=target_shape, **overrides)


def axis_plan(target: int, stages: int = GENERATOR_STAGES) -> tuple[int, list[int]]:
    """Seed size and per-stage strides that overshoot ``target`` minimally.

    As many stride-2 stages as the target needs (at most ``stages``) run
    first; the remainder keep stride 1. The seed size is the smallest value
    whose doubling chain reaches at least the target, so the overshoot per
    axis is always less than one seed cell's worth of doubling.
    """
    target = int(target)
    if target < 1:
        raise ConfigurationError(f"target axis size must be >= 1, got {target}")
    doublings = min(stages, (target - 1).bit_length())
    seed = -(-target // (2**doublings))
    strides = [2] * doublings + [1] * (stages - doublings)
    return seed, strides


def upsample_plan(target_shape: tuple[int, int]) -> dict:
    """Full generator geometry: seed grid, strides, overshoot, crop offsets."""
    (f_seed, f_strides) = axis_plan(target_shape[0])
    (t_seed, t_strides) = axis_plan(target_shape[1])
    f_sizes, t_sizes = [f_seed], [t_seed]
    for fs, ts in zip(f_strides, t_strides):
        f_sizes.append(f_sizes[-1] * fs)
        t_sizes.append(t_sizes[-1] * ts)
    f_off = (f_sizes[-1] - target_shape[0]) // 2
    t_off = (t_sizes[-1] - target_shape[1]) // 2
    return {
        "seed": (f_seed, t_seed),
        "strides": list(zip(f_strides, t_strides)),
        "stage_shapes": list(zip(f_sizes[1:], t_sizes[1:])),
        "overshoot": (f_sizes[-1], t_sizes[-1]),
        "crop_offset": (f_off, t_off),
    }


class DenseResidualBlock(nn.Module):
    """Two 3x3 convs with dense concatenation, projected back and added to
    the input; channel count is preserved."""

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(2 * channels, channels, 3, 1, 1)
        self.norm2 = nn.BatchNorm2d(channels)
        self.project = nn.Conv2d(3 * channels, channels, 1)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ShapeError(
                f"expected (batch, {self.channels}, f, t) input, got {tuple(x.shape)}"
            )
        a1 = self.act(self.norm1(self.conv1(x)))
        a2 = self.act(self.norm2(self.conv2(torch.cat([x, a1], dim=1))))
        return x + self.project(torch.cat([x, a1, a2], dim=1))


class TimeContextBlock(nn.Module):
    """Bidirectional recurrence along the time axis of a feature map.

    Each time step is flattened across channels and frequency, scanned in
    both directions, broadcast back over frequency, projected to the host
    channel width, and added residually so spatial detail survives.
    """

    def __init__(self, channels: int, freq_bins: int):
        super().__init__()
        self.channels = channels
        self.freq_bins = freq_bins
        self.rnn = BiGru(input_size=channels * freq_bins, hidden_size=channels)
        self.project = nn.Conv2d(2 * channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.channels or x.shape[2] != self.freq_bins:
            raise ShapeError(
                f"expected (batch, {self.channels}, {self.freq_bins}, t) input, "
                f"got {tuple(x.shape)}"
            )
        batch, channels, freq, steps = x.shape
        seq = x.permute(0, 3, 1, 2).reshape(batch, steps, channels * freq)
        context = self.rnn(seq)  # (batch, steps, 2 * channels)
        context = context.permute(0, 2, 1).unsqueeze(2).expand(-1, -1, freq, -1)
        return x + self.project(context.contiguous())


class Generator(nn.Module):
    def __init__(self, spec: GanSpec):
        super().__init__()
        self.spec = spec
        plan = upsample_plan(spec.target_shape)
        self.plan = plan
        g = spec.g_channels
        widths = [8 * g, 4 * g, 2 * g, g, g]
        f_seed, t_seed = plan["seed"]
        self.seed_shape = (widths[0], f_seed, t_seed)
        self.project = nn.Linear(spec.latent_dim, widths[0] * f_seed * t_seed)
        self.entry_norm = nn.BatchNorm2d(widths[0])
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        self.stages = nn.ModuleList()
        for i in range(GENERATOR_STAGES):
            f_stride, t_stride = plan["strides"][i]
            kernel = (4 if f_stride == 2 else 3, 4 if t_stride == 2 else 3)
            stage = nn.ModuleDict()
            stage["up"] = nn.ConvTranspose2d(
                widths[i], widths[i + 1], kernel, (f_stride, t_stride), (1, 1)
            )
            stage["norm"] = nn.BatchNorm2d(widths[i + 1])
            if spec.use_drb:
                stage["dense_residual"] = DenseResidualBlock(widths[i + 1])
            if spec.use_bigru and (i + 1) in (2, 4):
                stage["time_context"] = TimeContextBlock(
                    widths[i + 1], plan["stage_shapes"][i][0]
                )
            self.stages.append(stage)
        self.head = nn.Conv2d(widths[-1], 1, 3, 1, 1)
        self.out = nn.Tanh()

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.dim() != 2 or z.shape[1] != self.spec.latent_dim:
            raise ShapeError(
                f"expected latent batch of shape (n, {self.spec.latent_dim}), "
                f"got {tuple(z.shape)}"
            )
        x = self.project(z).view(z.shape[0], *self.seed_shape)
        x = self.act(self.entry_norm(x))
        for stage in self.stages:
            x = self.act(stage["norm"](stage["up"](x)))
            if "dense_residual" in stage:
                x = stage["dense_residual"](x)
            if "time_context" in stage:
                x = stage["time_context"](x)
        x = self.out(self.head(x))
        f_off, t_off = self.plan["crop_offset"]
        f_target, t_target = self.spec.target_shape
        return x[:, :, f_off : f_off + f_target, t_off : t_off + t_target]


class Discriminator(nn.Module):
    def __init__(self, spec: GanSpec):
        super().__init__()
        self.spec = spec
        d = spec.d_channels

        def conv(c_in: int, c_out: int, kernel: int, stride: int, pad: int) -> nn.Module:
            layer = nn.Conv2d(c_in, c_out, kernel, stride, pad)
            nn.init.xavier_uniform_(layer.weight)
            nn.init.zeros_(layer.bias)
            return spectral_norm(layer) if spec.use_spectral_norm_d else layer

        if spec.multiscale_d:
            self.entry_wide = conv(1, d // 2, 5, 2, 2)
            self.entry_narrow = conv(1, d // 2, 3, 2, 1)
        else:
            self.entry = conv(1, d, 5, 2, 2)
        self.body = nn.ModuleList(
            [
                conv(d, 2 * d, 5, 2, 2),
                conv(2 * d, 4 * d, 5, 2, 2),
                conv(4 * d, 8 * d, 5, 2, 2),
            ]
        )
        self.score = conv(8 * d, 1, 3, 1, 1)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        self.drop = nn.Dropout(spec.dropout)
        self.final_sigmoid = spec.loss_family == LOSS_BCE

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        expected = (1, *self.spec.target_shape)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeError(
                f"expected input of shape (n, {expected[0]}, {expected[1]}, "
                f"{expected[2]}), got {tuple(x.shape)}"
            )
        if self.spec.multiscale_d:
            x = torch.cat([self.entry_wide(x), self.entry_narrow(x)], dim=1)
        else:
            x = self.entry(x)
        x = self.drop(self.act(x))
        for layer in self.body:
            x = self.drop(self.act(layer(x)))
        scores = self.score(x).mean(dim=(2, 3)).squeeze(1)
        return torch.sigmoid(scores) if self.final_sigmoid else scores


def _xavier_convs(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.xavier_uniform_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def build_generator(spec: GanSpec) -> Generator:
    gen = Generator(spec)
    _xavier_convs(gen)
    return gen


def build_discriminator(spec: GanSpec) -> Discriminator:
    # conv init happens inside, before spectral norm wraps the weights
    return Discriminator(spec)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def describe_layers(module: nn.Module) -> list[dict]:
    """Flat manifest of named children with their class and parameter count."""
    rows = []
    for name, child in module.named_children():
        rows.append(
            {
                "name": name,
                "type": child.__class__.__name__,
                "parameters": parameter_count(child),
            }
        )
    return rows
