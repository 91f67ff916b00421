"""Adversarial losses for the three training families.

Scores are 1-D tensors of per-sample discriminator outputs. The
cross-entropy family expects probabilities (a sigmoid discriminator); the
least-squares and critic families operate on raw scores. The gradient
penalty interpolates real and fake samples per-sample and pulls the critic's
input-gradient norm toward 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch

from .exceptions import ConfigurationError, InputError, ShapeError

_PROB_EPS = 1e-7


@dataclass(frozen=True)
class GpConfig:
    lambda_gp: float = 12.0

    def __post_init__(self) -> None:
        if self.lambda_gp <= 0.0:
            raise ConfigurationError(f"lambda_gp must be positive, got {self.lambda_gp}")


def _check_scores(scores: torch.Tensor, name: str, probability: bool) -> torch.Tensor:
    if scores.numel() == 0:
        raise InputError(f"{name} scores are empty")
    scores = scores.reshape(-1)
    if probability and bool((scores < 0).any() or (scores > 1).any()):
        raise InputError(f"{name} scores must be probabilities in [0, 1]")
    return scores


def bce_discriminator_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    d_real = _check_scores(d_real, "real", probability=True).clamp(_PROB_EPS, 1 - _PROB_EPS)
    d_fake = _check_scores(d_fake, "fake", probability=True).clamp(_PROB_EPS, 1 - _PROB_EPS)
    return -(torch.log(d_real).mean() + torch.log(1.0 - d_fake).mean())


def bce_generator_loss(d_fake: torch.Tensor) -> torch.Tensor:
    # non-saturating form: maximize log D(G(z)) instead of minimizing log(1 - D)
    d_fake = _check_scores(d_fake, "fake", probability=True).clamp(_PROB_EPS, 1 - _PROB_EPS)
    return -torch.log(d_fake).mean()


def bce_gan_losses(
    d_real: torch.Tensor, d_fake: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    return bce_discriminator_loss(d_real, d_fake), bce_generator_loss(d_fake)


def lsgan_discriminator_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    d_real = _check_scores(d_real, "real", probability=False)
    d_fake = _check_scores(d_fake, "fake", probability=False)
    return 0.5 * (((d_real - 1.0) ** 2).mean() + (d_fake**2).mean())


def lsgan_generator_loss(d_fake: torch.Tensor) -> torch.Tensor:
    d_fake = _check_scores(d_fake, "fake", probability=False)
    return 0.5 * ((d_fake - 1.0) ** 2).mean()


def lsgan_losses(
    d_real: torch.Tensor, d_fake: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    return lsgan_discriminator_loss(d_real, d_fake), lsgan_generator_loss(d_fake)


def wasserstein_generator_loss(d_fake: torch.Tensor) -> torch.Tensor:
    return -_check_scores(d_fake, "fake", probability=False).mean()


def gradient_penalty(
    critic: Callable[[torch.Tensor], torch.Tensor],
    real_batch: torch.Tensor,
    fake_batch: torch.Tensor,
    config: GpConfig = GpConfig(),
) -> torch.Tensor:
    """lambda * E[(||grad_x critic(x_hat)||_2 - 1)^2] on per-sample mixes
    x_hat = eps * real + (1 - eps) * fake with eps ~ U(0, 1)."""
    if real_batch.shape != fake_batch.shape:
        raise ShapeError(
            f"real and fake batches differ: {tuple(real_batch.shape)} vs "
            f"{tuple(fake_batch.shape)}"
        )
    if real_batch.shape[0] == 0:
        raise InputError("gradient penalty needs a non-empty batch")
    batch = real_batch.shape[0]
    eps_shape = (batch,) + (1,) * (real_batch.dim() - 1)
    eps = torch.rand(eps_shape, dtype=real_batch.dtype, device=real_batch.device)
    mixed = (eps * real_batch + (1.0 - eps) * fake_batch.detach()).requires_grad_(True)
    scores = critic(mixed)
    grads = torch.autograd.grad(
        outputs=scores.sum(),
        inputs=mixed,
        create_graph=True,
        retain_graph=True,
    )[0]
    norms = grads.reshape(batch, -1).norm(2, dim=1)
    return config.lambda_gp * ((norms - 1.0) ** 2).mean()


def wgan_gp_losses(
    critic: Callable[[torch.Tensor], torch.Tensor],
    real_batch: torch.Tensor,
    fake_batch: torch.Tensor,
    config: GpConfig = GpConfig(),
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Critic loss, generator loss, and the penalty term itself."""
    gp = gradient_penalty(critic, real_batch, fake_batch, config)
    d_real = critic(real_batch)
    d_fake = critic(fake_batch)
    loss_d = d_fake.mean() - d_real.mean() + gp
    loss_g = -d_fake.mean()
    return loss_d, loss_g, gp
