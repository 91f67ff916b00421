"""Similarity and distribution metrics for generated spectrograms.

SSIM follows the luminance / contrast / structure product with a Gaussian
sliding window, PSNR is capped so identical images stay finite, and the
distribution distance is the Frechet form between Gaussian fits of embedded
feature vectors. The embedding is pluggable: spectrograms are not natural
images, so instead of an image-classification network the default embedder
is a fixed-seed random-projection conv stack, and any alternative can be
registered under its own id (reported alongside the scores, since absolute
values are only comparable within one embedder).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch
from numpy.lib.stride_tricks import sliding_window_view
from torch import nn

from .exceptions import ConfigurationError, InputError, NumericalError, ShapeError
from .features import SpectrogramTensor

DEFAULT_EXTRACTOR_ID = "randconv64"
PAIRING_POLICIES = ("all_pairs", "best_match")
PSNR_CAP_DB = 100.0


def gaussian_window(size: int, sigma: float = 1.5) -> np.ndarray:
    """Normalized 2-D Gaussian weighting window."""
    if size < 1:
        raise ConfigurationError(f"window size must be >= 1, got {size}")
    if sigma <= 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    offsets = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _windowed_stats(x: np.ndarray, y: np.ndarray, kernel: np.ndarray):
    size = kernel.shape[0]
    wx = sliding_window_view(x, (size, size))
    wy = sliding_window_view(y, (size, size))
    mu_x = np.tensordot(wx, kernel, axes=((2, 3), (0, 1)))
    mu_y = np.tensordot(wy, kernel, axes=((2, 3), (0, 1)))
    xx = np.tensordot(wx * wx, kernel, axes=((2, 3), (0, 1)))
    yy = np.tensordot(wy * wy, kernel, axes=((2, 3), (0, 1)))
    xy = np.tensordot(wx * wy, kernel, axes=((2, 3), (0, 1)))
    var_x = np.maximum(xx - mu_x**2, 0.0)
    var_y = np.maximum(yy - mu_y**2, 0.0)
    cov = xy - mu_x * mu_y
    return mu_x, mu_y, var_x, var_y, cov


def ssim(
    x: np.ndarray,
    y: np.ndarray,
    data_range: float = 1.0,
    win_size: int | None = None,
    sigma: float = 1.5,
) -> float:
    """Mean structural similarity over valid window positions.

    The window side defaults to 7 or the smaller image dimension, whichever
    is less, so narrow spectrograms remain measurable.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"image shapes differ: {x.shape} vs {y.shape}")
    if x.ndim != 2:
        raise ShapeError(f"expected 2-D images, got {x.ndim}-D")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise InputError("images contain non-finite values")
    if data_range <= 0:
        raise ConfigurationError(f"data_range must be positive, got {data_range}")
    if win_size is None:
        win_size = min(7, min(x.shape))
    if win_size < 1 or win_size > min(x.shape):
        raise ConfigurationError(
            f"win_size must lie in [1, {min(x.shape)}], got {win_size}"
        )
    kernel = gaussian_window(win_size, sigma)
    mu_x, mu_y, var_x, var_y, cov = _windowed_stats(x, y, kernel)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    c3 = c2 / 2.0
    sd_x = np.sqrt(var_x)
    sd_y = np.sqrt(var_y)
    luminance = (2.0 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    contrast = (2.0 * sd_x * sd_y + c2) / (var_x + var_y + c2)
    structure = (cov + c3) / (sd_x * sd_y + c3)
    return float((luminance * contrast * structure).mean())


class PsnrResult(NamedTuple):
    value_db: float
    capped: bool


def psnr(
    reference: np.ndarray,
    test: np.ndarray,
    data_range: float = 1.0,
    cap_db: float = PSNR_CAP_DB,
) -> PsnrResult:
    """Peak signal-to-noise ratio, capped (and flagged) for identical inputs."""
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ShapeError(f"image shapes differ: {reference.shape} vs {test.shape}")
    if not (np.isfinite(reference).all() and np.isfinite(test).all()):
        raise InputError("images contain non-finite values")
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        return PsnrResult(cap_db, True)
    value = 10.0 * np.log10(data_range**2 / mse)
    if value > cap_db:
        return PsnrResult(cap_db, True)
    return PsnrResult(float(value), False)


def _psd_sqrt_eigvals(matrix: np.ndarray, atol: float) -> tuple[np.ndarray, np.ndarray]:
    eigvals, eigvecs = np.linalg.eigh(matrix)
    tol = atol * max(1.0, float(np.abs(eigvals).max(initial=0.0)))
    if eigvals.min(initial=0.0) < -tol:
        raise NumericalError(
            f"matrix is indefinite (eigenvalue {eigvals.min():.3e} below -{tol:.3e})"
        )
    return np.clip(eigvals, 0.0, None), eigvecs


def fid(
    real_features: np.ndarray,
    generated_features: np.ndarray,
    atol: float = 1e-8,
) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    The cross term Tr((S_r S_g)^(1/2)) is computed from the eigenvalues of
    the symmetrized product S_r^(1/2) S_g S_r^(1/2); small negative
    eigenvalues within ``atol`` (scaled by the spectral radius) are clamped,
    anything larger raises.
    """
    real_features = np.asarray(real_features, dtype=np.float64)
    generated_features = np.asarray(generated_features, dtype=np.float64)
    for name, feats in (("real", real_features), ("generated", generated_features)):
        if feats.ndim != 2:
            raise ShapeError(f"{name} features must be 2-D (n, dim), got {feats.shape}")
        if feats.shape[0] < 2:
            raise InputError(f"need at least 2 {name} feature vectors, got {feats.shape[0]}")
        if not np.isfinite(feats).all():
            raise InputError(f"{name} features contain non-finite values")
    if real_features.shape[1] != generated_features.shape[1]:
        raise ShapeError(
            f"feature dims differ: {real_features.shape[1]} vs {generated_features.shape[1]}"
        )
    mu_r = real_features.mean(axis=0)
    mu_g = generated_features.mean(axis=0)
    cov_r = np.atleast_2d(np.cov(real_features, rowvar=False))
    cov_g = np.atleast_2d(np.cov(generated_features, rowvar=False))
    lam_r, vec_r = _psd_sqrt_eigvals(cov_r, atol)
    sqrt_r = (vec_r * np.sqrt(lam_r)) @ vec_r.T
    product = sqrt_r @ cov_g @ sqrt_r
    product = (product + product.T) / 2.0
    lam_p, _ = _psd_sqrt_eigvals(product, atol)
    trace_sqrt = float(np.sqrt(lam_p).sum())
    mean_term = float(((mu_r - mu_g) ** 2).sum())
    return mean_term + float(np.trace(cov_r) + np.trace(cov_g)) - 2.0 * trace_sqrt


class RandConvExtractor(nn.Module):
    """Fixed-seed random conv embedder mapping (n, f, t) images to 64-d.

    Weights are drawn once from a seeded generator and never trained, so the
    embedding is a deterministic random projection with local structure.
    """

    feature_dim = 64

    def __init__(self, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        widths = [1, 16, 32, 64]
        self.convs = nn.ModuleList()
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            conv = nn.Conv2d(c_in, c_out, 3, 2, 1, bias=False)
            std = (2.0 / (c_in * 9 + c_out * 9)) ** 0.5
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * std)
            conv.weight.requires_grad_(False)
            self.convs.append(conv)
        self.act = nn.LeakyReLU(0.2)
        self.pool = nn.AdaptiveAvgPool2d(1)

    @torch.no_grad()
    def __call__(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim != 3:
            raise ShapeError(f"expected (n, f, t) batch, got shape {batch.shape}")
        x = torch.from_numpy(batch).unsqueeze(1)
        for conv in self.convs:
            x = self.act(conv(x))
        return self.pool(x).reshape(x.shape[0], -1).numpy().astype(np.float64)


_EXTRACTOR_FACTORIES: dict[str, Callable[[], Callable]] = {}
_EXTRACTOR_CACHE: dict[str, Callable] = {}


def register_extractor(name: str, factory: Callable[[], Callable], overwrite: bool = False) -> None:
    if name in _EXTRACTOR_FACTORIES and not overwrite:
        raise ConfigurationError(f"extractor {name!r} is already registered")
    _EXTRACTOR_FACTORIES[name] = factory
    _EXTRACTOR_CACHE.pop(name, None)


def get_extractor(name: str) -> Callable:
    if name not in _EXTRACTOR_FACTORIES:
        raise ConfigurationError(
            f"unknown feature extractor {name!r}; registered: {sorted(_EXTRACTOR_FACTORIES)}"
        )
    if name not in _EXTRACTOR_CACHE:
        _EXTRACTOR_CACHE[name] = _EXTRACTOR_FACTORIES[name]()
    return _EXTRACTOR_CACHE[name]


register_extractor(DEFAULT_EXTRACTOR_ID, RandConvExtractor)


def rgb_image_adapter(batch: np.ndarray, size: tuple[int, int] = (299, 299)) -> torch.Tensor:
    """Replicate single-channel spectrograms to RGB at a pretrained model's
    input size; helper for plugging image-classification embedders."""
    batch = np.asarray(batch, dtype=np.float32)
    if batch.ndim != 3:
        raise ShapeError(f"expected (n, f, t) batch, got shape {batch.shape}")
    x = torch.from_numpy(batch).unsqueeze(1)
    x = nn.functional.interpolate(x, size=size, mode="bilinear", align_corners=False)
    return x.repeat(1, 3, 1, 1)


@dataclass
class MetricReport:
    ssim: float
    psnr: float
    fid: float
    n_real: int
    n_generated: int
    extractor_id: str
    pairing_policy: str
    psnr_capped_fraction: float = 0.0

    def as_rows(self) -> list[dict]:
        base = {
            "extractor_id": self.extractor_id,
            "pairing_policy": self.pairing_policy,
            "n_real": self.n_real,
            "n_generated": self.n_generated,
        }
        return [
            {**base, "metric": "ssim", "value": self.ssim},
            {**base, "metric": "psnr", "value": self.psnr},
            {**base, "metric": "fid", "value": self.fid},
        ]


def _as_unit_interval(batch) -> np.ndarray:
    """Stack spectrograms and map the generator's [-1, 1] range onto [0, 1]."""
    if isinstance(batch, np.ndarray):
        arr = np.asarray(batch, dtype=np.float64)
    else:
        arrs = [b.values if isinstance(b, SpectrogramTensor) else np.asarray(b) for b in batch]
        if not arrs:
            raise InputError("empty spectrogram set")
        shapes = {a.shape for a in arrs}
        if len(shapes) != 1:
            raise ShapeError(f"spectrogram shapes differ: {sorted(shapes)}")
        arr = np.stack(arrs).astype(np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"expected (n, f, t) spectrograms, got shape {arr.shape}")
    return np.clip((arr + 1.0) / 2.0, 0.0, 1.0)


def extract_features(
    spectrograms: Sequence[SpectrogramTensor] | np.ndarray,
    extractor_id: str = DEFAULT_EXTRACTOR_ID,
) -> np.ndarray:
    """Embed unit-range spectrograms as an (n, d) feature matrix."""
    batch = _as_unit_interval(spectrograms)
    return np.asarray(get_extractor(extractor_id)(batch), dtype=np.float64)


def evaluate(
    generated: Sequence[SpectrogramTensor] | np.ndarray,
    reference: Sequence[SpectrogramTensor] | np.ndarray,
    pairing_policy: str = "all_pairs",
    extractor_id: str = DEFAULT_EXTRACTOR_ID,
) -> MetricReport:
    """Score a generated set against held-out real spectrograms.

    ``all_pairs`` averages SSIM/PSNR over every generated-real pair;
    ``best_match`` credits each generated sample with its best real match.
    Both sets must be in the generator's [-1, 1] output range.
    """
    if pairing_policy not in PAIRING_POLICIES:
        raise ConfigurationError(
            f"pairing_policy must be one of {PAIRING_POLICIES}, got {pairing_policy!r}"
        )
    gen = _as_unit_interval(generated)
    ref = _as_unit_interval(reference)
    if gen.shape[1:] != ref.shape[1:]:
        raise ShapeError(
            f"generated {gen.shape[1:]} and reference {ref.shape[1:]} shapes differ"
        )
    if gen.shape[0] < 2 or ref.shape[0] < 2:
        raise InputError("need at least 2 generated and 2 reference spectrograms")

    ssim_values = np.empty((gen.shape[0], ref.shape[0]))
    psnr_values = np.empty_like(ssim_values)
    capped = np.zeros_like(ssim_values, dtype=bool)
    for i in range(gen.shape[0]):
        for j in range(ref.shape[0]):
            ssim_values[i, j] = ssim(gen[i], ref[j])
            result = psnr(ref[j], gen[i])
            psnr_values[i, j] = result.value_db
            capped[i, j] = result.capped
    if pairing_policy == "all_pairs":
        ssim_score = float(ssim_values.mean())
        psnr_score = float(psnr_values.mean())
        capped_fraction = float(capped.mean())
    else:
        ssim_score = float(ssim_values.max(axis=1).mean())
        best = psnr_values.argmax(axis=1)
        rows = np.arange(gen.shape[0])
        psnr_score = float(psnr_values[rows, best].mean())
        capped_fraction = float(capped[rows, best].mean())

    extractor = get_extractor(extractor_id)
    fid_score = fid(extractor(ref), extractor(gen))
    return MetricReport(
        ssim=ssim_score,
        psnr=psnr_score,
        fid=fid_score,
        n_real=int(ref.shape[0]),
        n_generated=int(gen.shape[0]),
        extractor_id=extractor_id,
        pairing_policy=pairing_policy,
        psnr_capped_fraction=capped_fraction,
    )
