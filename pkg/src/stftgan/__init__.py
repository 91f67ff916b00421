"""GAN benchmark for synthesizing STFT spectrograms of short acoustic events."""

from .dataset import (
    CLASS_ORDER,
    EVENT_LENGTH,
    SAMPLE_RATE,
    EventClass,
    EventSignal,
    SplitManifest,
    extract_events,
    normalize,
    split,
)
from .exceptions import (
    CheckpointError,
    ConfigurationError,
    InputError,
    NumericalError,
    ShapeError,
    StftGanError,
)
from .features import (
    SpectrogramTensor,
    StftParams,
    expected_shape,
    frame_count,
    from_unit_range,
    load_spectrogram,
    save_spectrogram,
    stft,
    to_unit_range,
)
from .gru import BiGru, GruCell, bigru_layer, gru_step
from .losses import (
    GpConfig,
    bce_gan_losses,
    gradient_penalty,
    lsgan_losses,
    wgan_gp_losses,
)
from .metrics import (
    MetricReport,
    PsnrResult,
    evaluate,
    extract_features,
    fid,
    get_extractor,
    psnr,
    register_extractor,
    ssim,
)
from .models import (
    GanSpec,
    VARIANTS,
    build_discriminator,
    build_generator,
    make_gan_spec,
    parameter_count,
)
from .synthetic import (
    DEFAULT_CLASS_COUNTS,
    SynthSpec,
    synthesize_corpus,
    synthesize_event,
    trimmer_fundamental_hz,
)
from .training import (
    Checkpoint,
    TrainConfig,
    TrainState,
    generate,
    monitor_collapse,
    train,
)
from .experiment import (
    AblationPlan,
    ExperimentMatrix,
    resolve_profile,
    run_ablation,
    run_cell,
    run_matrix,
    write_report,
)

__version__ = "0.1.0"

__all__ = [
    "AblationPlan",
    "BiGru",
    "CLASS_ORDER",
    "Checkpoint",
    "CheckpointError",
    "ConfigurationError",
    "DEFAULT_CLASS_COUNTS",
    "EVENT_LENGTH",
    "EventClass",
    "EventSignal",
    "ExperimentMatrix",
    "GanSpec",
    "GpConfig",
    "GruCell",
    "InputError",
    "MetricReport",
    "NumericalError",
    "PsnrResult",
    "SAMPLE_RATE",
    "ShapeError",
    "SpectrogramTensor",
    "SplitManifest",
    "StftGanError",
    "StftParams",
    "SynthSpec",
    "TrainConfig",
    "TrainState",
    "VARIANTS",
    "bce_gan_losses",
    "bigru_layer",
    "build_discriminator",
    "build_generator",
    "evaluate",
    "expected_shape",
    "extract_events",
    "extract_features",
    "fid",
    "frame_count",
    "from_unit_range",
    "generate",
    "get_extractor",
    "gradient_penalty",
    "gru_step",
    "load_spectrogram",
    "lsgan_losses",
    "make_gan_spec",
    "monitor_collapse",
    "normalize",
    "parameter_count",
    "psnr",
    "register_extractor",
    "resolve_profile",
    "run_ablation",
    "run_cell",
    "run_matrix",
    "save_spectrogram",
    "split",
    "ssim",
    "stft",
    "synthesize_corpus",
    "synthesize_event",
    "to_unit_range",
    "train",
    "trimmer_fundamental_hz",
    "wgan_gp_losses",
    "write_report",
]
