"""odlr: an image-restoration training framework with demand-driven
difficulty scheduling.

Train a small encoder-decoder on synthetic corruptions (inpainting, pixel
interpolation, deblurring, denoising) whose difficulty mix is reallocated
every epoch from per-sub-task validation PSNR, alongside a full set of
baseline regimes for comparison.
"""

from .corruption import (
    BIN_TABLE,
    TASKS,
    CorruptionSpec,
    DifficultyBin,
    corrupt,
    gaussian_kernel,
    level_of,
    sample_spec,
)
from .errors import (
    CheckpointError,
    ConfigurationError,
    DataError,
    NumericError,
    OdlrError,
)
from .harness import (
    EpochReport,
    TestReport,
    TrainConfig,
    evaluate_test,
    tile_restore,
    train,
    validate_subtasks,
)
from .metrics import l2_permille, psnr
from .network import (
    EncoderDecoder,
    IdentityNet,
    NetworkConfig,
    build_network,
    restore,
    train_step,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import OptimizerConfig, adam_step
from .schedulers import (
    SchedulerKind,
    SchedulerState,
    allocate,
    on_demand_allocate,
    select_hard,
)
from .tensor import LayerConfig, Parameter, Tensor4

__version__ = "0.1.0"

__all__ = [
    "BIN_TABLE", "TASKS", "CorruptionSpec", "DifficultyBin", "corrupt",
    "gaussian_kernel", "level_of", "sample_spec",
    "CheckpointError", "ConfigurationError", "DataError", "NumericError",
    "OdlrError",
    "EpochReport", "TestReport", "TrainConfig", "evaluate_test",
    "tile_restore", "train", "validate_subtasks",
    "l2_permille", "psnr",
    "EncoderDecoder", "IdentityNet", "NetworkConfig", "build_network",
    "restore", "train_step",
    "load_checkpoint", "save_checkpoint",
    "OptimizerConfig", "adam_step",
    "SchedulerKind", "SchedulerState", "allocate", "on_demand_allocate",
    "select_hard",
    "LayerConfig", "Parameter", "Tensor4",
    "__version__",
]
