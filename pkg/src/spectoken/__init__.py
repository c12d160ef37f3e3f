"""Graph transformers with a learned spectral token, built on numpy."""

from .autodiff import ContractError, ShapeError, Tape, Tensor, backward, grad_check
from .coarse import CoarseGraph, coarse_laplacian, decompose
from .config import ConfigError, DataConfig, RunConfig, load_run_config
from .data import (DatasetParseError, DatasetValidationError, SplitSpec, generate_synthetic,
                   parse_dataset, split, write_dataset)
from .graph import Graph, GraphValidationError, degrees, normalized_laplacian
from .model import (ModelConfig, ModelParams, VocabularyError, collate, forward, forward_batch,
                    gradcheck_model, init_params, predict, prepare)
from .spectral import (NumericError, Spectrum, SpectralTokenParams, build_spectrum_vector,
                       init_spectral_token, spectral_kernel, sym_eigh)
from .training import (CheckpointError, TrainConfig, UndefinedMetricError, evaluate,
                       load_checkpoint, save_checkpoint, train_loop)

__version__ = "0.1.0"
