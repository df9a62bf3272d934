"""Margin cross-entropy training and bit-error tolerance for small
quantized and binarized classifiers."""

from .datasets import Dataset, load_idx, synthetic_blobs
from .errors import (ContractError, DataFormatError, DimensionError,
                     EncodingError, McelqError, ModelFormatError, NumericError,
                     UsageError)
from .faults import (BerSweepResult, ErrorModel, RngStream, ber_sweep,
                     flip_bits, perturb_model, single_flip_delta)
from .losses import (LossSpec, apply_margin, cel, celm, hinge_multiclass,
                     make_loss, mcel, rls, tanh_clamp)
from .metrics import (MarginRecord, accuracy, class_margins, mlm,
                      neuron_margin, top2_margin, top2_margins)
from .modelio import load_model, save_model
from .network import (AdamState, BinFcLayer, EpochStats, Model, QuantFcLayer,
                      TrainConfig, adam_step, bin_fc_forward, build_mlp,
                      model_forward, qfc_forward, step_lr, train_epoch,
                      train_model)
from .quantization import (CodeTensor, QuantScheme, binarize, dequantize,
                           fake_quantize, quantize, range_from_tensor)
from .results import emit_plot_script, read_sweep_csv, write_results_csv
from .tensor import Tensor, backward, grad_check

__version__ = "0.1.0"
