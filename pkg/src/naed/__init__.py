"""Time-signal classifiers built on learned non-autonomous dynamics.

A signal x(t) forces a hidden state, dh/dt = beta Xi(h) + B x(t), h(0) = 0,
where Xi is a fixed dictionary of polynomial or Fourier functions.  The
class probabilities are softmax(A h(T) + b).  Gradients come from the
adjoint equation.
"""

from .dictionary import DictionarySpec, evaluate, evaluate_batch, fourier, polynomial
from .signal import Dataset, TimeSeries, interpolate, one_hot
from .integrator import BlowUp, solve_adjoint, solve_forward
from .model import Parameters, initialize, loss, param_count, predict, predict_batch
from .gradients import adjoint_gradients, finite_difference_oracle, gradcheck
from .trainer import TrainConfig, TrainReport, cross_validate_lambda, evaluate as accuracy, train
from .datagen import GeneratorConfig, add_noise, generate
from .dataio import read_checkpoint, read_dataset, read_ucr, write_checkpoint, write_dataset
from .portrait import PortraitSpec, render_portrait
from .stability import stability_check

__version__ = "0.1.0"

__all__ = [
    "DictionarySpec", "evaluate", "evaluate_batch", "fourier", "polynomial",
    "Dataset", "TimeSeries", "interpolate", "one_hot",
    "BlowUp", "solve_adjoint", "solve_forward",
    "Parameters", "initialize", "loss", "param_count", "predict", "predict_batch",
    "adjoint_gradients", "finite_difference_oracle", "gradcheck",
    "TrainConfig", "TrainReport", "cross_validate_lambda", "accuracy", "train",
    "GeneratorConfig", "add_noise", "generate",
    "read_checkpoint", "read_dataset", "read_ucr", "write_checkpoint", "write_dataset",
    "PortraitSpec", "render_portrait", "stability_check",
]
