from .autodiff import ParamVector, backward, forward_eval, gradient_check
from .datasets import RandomStreams, load_csv, sample_ground_truth
from .losses import evaluate_loss, global_w2_loss, local_w2_loss
from .metrics import conditional_moments, mean_sd_error, param_error, theorem1_bound
from .neighborhoods import build_index, fit_hetero_norm
from .ode_recon import NeuralRhs, ode_errors, time_avg_local_w2, train_ode
from .optim import AdamWState, adamw_step, train
from .stochastic_models import LinearGaussianModel, StochasticMlp, init_params
from .transport import w2sq_1d_sorted, w2sq_assignment, w2sq_bruteforce

__all__ = [
    "AdamWState",
    "LinearGaussianModel",
    "NeuralRhs",
    "ParamVector",
    "RandomStreams",
    "StochasticMlp",
    "adamw_step",
    "backward",
    "build_index",
    "conditional_moments",
    "evaluate_loss",
    "fit_hetero_norm",
    "forward_eval",
    "global_w2_loss",
    "gradient_check",
    "init_params",
    "load_csv",
    "local_w2_loss",
    "mean_sd_error",
    "ode_errors",
    "param_error",
    "sample_ground_truth",
    "theorem1_bound",
    "time_avg_local_w2",
    "train",
    "train_ode",
    "w2sq_1d_sorted",
    "w2sq_assignment",
    "w2sq_bruteforce",
]
