"""AdamW updates on a ParamVector and the epoch-level training loop."""

import logging
from typing import Callable, Optional

import numpy as np
import torch

from core.errors import InputError, NumericError
from core.models import NeighborhoodIndex, SampleSet, TrainConfig

from .autodiff import DTYPE, ParamVector, Program, backward, forward_eval
from .losses import evaluate_loss
from .stochastic_models import StochasticModel

logger = logging.getLogger(__name__)

BETAS = (0.9, 0.999)
EPS = 1e-8

# Builds the loss program of one epoch, with that epoch's noise frozen inside
Objective = Callable[[int], Program]


class AdamWState:
    """Moments and step count of AdamW for one ParamVector.

    The update runs in place on ``params.values`` through torch's AdamW with
    decoupled weight decay: theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
    """

    def __init__(
        self,
        params: ParamVector,
        lr: float,
        weight_decay: float = 0.0,
        betas: tuple[float, float] = BETAS,
        eps: float = EPS,
    ):
        if lr <= 0:
            raise InputError(f"learning rate must be positive, got {lr}")
        self.leaf = params.values
        self.optimizer = torch.optim.AdamW(
            [self.leaf],
            lr=lr,
            betas=betas,
            eps=eps,
            weight_decay=weight_decay,
            foreach=False,
        )

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    @property
    def weight_decay(self) -> float:
        return self.optimizer.param_groups[0]["weight_decay"]

    @property
    def t(self) -> int:
        state = self.optimizer.state.get(self.leaf, {})
        return int(state["step"]) if "step" in state else 0

    @property
    def m(self) -> torch.Tensor:
        state = self.optimizer.state.get(self.leaf, {})
        return state.get("exp_avg", torch.zeros_like(self.leaf)).detach().clone()

    @property
    def v(self) -> torch.Tensor:
        state = self.optimizer.state.get(self.leaf, {})
        return state.get("exp_avg_sq", torch.zeros_like(self.leaf)).detach().clone()


def adamw_step(params: ParamVector, state: AdamWState) -> None:
    """
    Apply one AdamW update to ``params.values`` using ``params.grad``.

    Args:
        params: Vector whose values the state was created for
        state: Optimizer state, advanced by one step
    """
    if state.leaf is not params.values:
        raise InputError("optimizer state belongs to a different parameter vector")
    if not torch.isfinite(params.grad).all():
        raise NumericError("gradient has non-finite entries")

    params.values.grad = params.grad.detach().to(DTYPE).clone()
    state.optimizer.step()
    params.values.grad = None


class TrainResult:
    """Trained parameters plus the per-epoch loss trace."""

    def __init__(self, params: ParamVector, trace: list[float]):
        self.params = params
        self.trace = trace

    @property
    def final_loss(self) -> Optional[float]:
        return self.trace[-1] if self.trace else None


def run_epochs(
    params: ParamVector, config: TrainConfig, objective: Objective, label: str = "train"
) -> TrainResult:
    """
    Full-batch training: each epoch evaluates the objective, runs the reverse
    sweep and takes one AdamW step.

    Args:
        params: Starting point, updated in place
        config: Epochs, learning rate and weight decay
        objective: Returns the loss program for a given epoch
        label: Prefix for log lines

    Returns:
        TrainResult; ``trace[k]`` is the loss evaluated before update k
    """
    state = AdamWState(params, lr=config.lr, weight_decay=config.weight_decay)
    trace: list[float] = []
    for epoch in range(config.epochs):
        try:
            value, tape = forward_eval(objective(epoch), params, trace=False)
            backward(tape, params)
            adamw_step(params, state)
            params.check_finite()
        except NumericError as exc:
            raise NumericError(f"{label} diverged: {exc}", where=f"epoch {epoch}") from exc

        trace.append(value)
        if epoch % config.log_every == 0 or epoch == config.epochs - 1:
            logger.info(f"{label}: epoch {epoch}/{config.epochs} loss={value:.6g}")
    return TrainResult(params, trace)


def train(
    model: StochasticModel,
    data: SampleSet,
    index: Optional[NeighborhoodIndex],
    config: TrainConfig,
    generator: Optional[torch.Generator] = None,
    params: Optional[ParamVector] = None,
) -> TrainResult:
    """
    Fit a stochastic model to observed samples by minimizing the configured loss.

    Every epoch draws fresh noise for each sample, predicts at the observed
    inputs and compares the predictions with the observed outputs.

    Args:
        model: Linear-Gaussian model or weight-uncertain MLP
        data: Training samples
        index: Neighborhoods over ``data.inputs`` (local losses only)
        config: Training settings
        generator: Torch stream for initialization and noise; seeded from
            ``config.seed`` when omitted
        params: Initial parameters; drawn from the model's init law when omitted

    Returns:
        TrainResult with the final parameters and loss trace
    """
    if index is not None and index.size != len(data):
        raise InputError(f"index covers {index.size} samples, data has {len(data)}")
    if generator is None:
        generator = torch.Generator().manual_seed(config.seed)
    if params is None:
        params = model.init_params(generator)

    inputs = torch.from_numpy(np.ascontiguousarray(data.inputs))
    truth = torch.from_numpy(np.ascontiguousarray(data.outputs))

    def objective(epoch: int) -> Program:
        noise = model.sample_noise(len(data), generator)

        def program(vector: ParamVector) -> torch.Tensor:
            preds = model.predict(vector, inputs, noise)
            return evaluate_loss(config.loss, truth, preds, index).value

        return program

    logger.info(
        f"Training {type(model).__name__} on {len(data)} samples with {config.loss.label}, "
        f"{config.epochs} epochs, lr={config.lr}"
    )
    return run_epochs(params, config, objective, label=config.loss.label)
