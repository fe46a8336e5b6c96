"""Latent-parameter ODE: ground truth, fixed-step integration, neural
right-hand side training and reconstruction errors."""

import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np
import torch
from numpy.typing import ArrayLike
from scipy.integrate import trapezoid

from core.errors import InputError, NumericError
from core.models import (
    InputNorm,
    NeighborhoodIndex,
    OdeErrorReport,
    OdeExperimentConfig,
    TrainConfig,
    Trajectory,
)

from .autodiff import DTYPE, ParamVector, Program
from .losses import local_w2_loss
from .neighborhoods import build_index
from .optim import TrainResult, run_epochs
from .stochastic_models import MlpSpec, NoiseDraw, StochasticMlp
from .transport import solve_coupling

logger = logging.getLogger(__name__)

STATE_DIM = 4

# Default right-hand side network: 2 hidden layers of width 100, plain feed-forward
RHS_WIDTH = 100
RHS_DEPTH = 2

Array = Union[np.ndarray, torch.Tensor]
Rhs = Callable[[Array, Array], Array]
# Draws (budget, P, 4) right-hand-side values at P points
GSampler = Callable[[np.ndarray, int, np.random.Generator], np.ndarray]


def ground_truth_rhs(y: Array, omega: Union[float, Array]) -> Array:
    """
    Right-hand side g(y, omega) of the 4-state linear system.

    ``omega`` broadcasts against ``y[..., 0]``, so a (K, 4) batch takes a
    (K,) vector of latents.
    """
    y1, y2, y3, y4 = y[..., 0], y[..., 1], y[..., 2], y[..., 3]
    rotation = 1.0 - omega**2
    g1 = (0.05 + omega) * y1 + 0.05 * y3 - rotation * y2
    g2 = rotation * y1 + 0.05 * y4
    g3 = (-0.05 + omega) * y3 - rotation * y4
    g4 = rotation * y3
    if isinstance(y, torch.Tensor):
        return torch.stack(torch.broadcast_tensors(g1, g2, g3, g4), dim=-1)
    return np.stack(np.broadcast_arrays(g1, g2, g3, g4), axis=-1)


def _finite(value: Array) -> bool:
    if isinstance(value, torch.Tensor):
        return bool(torch.isfinite(value).all())
    return bool(np.all(np.isfinite(value)))


def rk4_path(rhs: Callable[[Array], Array], y0: Array, dt: float, steps: int) -> list[Array]:
    """States at t = 0, dt, ..., steps * dt by classical fourth-order Runge-Kutta."""
    states = [y0]
    y = y0
    for step in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not _finite(y):
            raise NumericError("trajectory blew up", where=f"step {step + 1}")
        states.append(y)
    return states


def integrate_rk4(rhs: Rhs, y0: ArrayLike, config: OdeExperimentConfig, latent: float = 0.0) -> Trajectory:
    """
    Integrate dy/dt = rhs(y, latent) on the experiment's time grid.

    Args:
        rhs: Right-hand side taking (state, latent)
        y0: Initial condition
        config: Horizon and number of steps
        latent: Latent parameter held fixed along the path

    Returns:
        Trajectory with one state per grid time
    """
    start = np.asarray(y0, dtype=np.float64).reshape(-1)
    if not _finite(start):
        raise InputError("initial condition has non-finite entries")
    states = rk4_path(lambda y: rhs(y, latent), start, config.dt, config.m)
    return Trajectory(y0=start, latent=float(latent), times=config.times, states=np.stack(states))


def simulate_dataset(
    config: OdeExperimentConfig,
    rng: np.random.Generator,
    y0: Optional[ArrayLike] = None,
) -> list[Trajectory]:
    """
    Independent ground-truth trajectories.

    Args:
        config: Grid, init spread a, latent half-width and trajectory count
        rng: Data stream
        y0: Initial conditions to use instead of drawing y0 ~ N(1, a^2 I)

    Returns:
        One Trajectory per initial condition, each with its own latent draw
    """
    if y0 is None:
        starts = 1.0 + config.a * rng.standard_normal((config.trajectories, STATE_DIM))
    else:
        starts = np.asarray(y0, dtype=np.float64).reshape(-1, STATE_DIM)
    omega = rng.uniform(-config.sigma_u, config.sigma_u, size=starts.shape[0])

    states = np.stack(rk4_path(lambda y: ground_truth_rhs(y, omega), starts, config.dt, config.m), axis=1)
    logger.info(
        f"Simulated {starts.shape[0]} trajectories (a={config.a}, sigma_u={config.sigma_u}, m={config.m})"
    )
    return [
        Trajectory(y0=starts[k], latent=float(omega[k]), times=config.times, states=states[k])
        for k in range(starts.shape[0])
    ]


def stack_states(trajectories: Sequence[Trajectory]) -> np.ndarray:
    """(K, m + 1, d) array of states; all trajectories must share a grid."""
    if not trajectories:
        raise InputError("no trajectories given")
    times = trajectories[0].times
    for trajectory in trajectories[1:]:
        if not np.array_equal(trajectory.times, times):
            raise InputError("trajectories do not share a time grid")
    return np.stack([t.states for t in trajectories])


def initial_conditions(trajectories: Sequence[Trajectory]) -> np.ndarray:
    return np.stack([t.y0 for t in trajectories])


def trajectory_index(trajectories: Sequence[Trajectory], delta: float) -> NeighborhoodIndex:
    """Neighborhoods of the initial conditions under the plain l2 norm."""
    return build_index(initial_conditions(trajectories), InputNorm(), delta)


class NeuralRhs:
    """Weight-uncertain MLP g_hat(y, omega_hat) used as an ODE right-hand side.

    One noise draw per trajectory is reused at every stage and step, so the
    latent omega_hat is constant along a path and varies across paths.
    """

    def __init__(self, width: int = RHS_WIDTH, depth: int = RHS_DEPTH, resnet: bool = False):
        self.net = StochasticMlp(MlpSpec.build(STATE_DIM, STATE_DIM, width, depth, resnet=resnet))

    @property
    def layout(self):
        return self.net.layout

    def init_params(self, generator: torch.Generator) -> ParamVector:
        return self.net.init_params(generator)

    def sample_noise(self, trajectories: int, generator: torch.Generator) -> NoiseDraw:
        return self.net.sample_noise(trajectories, generator)

    def rollout(
        self, vector: ParamVector, y0: torch.Tensor, noise: NoiseDraw, config: OdeExperimentConfig
    ) -> torch.Tensor:
        """(K, m + 1, 4) predicted states from (K, 4) initial conditions."""
        start = torch.as_tensor(y0, dtype=DTYPE)
        states = rk4_path(lambda y: self.net.predict(vector, y, noise), start, config.dt, config.m)
        return torch.stack(states, dim=1)

    def sample_g(
        self, vector: ParamVector, points: np.ndarray, budget: int, generator: torch.Generator
    ) -> np.ndarray:
        """(budget, P, 4) values of g_hat at P points, one weight draw shared by all points."""
        noise = self.net.sample_noise(budget, generator)
        x = torch.as_tensor(points, dtype=DTYPE).expand(budget, -1, -1)
        with torch.no_grad():
            return self.net.predict(vector, x, noise).numpy()


def _time_avg(truth: torch.Tensor, preds: torch.Tensor, index: NeighborhoodIndex) -> torch.Tensor:
    slices = [local_w2_loss(truth[:, i], preds[:, i], index).value for i in range(truth.shape[1])]
    return torch.stack(slices).mean()


def time_avg_local_w2(
    truth: Sequence[Trajectory],
    preds: Array,
    delta: float,
    index: Optional[NeighborhoodIndex] = None,
) -> torch.Tensor:
    """
    Mean over the m + 1 grid times of the local squared W2 loss between truth
    and predicted states, with neighborhoods taken over the initial conditions.

    Args:
        truth: Ground-truth trajectories
        preds: (K, m + 1, d) predicted states started from the same initial conditions
        delta: Neighborhood radius on initial conditions
        index: Prebuilt index (skips rebuilding)

    Returns:
        Scalar tensor, differentiable w.r.t. ``preds``
    """
    target = torch.from_numpy(stack_states(truth))
    preds = torch.as_tensor(preds, dtype=DTYPE)
    if preds.shape != target.shape:
        raise InputError(f"predicted states {tuple(preds.shape)} do not match truth {tuple(target.shape)}")
    if index is None:
        index = trajectory_index(truth, delta)
    return _time_avg(target, preds, index)


def train_ode(
    model: NeuralRhs,
    truth: Sequence[Trajectory],
    ode: OdeExperimentConfig,
    config: TrainConfig,
    generator: torch.Generator,
) -> TrainResult:
    """
    Fit the neural right-hand side by minimizing the time-averaged local W2
    loss, differentiating through the unrolled RK4 steps.
    """
    target = torch.from_numpy(stack_states(truth))
    if target.shape[1] != ode.m + 1:
        raise InputError(f"truth has {target.shape[1]} grid times, config expects {ode.m + 1}")
    y0 = torch.from_numpy(initial_conditions(truth))
    index = trajectory_index(truth, config.delta)
    params = model.init_params(generator)

    def objective(epoch: int) -> Program:
        noise = model.sample_noise(len(truth), generator)

        def program(vector: ParamVector) -> torch.Tensor:
            return _time_avg(target, model.rollout(vector, y0, noise, ode), index)

        return program

    logger.info(f"Training neural RHS on {len(truth)} trajectories, {config.epochs} epochs, lr={config.lr}")
    return run_epochs(params, config, objective, label="ode")


def predict_trajectories(
    model: NeuralRhs,
    vector: ParamVector,
    y0: np.ndarray,
    ode: OdeExperimentConfig,
    generator: torch.Generator,
) -> np.ndarray:
    """(K, m + 1, 4) states of the trained model, fresh latent per trajectory."""
    noise = model.sample_noise(y0.shape[0], generator)
    with torch.no_grad():
        return model.rollout(vector, torch.from_numpy(y0), noise, ode).numpy()


def truth_g_sampler(sigma_u: float) -> GSampler:
    """Samples g(y, omega) with omega ~ U(-sigma_u, sigma_u) shared across points."""

    def sample(points: np.ndarray, budget: int, rng: np.random.Generator) -> np.ndarray:
        omega = rng.uniform(-sigma_u, sigma_u, size=(budget, 1))
        return ground_truth_rhs(points[None, :, :], omega)

    return sample


def model_g_sampler(model: NeuralRhs, vector: ParamVector) -> GSampler:
    def sample(points: np.ndarray, budget: int, rng: np.random.Generator) -> np.ndarray:
        generator = torch.Generator().manual_seed(int(rng.integers(0, 2**63 - 1)))
        return model.sample_g(vector, points, budget, generator)

    return sample


def _local_w2_numpy(truth: np.ndarray, preds: np.ndarray, index: NeighborhoodIndex) -> float:
    return local_w2_loss(truth, preds, index).item


def ode_errors(
    truth: Sequence[Trajectory],
    preds: np.ndarray,
    delta0: float,
    sigma_u: float,
    model_sampler: Optional[GSampler] = None,
    g_sample_budget: int = 200,
    rng: Optional[np.random.Generator] = None,
) -> OdeErrorReport:
    """
    Relative reconstruction errors in the states and in the right-hand side.

    error_in_yhat integrates the per-slice local W2 loss against truth over
    the same loss with predictions replaced by 0. error_in_ghat integrates
    E_y[W2^2(eta, eta_hat)] at the truth states against E[|g|^2], each
    distribution represented by ``g_sample_budget`` draws.

    Args:
        truth: Test trajectories
        preds: (K, m + 1, 4) predicted states from the test initial conditions
        delta0: Neighborhood radius on initial conditions
        sigma_u: Half-width of the truth latent law
        model_sampler: Draws g_hat values; the g error is skipped when None
        g_sample_budget: Draws per evaluation point
        rng: Evaluation stream

    Returns:
        OdeErrorReport with integrated errors and per-slice normalized curves
    """
    if delta0 <= 0:
        raise InputError(f"delta0 must be positive, got {delta0}")
    states = stack_states(truth)
    preds = np.asarray(preds, dtype=np.float64)
    if preds.shape != states.shape:
        raise InputError(f"predicted states {preds.shape} do not match truth {states.shape}")
    times = truth[0].times
    index = trajectory_index(truth, delta0)
    zeros = np.zeros_like(states[:, 0])

    numerator = np.array([_local_w2_numpy(states[:, i], preds[:, i], index) for i in range(times.size)])
    baseline = np.array([_local_w2_numpy(states[:, i], zeros, index) for i in range(times.size)])
    denominator = trapezoid(baseline, times)
    if denominator == 0.0:
        raise InputError("truth trajectories are identically zero")
    energy = np.mean(np.sum(states**2, axis=-1), axis=0)
    slice_y_error = numerator / np.where(energy > 0, energy, np.nan)

    report = OdeErrorReport(
        error_in_yhat=float(trapezoid(numerator, times) / denominator),
        times=times.tolist(),
        slice_y_error=np.nan_to_num(slice_y_error).tolist(),
    )
    if model_sampler is None:
        return report

    rng = rng or np.random.default_rng()
    sample_truth = truth_g_sampler(sigma_u)
    g_gap = np.zeros(times.size)
    g_energy = np.zeros(times.size)
    for i in range(times.size):
        points = states[:, i]
        g = sample_truth(points, g_sample_budget, rng)
        g_hat = model_sampler(points, g_sample_budget, rng)
        gaps = []
        for p in range(points.shape[0]):
            assignment = solve_coupling(g[:, p], g_hat[:, p])
            gaps.append(np.mean(np.sum((g[:, p] - g_hat[assignment, p]) ** 2, axis=-1)))
        g_gap[i] = np.mean(gaps)
        g_energy[i] = np.mean(np.sum(g**2, axis=-1))

    g_denominator = trapezoid(g_energy, times)
    if g_denominator == 0.0:
        raise InputError("truth right-hand side vanishes along the test trajectories")
    report.error_in_ghat = float(trapezoid(g_gap, times) / g_denominator)
    report.slice_g_error = np.nan_to_num(g_gap / np.where(g_energy > 0, g_energy, np.nan)).tolist()
    logger.info(f"ODE errors: y_hat={report.error_in_yhat:.4f}, g_hat={report.error_in_ghat:.4f}")
    return report
