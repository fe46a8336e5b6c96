import math

import numpy as np
import pytest
import torch
from scipy.linalg import expm

from core.errors import InputError, NumericError
from core.models import OdeExperimentConfig, TrainConfig
from services.ode_recon import (
    NeuralRhs,
    ground_truth_rhs,
    initial_conditions,
    integrate_rk4,
    ode_errors,
    predict_trajectories,
    rk4_path,
    simulate_dataset,
    stack_states,
    time_avg_local_w2,
    train_ode,
    truth_g_sampler,
)
from services.transport import w2sq_assignment

SMALL = OdeExperimentConfig(horizon=1.0, m=10, a=0.0, sigma_u=0.25, trajectories=6)


def system_matrix(omega: float) -> np.ndarray:
    """ground_truth_rhs is linear in y; recover its matrix column by column."""
    return np.column_stack([ground_truth_rhs(e, omega) for e in np.eye(4)])


def test_rhs_by_hand():
    assert ground_truth_rhs(np.ones(4), 0.0).tolist() == pytest.approx([-0.9, 1.05, -1.05, 1.0])
    assert ground_truth_rhs(np.zeros(4), 0.3).tolist() == [0.0] * 4
    y = np.array([1.0, 2.0, 3.0, 4.0])
    assert ground_truth_rhs(y, 1.0).tolist() == pytest.approx([1.05 + 0.15, 0.2, 0.95 * 3.0, 0.0])


def test_rhs_is_linear_and_backend_agnostic(rng):
    y = rng.normal(size=(5, 4))
    omega = rng.uniform(-0.25, 0.25, size=5)
    assert np.allclose(ground_truth_rhs(3.0 * y, omega), 3.0 * ground_truth_rhs(y, omega))
    torch_out = ground_truth_rhs(torch.from_numpy(y), torch.from_numpy(omega)).numpy()
    assert np.allclose(torch_out, ground_truth_rhs(y, omega))


def test_rk4_single_step_by_hand():
    step = rk4_path(lambda y: y, np.array([1.0]), 0.1, 1)[-1][0]
    assert step == pytest.approx(1.10517083, abs=1e-8)


def test_rk4_is_fourth_order_on_the_linear_system():
    y0 = np.ones(4)
    exact = expm(system_matrix(0.0) * 2.0) @ y0
    errors = []
    for steps in (20, 40):
        path = rk4_path(lambda y: ground_truth_rhs(y, 0.0), y0, 2.0 / steps, steps)
        errors.append(np.linalg.norm(path[-1] - exact))
    assert 12.0 <= errors[0] / errors[1] <= 20.0


def test_integrate_constant_and_blow_up():
    config = OdeExperimentConfig(horizon=1.0, m=5)
    flat = integrate_rk4(lambda y, w: np.zeros_like(y), [1.0, 2.0, 3.0, 4.0], config)
    assert np.all(flat.states == flat.y0)
    assert flat.times.tolist() == pytest.approx([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])

    with pytest.raises(NumericError, match="blew up"):
        integrate_rk4(lambda y, w: 1e200 * y * y, np.full(4, 1e100), config)


def test_simulate_dataset_draws(rng):
    trajectories = simulate_dataset(SMALL, rng)
    assert len(trajectories) == 6
    assert all(np.array_equal(t.y0, np.ones(4)) for t in trajectories)
    assert all(abs(t.latent) <= 0.25 for t in trajectories)
    assert stack_states(trajectories).shape == (6, 11, 4)

    frozen = simulate_dataset(SMALL.model_copy(update={"sigma_u": 0.0}), rng)
    assert all(np.array_equal(t.states, frozen[0].states) for t in frozen)


def test_latent_law_moments():
    config = OdeExperimentConfig(horizon=0.01, m=1, sigma_u=0.25, trajectories=10_000)
    latents = np.array([t.latent for t in simulate_dataset(config, np.random.default_rng(1))])
    assert abs(latents.mean()) < 3 * (0.25 / math.sqrt(3)) / math.sqrt(latents.size)
    assert latents.std() == pytest.approx(0.25 / math.sqrt(3), rel=0.03)


def test_time_averaged_loss(rng):
    truth = simulate_dataset(SMALL, rng)
    states = stack_states(truth)
    assert time_avg_local_w2(truth, states, 0.1).item() == pytest.approx(0.0, abs=1e-12)

    two = simulate_dataset(OdeExperimentConfig(horizon=1.0, m=1, trajectories=2), rng)
    other = stack_states(two) + rng.normal(size=(2, 2, 4))
    expected = np.mean([w2sq_assignment(stack_states(two)[:, i], other[:, i]).cost for i in range(2)])
    assert time_avg_local_w2(two, other, 0.5).item() == pytest.approx(expected, abs=1e-12)

    with pytest.raises(InputError):
        time_avg_local_w2(truth, states[:, :5], 0.1)


def test_ode_errors_extremes(rng):
    truth = simulate_dataset(SMALL, rng)
    states = stack_states(truth)
    assert ode_errors(truth, states, 0.1, 0.25).error_in_yhat == pytest.approx(0.0, abs=1e-12)
    assert ode_errors(truth, np.zeros_like(states), 0.1, 0.25).error_in_yhat == pytest.approx(1.0)
    with pytest.raises(InputError):
        ode_errors(truth, states, 0.0, 0.25)


def test_ode_g_error_vanishes_for_a_deterministic_rhs(rng):
    config = SMALL.model_copy(update={"sigma_u": 0.0})
    truth = simulate_dataset(config, rng)
    report = ode_errors(
        truth, stack_states(truth), 0.1, 0.0, model_sampler=truth_g_sampler(0.0), g_sample_budget=5, rng=rng
    )
    assert report.error_in_ghat == pytest.approx(0.0, abs=1e-12)
    assert len(report.slice_g_error) == len(report.times) == 11


@pytest.mark.slow
def test_matched_g_law_gives_small_g_error(rng):
    config = SMALL.model_copy(update={"trajectories": 20})
    truth = simulate_dataset(config, rng)
    sampler = truth_g_sampler(0.25)
    report = ode_errors(truth, stack_states(truth), 0.1, 0.25, model_sampler=sampler, rng=rng)
    assert report.error_in_ghat <= 0.05


def test_neural_rhs_train_and_predict(rng):
    truth = simulate_dataset(SMALL, rng)
    model = NeuralRhs(width=8, depth=1)
    generator = torch.Generator().manual_seed(0)
    result = train_ode(model, truth, SMALL, TrainConfig(epochs=3, lr=0.005, delta=0.1), generator)
    assert len(result.trace) == 3
    assert all(np.isfinite(result.trace))

    preds = predict_trajectories(model, result.params, initial_conditions(truth), SMALL, generator)
    assert preds.shape == (6, 11, 4)
    assert np.array_equal(preds[:, 0], initial_conditions(truth))
    assert model.sample_g(result.params, preds[:, 3], 7, generator).shape == (7, 6, 4)


def test_train_ode_rejects_grid_mismatch(rng):
    truth = simulate_dataset(SMALL, rng)
    other = SMALL.model_copy(update={"m": 20})
    with pytest.raises(InputError):
        train_ode(NeuralRhs(4, 1), truth, other, TrainConfig(epochs=1), torch.Generator())
