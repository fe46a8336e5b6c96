import numpy as np
import pytest
import torch
from pydantic import ValidationError

from core.errors import InputError
from services.autodiff import DTYPE, ParamVector
from services.stochastic_models import (
    LinearGaussianModel,
    LinearGaussianParams,
    LinearSpec,
    MlpSpec,
    NoiseDraw,
    StochasticMlp,
    StochasticMlpParams,
    init_params,
    linear_predict,
    mlp_predict,
)


def deterministic_mlp(widths, resnet=False, **blocks) -> StochasticMlpParams:
    spec = MlpSpec(widths=widths, resnet=resnet, stochastic=False)
    vector = ParamVector(StochasticMlpParams.layout(spec))
    for name, value in blocks.items():
        vector.set_block(name.replace("_", "."), torch.tensor(value, dtype=DTYPE))
    return StochasticMlpParams(spec, vector)


def test_linear_predict_at_ground_truth_means():
    params = LinearGaussianParams.from_values([1.0, 1.0, 2.0, 3.0])
    out = linear_predict(params, torch.ones(3, dtype=DTYPE), NoiseDraw())
    assert out.tolist() == [7.0]


def test_linear_predict_at_origin_keeps_intercept_noise():
    params = LinearGaussianParams.from_values([1.0, 1.0, 2.0, 3.0], [-0.5, 0.2, 0.3, 0.4])
    eps = torch.tensor([[2.0, 1.0, 1.0, 1.0]], dtype=DTYPE)
    out = linear_predict(params, torch.zeros(1, 3, dtype=DTYPE), NoiseDraw({"coef.eps": eps}))
    assert out.item() == pytest.approx(1.0 + 0.5 * 2.0)


def test_linear_output_sd_matches_closed_form(generator):
    model = LinearGaussianModel(LinearSpec(input_dim=3))
    params = LinearGaussianParams.from_values([0.0, 0.0, 0.0, 0.0], [0.3, 0.4, 0.0, 0.0]).vector
    x = np.tile([1.0, 0.0, 0.0], (100_000, 1))
    draws = model.sample_outputs(params, x, generator)[:, 0]
    assert draws.std() == pytest.approx(0.5, rel=0.03)


def test_linear_predict_rejects_wrong_width():
    params = LinearGaussianParams.from_values([1.0, 1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        linear_predict(params, torch.ones(1, 2, dtype=DTYPE), NoiseDraw())


def test_zero_network_outputs_zero(generator):
    model = StochasticMlp(MlpSpec.build(2, 1, 5, 3, resnet=True))
    params = ParamVector(model.layout)
    noise = model.sample_noise(4, generator)
    out = model.predict(params, torch.randn(4, 2, dtype=DTYPE, generator=generator), noise)
    assert torch.count_nonzero(out) == 0


def test_single_layer_is_an_affine_map():
    params = deterministic_mlp([2, 2], layer0_mean=[[1.0, 2.0], [3.0, 4.0]], layer0_bias=[0.5, -1.0])
    out = mlp_predict(params, torch.tensor([[1.0, 1.0]], dtype=DTYPE), NoiseDraw())
    assert out.tolist() == [[3.5, 6.0]]


def test_resnet_skip_carries_first_layer_by_hand():
    blocks = dict(layer0_mean=[[1.0], [-1.0]], layer2_mean=[[1.0, 1.0]])
    x = torch.tensor([[2.0]], dtype=DTYPE)
    # h0 = relu(2, -2) = (2, 0); zero middle layer adds relu(0) to h0 in resnet mode
    resnet = deterministic_mlp([1, 2, 2, 1], resnet=True, **blocks)
    assert mlp_predict(resnet, x, NoiseDraw()).tolist() == [[2.0]]
    plain = deterministic_mlp([1, 2, 2, 1], resnet=False, **blocks)
    assert mlp_predict(plain, x, NoiseDraw()).tolist() == [[0.0]]


def test_mlp_rejects_mismatched_shapes(generator):
    model = StochasticMlp(MlpSpec.build(3, 1, 4, 2))
    params = model.init_params(generator)
    with pytest.raises(InputError):
        model.predict(params, torch.ones(2, 2, dtype=DTYPE), model.sample_noise(2, generator))
    with pytest.raises(InputError):
        model.predict(params, torch.ones(2, 3, dtype=DTYPE), model.sample_noise(5, generator))


def test_spec_validation():
    with pytest.raises(ValidationError):
        MlpSpec(widths=[3])
    with pytest.raises(ValidationError):
        MlpSpec(widths=[1, 4, 5, 1], resnet=True)
    assert MlpSpec.build(1, 1, 50, 4).widths == [1, 50, 50, 50, 50, 1]


def test_init_params_laws(generator):
    linear = init_params(LinearSpec(input_dim=3))
    assert linear.means.tolist() == [1.0] * 4
    assert linear.spreads.tolist() == [1.0] * 4

    mlp = init_params(MlpSpec(widths=[1, 70, 70, 1]), generator)
    assert len(mlp.vector) >= 10_000
    assert mlp.vector.values.std().item() == pytest.approx(1e-2, rel=0.05)


def test_sampled_weight_moments_follow_mean_and_abs_spread(generator):
    spec = MlpSpec(widths=[1, 1])
    vector = ParamVector(StochasticMlpParams.layout(spec))
    vector.set_block("layer0.mean", 0.7)
    vector.set_block("layer0.spread", -0.2)
    model = StochasticMlp(spec)
    # With x = 1 and zero bias the output is the sampled weight itself
    weights = model.sample_outputs(vector, np.ones((100_000, 1)), generator)[:, 0]
    standard_error = 0.2 / np.sqrt(weights.size)
    assert abs(weights.mean() - 0.7) < 3 * standard_error
    assert weights.std() == pytest.approx(0.2, rel=0.02)


def test_zero_spread_is_deterministic(generator):
    model = StochasticMlp(MlpSpec.build(1, 1, 6, 2, resnet=True))
    params = model.init_params(generator)
    for k in range(3):
        params.set_block(f"layer{k}.spread", 0.0)
    first = model.sample_outputs(params, np.linspace(-1, 1, 9), generator)
    second = model.sample_outputs(params, np.linspace(-1, 1, 9), generator)
    assert np.array_equal(first, second)


def test_distinct_weights_use_distinct_noise(generator):
    spec = MlpSpec(widths=[2, 1])
    vector = ParamVector(StochasticMlpParams.layout(spec))
    vector.set_block("layer0.mean", torch.tensor([[1.0, 0.0]], dtype=DTYPE))
    vector.set_block("layer0.spread", torch.tensor([[1.0, 0.0]], dtype=DTYPE))
    eps = torch.tensor([[[0.5, 3.0]]], dtype=DTYPE)
    swapped = torch.tensor([[[0.5, -7.0]]], dtype=DTYPE)
    x = torch.tensor([[1.0, 0.0]], dtype=DTYPE)
    params = StochasticMlpParams(spec, vector)
    assert mlp_predict(params, x, NoiseDraw({"layer0.eps": eps})).item() == 1.5
    assert mlp_predict(params, x, NoiseDraw({"layer0.eps": swapped})).item() == 1.5


def test_draws_at_shape(generator):
    model = StochasticMlp(MlpSpec.build(1, 1, 4, 1))
    params = model.init_params(generator)
    assert model.draws_at(params, np.linspace(-0.5, 0.5, 11), 7, generator).shape == (11, 7)
