import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from pydantic import ValidationError

from core.errors import InputError
from core.models import BoundInputs, InputNorm, SampleSet
from services.metrics import (
    conditional_moments,
    estimate_bound_inputs,
    estimate_lipschitz,
    mean_sd_error,
    param_error,
    rate_factor,
    sample_moments,
    theorem1_bound,
)
from services.neighborhoods import build_index
from services.stochastic_models import LinearGaussianParams

TRUTH = LinearGaussianParams.from_values([1.0, 1.0, 2.0, 3.0], [0.1, 0.2, 0.3, 0.4])

positive = hnp.arrays(np.float64, 6, elements=st.floats(min_value=0.5, max_value=20.0))


def bound(**changes) -> float:
    values = dict(M=1.0, L=1.0, C=1.0, N=100, delta=0.1, counts=[100] * 4, n=3)
    values.update(changes)
    return theorem1_bound(BoundInputs(**values))


def test_mean_sd_error_examples():
    report = mean_sd_error([2.0], [1.0], [2.2], [0.8])
    assert report.mean_error == pytest.approx(0.1)
    assert report.sd_error == pytest.approx(0.2)

    same = mean_sd_error([1.0, -2.0], [0.5, 0.5], [1.0, -2.0], [0.5, 0.5])
    assert (same.mean_error, same.sd_error) == (0.0, 0.0)

    with pytest.raises(InputError, match="zero denominator"):
        mean_sd_error([0.0, 0.0], [1.0, 1.0], [0.1, 0.1], [1.0, 1.0])
    with pytest.raises(InputError):
        mean_sd_error([1.0], [1.0], [1.0, 2.0], [1.0, 2.0])


def test_param_error_examples():
    assert param_error(TRUTH, TRUTH) == (0.0, 0.0)

    shifted = LinearGaussianParams.from_values([1.0, 1.0, 2.0, 3.7], [0.1, 0.2, 0.3, 0.4])
    error_b, error_sigma = param_error(TRUTH, shifted)
    assert error_b == pytest.approx(0.1)
    assert error_sigma == 0.0

    flipped = LinearGaussianParams.from_values([1.0, 1.0, 2.0, 3.0], [-0.1, -0.2, -0.3, -0.4])
    assert param_error(TRUTH, flipped)[1] == 0.0

    with pytest.raises(InputError):
        param_error(TRUTH, LinearGaussianParams.from_values([1.0, 1.0], [0.1, 0.1]))


@given(positive, positive, positive, positive, st.floats(min_value=0.1, max_value=100.0))
def test_relative_errors_ignore_output_scale(tm, ts, pm, ps, scale):
    plain = mean_sd_error(tm, ts, pm, ps)
    scaled = mean_sd_error(scale * tm, scale * ts, scale * pm, scale * ps)
    assert scaled.mean_error == pytest.approx(plain.mean_error, rel=1e-9)
    assert scaled.sd_error == pytest.approx(plain.sd_error, rel=1e-9)


def test_conditional_moments_by_hand():
    index = build_index([0.0, 0.05], InputNorm(), 0.1)
    moments = conditional_moments([1.0, 3.0], index, min_count=1)
    assert moments.means.tolist() == [2.0, 2.0]
    assert moments.sds.tolist() == [1.0, 1.0]

    constant = conditional_moments(np.full(6, 4.0), build_index(np.arange(6.0), InputNorm(), 3.0))
    assert np.all(constant.means == 4.0)
    assert np.all(constant.sds == 0.0)


def test_conditional_moments_excludes_small_balls():
    x = np.array([0.0, 0.01, 0.02, 0.03, 0.04, 5.0, 5.01, 5.02, 5.03])
    moments = conditional_moments(np.arange(9.0), build_index(x, InputNorm(), 0.1), min_count=5)
    assert moments.anchors.tolist() == [0, 1, 2, 3, 4]
    assert moments.excluded.tolist() == [5, 6, 7, 8]

    with pytest.raises(InputError, match="no anchor"):
        conditional_moments(np.arange(4.0), build_index(x[5:], InputNorm(), 0.1), min_count=5)
    with pytest.raises(InputError):
        conditional_moments(np.arange(9.0), build_index(x, InputNorm(), 0.1), min_count=0)


def test_conditional_moments_with_infinite_radius_are_global(rng):
    y = rng.normal(size=50)
    moments = conditional_moments(y, build_index(rng.normal(size=50), InputNorm(), math.inf))
    assert np.allclose(moments.means, y.mean())
    assert np.allclose(moments.sds, y.std())


def test_sample_moments_use_population_sd():
    means, sds = sample_moments([[1.0, 3.0], [2.0, 2.0]])
    assert means.tolist() == [2.0, 2.0]
    assert sds.tolist() == [1.0, 0.0]


def test_bound_example_by_hand():
    h = 2 * 100**-0.25 * math.sqrt(math.log(101))
    assert rate_factor(100, 3) == pytest.approx(h)
    assert bound() == pytest.approx(0.4 + 8 * h + 0.8)
    assert rate_factor(100, 5) == pytest.approx(2 * 100 ** (-1 / 5))


def test_bound_limits():
    floor = bound(delta=1e-12)
    assert floor == pytest.approx(0.4 + 8 * rate_factor(100, 3), abs=1e-9)
    huge = bound(counts=[10**20] * 4)
    assert huge - 0.4 - 0.8 < 1e-2


@given(st.integers(min_value=5, max_value=10_000), st.integers(min_value=1, max_value=8))
def test_bound_monotonicity(count, n):
    assert bound(counts=[count + 1] * 4, n=n) < bound(counts=[count] * 4, n=n)
    assert bound(delta=0.2, n=n) > bound(delta=0.1, n=n)
    assert bound(L=2.0, n=n) > bound(L=1.0, n=n)


@given(
    st.lists(st.integers(min_value=5, max_value=10_000), min_size=2, max_size=6),
    st.data(),
    st.integers(min_value=1, max_value=8),
)
def test_bound_decreases_when_one_neighborhood_grows(counts, data, n):
    position = data.draw(st.integers(min_value=0, max_value=len(counts) - 1))
    grown = list(counts)
    grown[position] += data.draw(st.integers(min_value=1, max_value=1000))
    assert bound(counts=grown, n=n) < bound(counts=counts, n=n)


def test_bound_rejects_nonpositive_inputs():
    with pytest.raises(ValidationError):
        BoundInputs(M=0.0, L=1.0, N=10, delta=0.1, counts=[1], n=1)
    with pytest.raises(ValidationError):
        BoundInputs(M=1.0, L=1.0, N=10, delta=0.1, counts=[0], n=1)


def test_lipschitz_of_a_linear_map_is_its_slope(rng):
    x = rng.uniform(-1, 1, size=(30, 1))
    slope = estimate_lipschitz(lambda a, b: (3.0 * a, 3.0 * b), x, InputNorm(), rng, pairs=200)
    assert slope == pytest.approx(3.0)
    with pytest.raises(InputError):
        estimate_lipschitz(lambda a, b: (a, b), np.zeros((5, 1)), InputNorm(), rng)


def test_bound_inputs_take_largest_squared_output():
    data = SampleSet(inputs=[[0.0], [1.0], [2.0]], outputs=[[1.0], [-3.0], [2.0]])
    index = build_index(data.inputs, InputNorm(), 1.0)
    inputs = estimate_bound_inputs(data, [[0.0], [0.5], [4.0]], index, 2.0)
    assert inputs.M == 16.0
    assert inputs.L == 2.0
    assert inputs.counts == [2, 3, 2]
    assert (inputs.N, inputs.n) == (3, 1)
