import math

import numpy as np
import pytest
import torch

from core.errors import InputError
from core.models import GroundTruthSpec, InputNorm, LossFamily, LossKind, Locality
from services.datasets import sample_ground_truth
from services.losses import baseline_loss, evaluate_loss, global_w2_loss, local_w2_loss
from services.neighborhoods import build_index
from services.transport import w2sq_1d_sorted

MSE = LossKind(family=LossFamily.MSE, locality=Locality.GLOBAL)
MEAN2VAR = LossKind(family=LossFamily.MEAN2VAR, locality=Locality.GLOBAL)


@pytest.fixture
def sample(rng):
    x = rng.uniform(-1, 1, size=(40, 2))
    y = x.sum(axis=1, keepdims=True) + 0.2 * rng.normal(size=(40, 1))
    return x, y


@pytest.mark.parametrize("kind", LossKind.all_kinds(), ids=lambda k: k.label)
def test_identical_predictions_give_zero(kind, sample):
    x, y = sample
    index = build_index(x, InputNorm(), 0.5)
    assert evaluate_loss(kind, y, y.copy(), index).item == pytest.approx(0.0, abs=1e-12)


def test_single_full_anchor_reduces_to_sorted_w2(rng):
    truth, preds = rng.normal(size=5), rng.normal(size=5)
    index = build_index(rng.normal(size=5), InputNorm(), math.inf, anchors=[0])
    assert local_w2_loss(truth, preds, index).item == pytest.approx(w2sq_1d_sorted(truth, preds), abs=1e-12)


def test_local_with_infinite_radius_equals_global(sample, rng):
    x, y = sample
    preds = rng.normal(size=y.shape)
    index = build_index(x, InputNorm(), math.inf)
    assert local_w2_loss(y, preds, index).item == pytest.approx(global_w2_loss(y, preds).item, abs=1e-12)


def test_global_w2_gaussian_closed_form(rng):
    truth = rng.normal(0.0, 1.0, size=20_000)
    preds = rng.normal(1.0, 2.0, size=20_000)
    assert global_w2_loss(truth, preds).item == pytest.approx(2.0, rel=0.05)


def test_baseline_examples_by_hand():
    assert baseline_loss(MSE, [1.0, 3.0], [1.0, 1.0]).item == pytest.approx(2.0)
    assert baseline_loss(MEAN2VAR, [1.0, 2.0], [2.0, 1.0]).item == pytest.approx(1.0)


def test_multiset_match_within_neighborhood(sample):
    x, y = sample
    index = build_index(x, InputNorm(), math.inf)
    shuffled = y[::-1].copy()
    assert local_w2_loss(y, shuffled, index).item == pytest.approx(0.0, abs=1e-12)
    assert baseline_loss(MSE, y, shuffled).item > 0.0


def test_local_w2_is_nonnegative_per_anchor(sample, rng):
    x, y = sample
    report = local_w2_loss(y, rng.normal(size=y.shape), build_index(x, InputNorm(), 0.4))
    assert report.item >= 0.0
    assert np.all(report.contributions >= 0.0)
    assert report.item == pytest.approx(report.contributions.mean(), rel=1e-12)


@pytest.mark.parametrize(
    "kind",
    [LossKind(), LossKind(family=LossFamily.MSE), LossKind(family=LossFamily.MMD)],
    ids=lambda k: k.label,
)
def test_sample_order_does_not_matter(kind, sample, rng):
    x, y = sample
    preds = rng.normal(size=y.shape)
    order = rng.permutation(len(x))
    before = evaluate_loss(kind, y, preds, build_index(x, InputNorm(), 0.6)).item
    after = evaluate_loss(kind, y[order], preds[order], build_index(x[order], InputNorm(), 0.6)).item
    assert after == pytest.approx(before, rel=1e-10, abs=1e-12)


def test_mmd_kernel_sum_is_zero_on_identical_clouds_and_positive_otherwise(rng):
    kind = LossKind(family=LossFamily.MMD, locality=Locality.GLOBAL)
    y = rng.normal(size=(30, 1))
    assert baseline_loss(kind, y, y).item == pytest.approx(0.0, abs=1e-12)
    assert baseline_loss(kind, y, y + 3.0).item > 0.1


def test_gradient_flows_to_predictions(sample):
    x, y = sample
    preds = torch.zeros(y.shape, dtype=torch.float64, requires_grad=True)
    local_w2_loss(y, preds, build_index(x, InputNorm(), 0.5)).value.backward()
    assert preds.grad is not None
    assert torch.any(preds.grad != 0.0)


def test_frozen_couplings_are_reused(sample, rng):
    x, y = sample
    index = build_index(x, InputNorm(), 0.5)
    preds = rng.normal(size=y.shape)
    report = local_w2_loss(y, preds, index)
    again = local_w2_loss(y, preds, index, couplings=report.couplings)
    assert again.item == report.item
    assert again.couplings == report.couplings


def test_errors():
    index = build_index([0.0, 1.0], InputNorm(), 0.5)
    with pytest.raises(InputError):
        local_w2_loss([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], index)
    with pytest.raises(InputError):
        global_w2_loss([1.0, 2.0], [1.0])
    with pytest.raises(InputError):
        baseline_loss(LossKind(family=LossFamily.MSE), [1.0, 2.0], [1.0, 2.0])
    with pytest.raises(InputError):
        baseline_loss(LossKind(), [1.0, 2.0], [1.0, 2.0], index)
    with pytest.raises(InputError):
        evaluate_loss(LossKind(), [1.0, 2.0], [1.0, 2.0])


def _closed_form_gap(truth_spec, model_spec, rng, draws=100_000):
    x = sample_ground_truth(truth_spec, None, rng, count=draws).inputs
    b, s = np.asarray(truth_spec.coef_means), np.asarray(truth_spec.coef_sds)
    b_hat, s_hat = np.asarray(model_spec.coef_means), np.asarray(model_spec.coef_sds)
    design = np.hstack([np.ones((draws, 1)), x])
    mean_gap = design @ (b - b_hat)
    sd_gap = np.sqrt((design**2) @ s**2) - np.sqrt((design**2) @ s_hat**2)
    return float(np.mean(mean_gap**2 + sd_gap**2))


def _local_estimate(truth_spec, model_spec, n, seed):
    rng = np.random.default_rng(seed)
    data = sample_ground_truth(truth_spec, None, rng, count=n)
    preds = sample_ground_truth(model_spec, data.inputs, rng)
    return local_w2_loss(data.outputs, preds.outputs, build_index(data.inputs, InputNorm(), 0.1)).item


@pytest.mark.slow
def test_local_w2_approaches_closed_form_integral():
    truth = GroundTruthSpec.linear_default()
    model = truth.model_copy(update={"coef_means": [2.0, 1.0, 2.0, 3.0], "coef_sds": [0.1, 0.2, 0.3, 0.6]})
    target = _closed_form_gap(truth, model, np.random.default_rng(99))

    small = np.array([abs(_local_estimate(truth, model, 500, seed) - target) for seed in range(5)])
    large = np.array([abs(_local_estimate(truth, model, 5000, seed) - target) for seed in range(5)])
    assert np.sum(large < small) >= 4
    assert np.median(large) <= 0.1 * target
