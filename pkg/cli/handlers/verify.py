"""Self-checks runnable without data files: transport oracles, gradients and bounds."""

import logging
import math
from typing import Callable, Optional

import numpy as np
import torch

from core.errors import InputError
from core.models import BoundInputs, CheckResult, InputNorm, LossKind
from services.autodiff import DTYPE, ParamVector, gradient_check
from services.losses import evaluate_loss, global_w2_loss, local_w2_loss
from services.metrics import rate_factor, theorem1_bound
from services.neighborhoods import build_index
from services.ode_recon import rk4_path
from services.optim import AdamWState, adamw_step
from services.stochastic_models import (
    LinearGaussianModel,
    LinearSpec,
    MlpSpec,
    StochasticMlp,
    StochasticModel,
)
from services.transport import w2sq_1d_sorted, w2sq_assignment, w2sq_bruteforce

logger = logging.getLogger(__name__)

SUITES = ("oracles", "gradients", "bounds")

# Parameter entries checked per MLP point
MLP_COORDINATES = 24

# Returns the squared W2 cost of two equal-size clouds
CostSolver = Callable[[np.ndarray, np.ndarray], float]


def assignment_cost(a: np.ndarray, b: np.ndarray) -> float:
    return w2sq_assignment(a, b).cost


def _check(suite: str, name: str, passed: bool, detail: str) -> CheckResult:
    result = CheckResult(suite=suite, name=name, passed=bool(passed), detail=detail)
    logger.debug(f"{suite}/{name}: {'pass' if result.passed else 'FAIL'} {detail}")
    return result


def check_oracles(solver: Optional[CostSolver] = None, instances: int = 200) -> list[CheckResult]:
    """Assignment against brute force and sorted pairing, plus closed-form Gaussian W2."""
    solver = solver or assignment_cost
    rng = np.random.default_rng(20240601)
    results = []

    worst = 0.0
    for _ in range(instances):
        size, dim = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        a, b = rng.normal(size=(size, dim)), rng.normal(size=(size, dim))
        worst = max(worst, abs(solver(a, b) - w2sq_bruteforce(a, b)))
    results.append(_check("oracles", "assignment-vs-bruteforce", worst <= 1e-9, f"max gap {worst:.3e}"))

    worst = 0.0
    for _ in range(instances):
        size = int(rng.integers(1, 40))
        a, b = rng.normal(size=(size, 1)), rng.normal(size=(size, 1))
        worst = max(worst, abs(solver(a, b) - w2sq_1d_sorted(a, b)))
    results.append(_check("oracles", "assignment-vs-sorted-1d", worst <= 1e-12, f"max gap {worst:.3e}"))

    estimates = []
    for seed in range(5):
        gen = np.random.default_rng(seed)
        estimates.append(w2sq_1d_sorted(gen.normal(0.0, 1.0, (20000, 1)), gen.normal(1.0, 2.0, (20000, 1))))
    median = float(np.median(estimates))
    results.append(
        _check("oracles", "gaussian-closed-form", abs(median - 2.0) <= 0.1, f"median {median:.4f} vs 2.0")
    )

    x = rng.normal(size=(12, 2))
    truth, preds = rng.normal(size=(12, 1)), rng.normal(size=(12, 1))
    whole = build_index(x, InputNorm(), math.inf)
    local = local_w2_loss(truth, preds, whole).item
    full = global_w2_loss(truth, preds).item
    results.append(
        _check("oracles", "local-covers-global", abs(local - full) <= 1e-12, f"{local:.6g} vs {full:.6g}")
    )
    return results


class _GradientCase:
    """A model with fixed inputs, targets and neighborhoods, plus a sampler of parameter points."""

    def __init__(
        self,
        name: str,
        model: StochasticModel,
        x: np.ndarray,
        truth: np.ndarray,
        radius: float,
        coordinates: Optional[int] = None,
    ):
        self.name = name
        self.coordinates = coordinates
        self.model = model
        self.inputs = torch.from_numpy(x)
        self.truth = torch.from_numpy(truth)
        self.index = build_index(x, InputNorm(), radius)

    def draw_params(self, rng: np.random.Generator) -> ParamVector:
        params = ParamVector(self.model.layout)
        if isinstance(self.model, LinearGaussianModel):
            params.values = torch.from_numpy(rng.normal(1.0, 0.5, len(params)))
            return params
        # Sampled weights stay positive on positive inputs, away from the ReLU and abs kinks
        params.values = torch.from_numpy(rng.normal(1.0, 0.2, len(params)))
        for name in params.names:
            if name.endswith(".spread"):
                params.set_block(name, rng.uniform(0.05, 0.15, tuple(params.block(name).shape)))
        return params

    def draw_coordinates(self, rng: np.random.Generator, size: int) -> Optional[list[int]]:
        if self.coordinates is None or self.coordinates >= size:
            return None
        return sorted(rng.choice(size, self.coordinates, replace=False).tolist())


def _gradient_cases(rng: np.random.Generator, samples: int) -> list[_GradientCase]:
    x = rng.normal(size=(samples, 3))
    truth = x @ np.array([1.0, 2.0, 3.0]) + 1.0 + 0.3 * rng.normal(size=samples)
    cases = [_GradientCase("linear", LinearGaussianModel(LinearSpec(input_dim=3)), x, truth, 1.5)]

    positive = rng.uniform(0.5, 1.5, size=(samples, 3))
    target = 20.0 * positive @ np.array([1.0, 2.0, 3.0]) + rng.normal(size=samples)
    for resnet in (False, True):
        model = StochasticMlp(MlpSpec.build(3, 1, 5, 2, resnet=resnet))
        label = f"mlp-{'resnet' if resnet else 'ff'}"
        cases.append(_GradientCase(label, model, positive, target, 0.5, coordinates=MLP_COORDINATES))
    return cases


def check_gradients(points: int = 20, samples: int = 40) -> list[CheckResult]:
    """Reverse sweep against central differences for every model and loss kind, noise and couplings frozen."""
    rng = np.random.default_rng(7)
    generator = torch.Generator().manual_seed(7)

    results = []
    for case in _gradient_cases(rng, samples):
        model = case.model
        for kind in LossKind.all_kinds():
            worst = 0.0
            failed = 0
            for _ in range(points):
                params = case.draw_params(rng)
                noise = model.sample_noise(samples, generator)
                with torch.no_grad():
                    base = model.predict(params, case.inputs, noise)
                couplings = evaluate_loss(kind, case.truth, base, case.index).couplings

                def program(vector: ParamVector) -> torch.Tensor:
                    preds = model.predict(vector, case.inputs, noise)
                    return evaluate_loss(kind, case.truth, preds, case.index, couplings).value

                report = gradient_check(program, params, coordinates=case.draw_coordinates(rng, len(params)))
                worst = max(worst, report.max_rel_error)
                failed += not report.passed
            detail = f"{points} points, max rel error {worst:.2e}"
            results.append(_check("gradients", f"{case.name}/{kind.label}", failed == 0, detail))
    return results


def _adamw_by_hand(theta, grads, lr, wd, betas=(0.9, 0.999), eps=1e-8) -> np.ndarray:
    theta = np.array(theta, dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        g = np.asarray(g, dtype=np.float64)
        theta = theta * (1 - lr * wd)
        m = betas[0] * m + (1 - betas[0]) * g
        v = betas[1] * v + (1 - betas[1]) * g * g
        m_hat = m / (1 - betas[0] ** t)
        v_hat = v / (1 - betas[1] ** t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def check_bounds() -> list[CheckResult]:
    """Optimizer and integrator exactness plus monotonicity of the error bound."""
    results = []

    theta0, grads = [1.0, -2.0], [[1.0, 0.5], [-0.5, 2.0]]
    params = ParamVector([("theta", (2,))], torch.tensor(theta0, dtype=DTYPE))
    state = AdamWState(params, lr=0.1, weight_decay=0.01)
    for g in grads:
        params.grad = torch.tensor(g, dtype=DTYPE)
        adamw_step(params, state)
    gap = float(np.max(np.abs(params.values.detach().numpy() - _adamw_by_hand(theta0, grads, 0.1, 0.01))))
    results.append(_check("bounds", "adamw-two-step", gap <= 1e-12, f"max gap {gap:.3e}"))

    step = float(rk4_path(lambda y: y, np.array([1.0]), 0.1, 1)[-1][0])
    results.append(
        _check("bounds", "rk4-single-step", abs(step - 1.1051708) <= 1e-6, f"y(0.1) = {step:.10f}")
    )

    coarse = abs(float(rk4_path(lambda y: y, np.array([1.0]), 0.1, 10)[-1][0]) - math.e)
    fine = abs(float(rk4_path(lambda y: y, np.array([1.0]), 0.05, 20)[-1][0]) - math.e)
    ratio = coarse / fine
    results.append(_check("bounds", "rk4-order", 12.0 <= ratio <= 20.0, f"error ratio {ratio:.2f}"))

    dims = (1, 2, 4, 5, 8)
    decreasing = all(
        rate_factor(count, dim) > rate_factor(count + 1, dim) for dim in dims for count in range(5, 500)
    )
    results.append(_check("bounds", "rate-factor-decreasing", decreasing, "N = 5..500"))

    base = dict(M=10.0, L=2.0, C=1.0, N=1000, delta=0.1, counts=[50] * 10, n=3)
    by_size = [
        theorem1_bound(BoundInputs(**{**base, "N": size, "counts": [size // 20] * 10}))
        for size in (200, 400, 800, 1600, 3200)
    ]
    shrinking = bool(np.all(np.diff(by_size) < 0))
    detail = f"{by_size[0]:.4g} -> {by_size[-1]:.4g}"
    results.append(_check("bounds", "bound-decreases-with-n", shrinking, detail))
    uneven = {**base, "counts": [10, 25, 50, 100, 200, 400, 20, 40, 80, 160]}
    single = all(
        theorem1_bound(BoundInputs(**{**uneven, "counts": grown})) < theorem1_bound(BoundInputs(**uneven))
        for grown in (
            [c + 7 if i == position else c for i, c in enumerate(uneven["counts"])]
            for position in range(len(uneven["counts"]))
        )
    )
    results.append(_check("bounds", "bound-decreases-with-one-count", single, "one neighborhood grown"))
    growing = all(
        theorem1_bound(BoundInputs(**{**base, key: base[key] * 2})) > theorem1_bound(BoundInputs(**base))
        for key in ("M", "L", "delta", "C")
    )
    results.append(_check("bounds", "bound-increases-with-m-l-delta-c", growing, "doubling each input"))
    return results


def run_verify(suite: str, solver: Optional[CostSolver] = None) -> list[CheckResult]:
    """
    Run one suite, or all of them.

    Args:
        suite: One of oracles, gradients, bounds, all
        solver: Replacement cost solver for the oracle suite

    Returns:
        One CheckResult per check
    """
    if suite not in SUITES + ("all",):
        raise InputError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)} or all")
    chosen = SUITES if suite == "all" else (suite,)
    results: list[CheckResult] = []
    for name in chosen:
        logger.info(f"Running verify suite {name}")
        if name == "oracles":
            results.extend(check_oracles(solver))
        elif name == "gradients":
            results.extend(check_gradients())
        else:
            results.extend(check_bounds())
    return results
