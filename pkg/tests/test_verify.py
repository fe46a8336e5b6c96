import pytest

from cli.handlers.verify import assignment_cost, check_bounds, check_gradients, check_oracles, run_verify
from core.errors import InputError


def by_name(results):
    return {result.name: result for result in results}


def test_oracles_pass_with_the_assignment_solver():
    results = check_oracles(instances=50)
    assert all(result.passed for result in results), [r for r in results if not r.passed]


def test_perturbed_solver_is_caught():
    def perturbed(a, b):
        return assignment_cost(a, b) + 1e-6

    results = by_name(check_oracles(perturbed, instances=20))
    assert not results["assignment-vs-bruteforce"].passed
    assert not results["assignment-vs-sorted-1d"].passed
    assert results["gaussian-closed-form"].passed


def test_bounds_suite_passes():
    results = check_bounds()
    assert {r.suite for r in results} == {"bounds"}
    assert by_name(results)["bound-decreases-with-one-count"].passed
    assert all(result.passed for result in results), [r for r in results if not r.passed]


def test_reduced_gradient_suite_passes():
    results = check_gradients(points=3, samples=20)
    assert len(results) == 24
    assert {r.name.split("/")[0] for r in results} == {"linear", "mlp-ff", "mlp-resnet"}
    assert "mlp-resnet/local-w2" in by_name(results)
    assert all(result.passed for result in results), [r for r in results if not r.passed]


def test_unknown_suite():
    with pytest.raises(InputError):
        run_verify("everything")
