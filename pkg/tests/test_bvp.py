import numpy as np
import pytest

from bvp.bvp import BVPProblem, layer_width, limit_solution, sample_source, solve_bvp, trace_sweep
from models.records import BVPSolution, SweepRecord

N: int = 256
X_NODES: np.ndarray = np.arange(N + 1) / N
CONSTANT: np.ndarray = np.full(N + 1, 6.0)


def test_limit_problem_is_solved_exactly_for_constant_g():
    """g = 6 gives u = x (x - 1)^2, a cubic the discrete problem reproduces."""
    solution: BVPSolution = solve_bvp(BVPProblem(g=CONSTANT))
    assert np.allclose(solution.u, X_NODES * (X_NODES - 1.0) ** 2, rtol=0.0, atol=1e-9)
    assert solution.uxx0 == pytest.approx(-4.0, abs=1e-9)
    assert solution.sup_uxx == pytest.approx(4.0, abs=1e-9)
    assert solution.ux0 == pytest.approx(1.0, abs=1e-3)
    assert solution.uxxx1 == pytest.approx(6.0, abs=1e-4)
    assert solution.iterations == 0


def test_regularized_solution_meets_its_boundary_conditions():
    """u(0) = u(1) = 0 and u_xx(0) = 0 exactly, u_x(1) = 0 to the accuracy of the trace stencil."""
    solution: BVPSolution = solve_bvp(BVPProblem(g=np.full(513, 6.0), epsilon=0.01))
    assert solution.u[0] == 0.0 and solution.u[-1] == 0.0
    assert solution.uxx0 == 0.0
    assert abs(solution.ux1) < 1e-4
    assert np.all(np.isfinite(solution.uxx))


def test_limit_solution_by_integration():
    """g = 24 x integrates to x^4 - 3 x^2 + 2 x."""
    exact: BVPSolution = limit_solution(24.0 * X_NODES, N)
    assert np.allclose(exact.u, X_NODES**4 - 3.0 * X_NODES**2 + 2.0 * X_NODES, atol=1e-6)
    assert exact.ux0 == pytest.approx(2.0, abs=1e-6)
    assert exact.ux1 == pytest.approx(0.0, abs=1e-6)
    assert exact.uxxx1 == 24.0
    with pytest.raises(ValueError):
        limit_solution(np.zeros(10), N)


def test_limit_solution_agrees_with_the_discrete_solve():
    """The closed-form integration and the eps = 0 solve describe the same cubic."""
    solved: BVPSolution = solve_bvp(BVPProblem(g=CONSTANT))
    assert np.max(np.abs(solved.u - limit_solution(CONSTANT, N).u)) < 1e-8


def test_problem_validation():
    """Too few samples, non-finite samples and negative eps are rejected."""
    with pytest.raises(ValueError):
        BVPProblem(g=np.zeros(10))
    with pytest.raises(ValueError):
        BVPProblem(g=np.full(N + 1, np.nan))
    with pytest.raises(ValueError):
        BVPProblem(g=CONSTANT, epsilon=-1e-3)
    assert BVPProblem(g=CONSTANT).n == N


def test_sample_source():
    assert np.all(sample_source("constant", (6.0,), 16) == 6.0)
    assert sample_source("linear", (2.0,), 16)[-1] == 2.0
    with pytest.raises(ValueError):
        sample_source("quadratic", (1.0,), 16)


def test_nonlinear_problem_converges_for_small_data():
    """Relaxed Picard converges and the correction to the linear solve is second order in g."""
    g: np.ndarray = np.full(N + 1, 0.6)
    linear: BVPSolution = solve_bvp(BVPProblem(g=g, epsilon=0.01))
    nonlinear: BVPSolution = solve_bvp(BVPProblem(g=g, epsilon=0.01, nonlinear=True))
    assert 0 < nonlinear.iterations < 200
    correction: float = float(np.max(np.abs(nonlinear.u - linear.u)))
    assert 0.0 < correction < 1e-2 * float(np.max(np.abs(linear.u)))
    assert nonlinear.u[0] == 0.0 and nonlinear.u[-1] == 0.0


def test_zero_source_gives_zero():
    solution: BVPSolution = solve_bvp(BVPProblem(g=np.zeros(N + 1), epsilon=0.01, nonlinear=True))
    assert np.all(solution.u == 0.0)
    assert solution.iterations == 1


def test_trace_sweep_input_errors():
    with pytest.raises(ValueError):
        trace_sweep(CONSTANT, [1e-2, 1e-2], N)
    with pytest.raises(ValueError):
        trace_sweep(CONSTANT, [1e-2, -1e-3], N)


def test_trace_sweep_outer_error_shrinks_with_eps():
    """Away from the layer the regularized solutions approach the eps = 0 solve."""
    records, ratio = trace_sweep(np.full(513, 6.0), [1e-2, 1e-3, 1e-4], 512)
    assert [r.epsilon for r in records] == [1e-2, 1e-3, 1e-4]
    errors: list[float] = [r.err_outside_layer for r in records]
    assert errors[0] > errors[1] > errors[2]
    assert ratio >= 1.0
    assert all(isinstance(r, SweepRecord) and r.layer_width > 0.0 for r in records)


def test_layer_width_of_the_limit_against_itself():
    """No gap, no layer."""
    limit: BVPSolution = solve_bvp(BVPProblem(g=CONSTANT))
    assert layer_width(limit, limit, 0.1) == 0.0
