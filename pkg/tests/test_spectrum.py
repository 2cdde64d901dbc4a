import math

import numpy as np
import pytest

from critbench import benchmarks
from critbench.autoenc import Shape, autoencoder_objective, batch_loss_and_grad, glorot_init
from critbench.core import ObjectiveMeta
from critbench.optim import OptimizerState, StopRule, default_config, run
from critbench.spectrum import MinEigTracker, hessian_min_eig, lanczos_min_eig, track_min_eig
from oracles import dense_fd_hessian, jacobi_eigenvalues, random_symmetric


def matvec(A):
    return lambda v: A @ v


def test_diagonal_operator():
    A = np.diag([3.0, -2.0, 5.0])
    res = lanczos_min_eig(matvec(A), 3, rng=np.random.default_rng(0))
    assert res.lambda_min == pytest.approx(-2.0, abs=1e-10)
    assert res.iters_used <= 3


def test_identity_converges_immediately():
    res = lanczos_min_eig(lambda v: v, 50, rng=np.random.default_rng(0))
    assert res.lambda_min == pytest.approx(1.0, abs=1e-14)
    assert res.iters_used == 1 and res.breakdown


@pytest.mark.parametrize("seed", range(3))
def test_random_symmetric_matches_jacobi(seed):
    rng = np.random.default_rng(seed)
    A = random_symmetric(rng, 60)
    truth = jacobi_eigenvalues(A)[0]
    res = lanczos_min_eig(matvec(A), 60, rng=rng)
    assert abs(res.lambda_min - truth) <= 1e-6 * abs(truth)


def test_ritz_value_bounds_and_monotone_history():
    rng = np.random.default_rng(4)
    A = random_symmetric(rng, 80)
    truth = np.linalg.eigvalsh(A)[0]
    res = lanczos_min_eig(matvec(A), 80, max_iters=15, tol=0.0, rng=rng)
    assert res.iters_used == 15 and not res.converged
    assert all(h >= truth - 1e-10 for h in res.history)
    assert all(b <= a + 1e-12 for a, b in zip(res.history, res.history[1:]))
    assert res.ritz_residual > 0


def test_shift_invariance():
    rng = np.random.default_rng(9)
    A = random_symmetric(rng, 40)
    c = 3.7
    a = lanczos_min_eig(matvec(A), 40, rng=np.random.default_rng(1)).lambda_min
    b = lanczos_min_eig(matvec(A + c * np.eye(40)), 40, rng=np.random.default_rng(1)).lambda_min
    assert abs((b - c) - a) <= 1e-8


def test_non_finite_operator_raises():
    with pytest.raises(FloatingPointError):
        lanczos_min_eig(lambda v: v * np.nan, 5)


def test_quadratic_tracking_is_constant():
    A = np.diag([0.5, 2.0, 1.0, 4.0])
    obj = benchmarks.quadratic(A)
    tracker = MinEigTracker(obj, stride=5)
    res = run(OptimizerState.initial(np.ones(4)), default_config("NAG", 0.05), obj, StopRule(30), hooks=[tracker])
    vals = [r.lambda_min for r in res.trace if not math.isnan(r.lambda_min)]
    assert len(vals) == 6
    np.testing.assert_allclose(vals, 0.5, atol=1e-10)


@pytest.mark.parametrize("stride", [math.inf, None])
def test_infinite_stride_disables_tracking(stride):
    obj = benchmarks.half_norm_squared(3)
    res = track_min_eig(lambda hooks: run(OptimizerState.initial(np.ones(3)), default_config("NAG", 0.1), obj,
                                          StopRule(20), hooks=hooks), obj, stride)
    assert all(math.isnan(r.lambda_min) for r in res.trace)


def test_tracker_requires_hvp():
    obj = benchmarks.half_norm_squared(2)
    bare = type(obj)(obj.dim, obj.value_fn, obj.grad_fn, obj.meta)
    with pytest.raises(ValueError):
        MinEigTracker(bare, 10)


def test_tiny_autoencoder_tracking_matches_dense_hessian():
    shape = Shape(1, 6, 6)
    rng = np.random.default_rng(0)
    Z = rng.uniform(0, 1, (40, 6))
    obj = autoencoder_objective(shape, Z, meta=ObjectiveMeta(L=10.0, sigma=10.0, f_star=0.0))
    x1 = glorot_init(rng, 1, 6, 6).flat
    points = {}

    class Keep:
        def on_record(self, rec, state):
            if rec.t % 50 == 0:
                points[rec.t] = state.x.copy()

        def on_step(self, *a):
            pass

        def summary(self):
            return {}

    tracker = MinEigTracker(obj, stride=50)
    res = run(OptimizerState.initial(x1), default_config("ADAM", 0.01), obj, StopRule(200),
              hooks=[tracker, Keep()])
    rows = [r for r in res.trace if not math.isnan(r.lambda_min)]
    assert [r.t for r in rows] == [50, 100, 150, 200]
    for r in rows:
        H = dense_fd_hessian(lambda y: batch_loss_and_grad(shape, Z, y)[1], points[r.t])
        truth = jacobi_eigenvalues(H)[0]
        assert abs(r.lambda_min - truth) <= 1e-3 * abs(truth)


def test_hessian_min_eig_wrapper():
    obj = benchmarks.gaussian_well(3)
    # the Hessian at the origin is (depth / width^2) I
    assert hessian_min_eig(obj, np.zeros(3)).lambda_min == pytest.approx(1.0, abs=1e-12)
