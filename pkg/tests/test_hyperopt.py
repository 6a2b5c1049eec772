import math

import numpy as np
import pytest


from passgp.ep import ep_fit
from passgp.hyperopt import OptimizerConfig, optimize
from passgp.kernels import KernelFamily, KernelSpec, kernel_matrix


def objective(spec, X, y, ep_config=None):
    K = kernel_matrix(spec, X, symmetric=True)
    return ep_fit(K, y, ep_config).log_z_ep


def make_problem(rng, n=30):
    X = rng.normal(size=(n, 2))
    d2 = ((X[:, None] - X[None]) ** 2).sum(-1)
    K = 0.8 * np.exp(-d2 / (2.0 * 0.8)) + 0.05 * np.eye(n)
    f = np.linalg.cholesky(K) @ rng.normal(size=n)
    y = np.where(rng.uniform(size=n) < norm_cdf(f), 1, -1)
    if len(np.unique(y)) < 2:
        y[0] = -y[0]
    return X, y


def norm_cdf(x):
    from scipy.stats import norm

    return norm.cdf(x)


class TestOptimize:
    def test_never_worsens(self):
        rng = np.random.default_rng(60)
        X, y = make_problem(rng)
        spec0 = KernelSpec(KernelFamily.SE_JITTER,
                           (math.log(0.3), math.log(3.0), math.log(0.1)))
        spec1 = optimize(X, y, spec0)
        assert objective(spec1, X, y) >= objective(spec0, X, y) - 1e-9

    def test_monotone_trace(self):
        rng = np.random.default_rng(61)
        X, y = make_problem(rng)
        spec0 = KernelSpec(KernelFamily.SE_JITTER,
                           (0.0, 0.0, math.log(0.05)))
        trace = []
        optimize(X, y, spec0, OptimizerConfig(max_evals=15), trace=trace)
        values = [rec[2] for rec in trace]
        assert len(values) >= 1
        assert np.all(np.diff(values) >= 0.0)

    def test_stationary_start_returns_init_after_one_eval(self):
        rng = np.random.default_rng(62)
        X, y = make_problem(rng, n=20)
        # converge first, then restart from the optimum
        spec = KernelSpec(KernelFamily.SE_JITTER, (0.0, 0.0, math.log(0.05)))
        spec_opt = optimize(X, y, spec, OptimizerConfig(max_evals=40, grad_tol=1e-3))
        trace = []
        again = optimize(X, y, spec_opt, OptimizerConfig(grad_tol=1e-2), trace=trace)
        assert again.log_theta == spec_opt.log_theta
        assert len(trace) == 1

    def test_respects_bounds(self):
        rng = np.random.default_rng(63)
        X, y = make_problem(rng, n=20)
        spec0 = KernelSpec(KernelFamily.SE_JITTER, (5.0, 5.0, math.log(0.05)))
        out = optimize(X, y, spec0, OptimizerConfig(max_evals=8, log_theta_bound=6.0))
        assert all(abs(v) <= 6.0 for v in out.log_theta if math.isfinite(v))

    def test_disabled_jitter_stays_disabled(self):
        rng = np.random.default_rng(64)
        X, y = make_problem(rng, n=20)
        spec0 = KernelSpec(KernelFamily.SE_JITTER, (0.0, 0.0, -math.inf))
        out = optimize(X, y, spec0, OptimizerConfig(max_evals=6))
        assert out.log_theta[2] == -math.inf

    def test_single_class_rejected(self):
        X = np.zeros((4, 2))
        spec = KernelSpec(KernelFamily.SE_JITTER, (0.0, 0.0, math.log(0.1)))
        with pytest.raises(ValueError, match="both classes"):
            optimize(X, np.ones(4, dtype=int), spec)

    def test_length_scale_recovery(self):
        """Generate from a known length scale; the median recovered value
        over seeds must land within 0.5 nats."""
        true_log_t2 = math.log(1.5)
        recovered = []
        for seed in range(10):
            rng = np.random.default_rng(200 + seed)
            n = 100
            X = rng.uniform(-4.0, 4.0, size=(n, 1))
            d2 = (X - X.T) ** 2
            K = 2.0 * np.exp(-d2 / (2.0 * math.exp(true_log_t2))) + 1e-8 * np.eye(n)
            f = np.linalg.cholesky(K + 1e-9 * np.eye(n)) @ rng.normal(size=n)
            y = np.where(rng.uniform(size=n) < norm_cdf(f), 1, -1)
            if len(np.unique(y)) < 2:
                continue
            spec0 = KernelSpec(KernelFamily.SE_JITTER,
                               (0.0, 0.0, math.log(0.01)))
            out = optimize(X, y, spec0, OptimizerConfig(max_evals=30))
            recovered.append(out.log_theta[1])
        med = float(np.median(recovered))
        assert abs(med - true_log_t2) <= 0.5


def test_debug_fd_check_runs():
    rng = np.random.default_rng(65)
    X, y = make_problem(rng, n=16)
    spec0 = KernelSpec(KernelFamily.SE_JITTER, (0.0, 0.0, math.log(0.05)))
    out = optimize(X, y, spec0,
                   OptimizerConfig(max_evals=4, debug_fd_check=True))
    assert objective(out, X, y) >= objective(spec0, X, y) - 1e-9
