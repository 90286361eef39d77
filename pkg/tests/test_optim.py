import numpy as np
import pytest

from hfnet.errors import ShapeError
from hfnet.nn.layers import Param
from hfnet.optim import Adam, adam_update

from oracles import scalar_adam_oracle




class TestAdamUpdate:
    def test_first_step_closed_form(self):
        # with m=v=0 and g=1 the bias corrections collapse to m_hat=v_hat=1
        theta, m, v = adam_update(np.array([0.0]), np.array([1.0]),
                                  np.zeros(1), np.zeros(1), t=1, lr=1e-3)
        expected = -1e-3 / (1.0 + 1e-8)
        assert abs(theta[0] - expected) < 1e-15
        assert abs(theta[0] + 9.9999999e-4) < 1e-12

    def test_first_step_magnitude_is_lr(self):
        # |update| = lr * |g| / (|g| + eps); for |g| >= 1 the eps term
        # perturbs the magnitude by at most eps * lr
        for g in (1.0, 2.0, 100.0):
            theta, _, _ = adam_update(np.array([0.0]), np.array([g]),
                                      np.zeros(1), np.zeros(1), t=1, lr=1e-3)
            assert abs(abs(theta[0]) - 1e-3) < 1e-8 * 1e-3

    def test_zero_gradient_zero_state_is_identity(self):
        theta0 = np.array([1.5, -2.0])
        theta, m, v = adam_update(theta0, np.zeros(2), np.zeros(2), np.zeros(2), t=1, lr=1e-3)
        assert np.array_equal(theta, theta0)

    def test_ten_steps_on_quadratic_match_scalar_oracle(self):
        # f(theta) = theta^2, gradient 2*theta, starting at theta=1
        lr = 0.05
        theta = np.array([1.0])
        m, v = np.zeros(1), np.zeros(1)
        grads = []
        impl = []
        for t in range(1, 11):
            g = 2.0 * theta
            grads.append(float(g[0]))
            theta, m, v = adam_update(theta, g, m, v, t=t, lr=lr)
            impl.append(float(theta[0]))
        oracle = scalar_adam_oracle(grads, 1.0, lr)
        for a, b in zip(impl, oracle):
            assert abs(a - b) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_update(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2), t=1, lr=1e-3)


class TestAdamClass:
    def test_matches_functional_form(self):
        rng = np.random.default_rng(0)
        p = Param("w", rng.standard_normal(5).astype(np.float64))
        theta = p.data.copy()
        m = np.zeros(5)
        v = np.zeros(5)
        adam = Adam([p], lr=1e-2)
        for t in range(1, 8):
            g = rng.standard_normal(5)
            p.grad[...] = g
            adam.step()
            theta, m, v = adam_update(theta, g, m, v, t=t, lr=1e-2)
            assert np.allclose(p.data, theta, atol=1e-12)

    def test_shared_param_steps_once(self):
        p = Param("w", np.zeros(3))
        adam = Adam([p, p, p], lr=1e-3)
        assert len(adam.params) == 1
        p.grad[...] = 1.0
        adam.step()
        assert np.allclose(p.data, -1e-3 / (1 + 1e-8))

    def test_v_stays_nonnegative_and_t_increments(self):
        rng = np.random.default_rng(1)
        p = Param("w", np.zeros(4))
        adam = Adam([p], lr=1e-3)
        for t in range(1, 6):
            p.grad[...] = rng.standard_normal(4)
            adam.step()
            assert adam.t == t
            assert np.all(adam.v[0] >= 0)
