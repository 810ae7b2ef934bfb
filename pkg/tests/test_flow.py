import numpy as np
import pytest
import torch

from kashtts.flow import (
    EmptyMask,
    FlowSample,
    NonFiniteState,
    SamplerConfig,
    cfm_loss,
    euler_sample,
    sample_flow_point,
)


def test_endpoints(rng):
    x0, x1 = rng.standard_normal((5, 80)), rng.standard_normal((5, 80))
    s = sample_flow_point(x0, x1, 0.0, sigma_min=0.0)
    np.testing.assert_array_equal(s.x_t, x0)
    np.testing.assert_array_equal(s.u_t, x1 - x0)
    s = sample_flow_point(x0, x1, 1.0, sigma_min=0.0)
    np.testing.assert_array_equal(s.x_t, x1)
    s = sample_flow_point(x0, x1, 1.0, sigma_min=0.1)
    np.testing.assert_allclose(s.x_t, 0.1 * x0 + x1, atol=1e-15)


def test_velocity_is_path_derivative(rng):
    for _ in range(20):
        x0, x1 = rng.standard_normal((4, 80)), rng.standard_normal((4, 80))
        t, h, sig = rng.uniform(0.05, 0.95), 1e-4, 1e-4
        fd = (sample_flow_point(x0, x1, t + h, sig).x_t - sample_flow_point(x0, x1, t - h, sig).x_t) / (2 * h)
        assert np.max(np.abs(fd - sample_flow_point(x0, x1, t, sig).u_t)) < 1e-6


def test_shape_mismatch(rng):
    from kashtts.align import ShapeMismatch

    with pytest.raises(ShapeMismatch):
        sample_flow_point(np.zeros((2, 3)), np.zeros((3, 2)), 0.5)


def test_cfm_loss_trivial(rng):
    s = sample_flow_point(rng.standard_normal((6, 80)), rng.standard_normal((6, 80)), 0.3)
    assert cfm_loss(s.u_t, s) == 0.0
    assert cfm_loss(s.u_t + 1.0, s) == pytest.approx(1.0)


def test_cfm_loss_matches_loop_oracle(rng):
    x0, x1 = rng.standard_normal((2, 7, 5)), rng.standard_normal((2, 7, 5))
    s = sample_flow_point(x0, x1, 0.6)
    pred = rng.standard_normal((2, 7, 5))
    mask = (rng.random((2, 7, 1)) > 0.4).astype(float)
    mask[0, 0] = 1
    total, count = 0.0, 0
    for b in range(2):
        for t in range(7):
            if mask[b, t, 0]:
                for d in range(5):
                    total += (pred[b, t, d] - s.u_t[b, t, d]) ** 2
                    count += 1
    assert abs(cfm_loss(pred, s, mask) - total / count) < 1e-7


def test_cfm_loss_torch_and_gradient():
    g = torch.Generator().manual_seed(0)
    x0, x1 = torch.randn(3, 6, 4, generator=g, dtype=torch.float64), torch.randn(3, 6, 4, generator=g, dtype=torch.float64)
    s = sample_flow_point(x0, x1, torch.rand(3, 1, 1, generator=g, dtype=torch.float64))
    mask = torch.ones(3, 6, 1, dtype=torch.float64)
    mask[1, 4:] = 0
    pred = torch.randn(3, 6, 4, generator=g, dtype=torch.float64, requires_grad=True)
    loss = cfm_loss(pred, s, mask)
    loss.backward()
    count = mask.expand_as(pred).sum()
    analytic = 2 * (pred.detach() - s.u_t) * mask / count
    torch.testing.assert_close(pred.grad, analytic.expand_as(pred), rtol=1e-12, atol=1e-14)
    # finite-difference cross-check on a few entries
    eps = 1e-6
    for idx in [(0, 0, 0), (1, 2, 3), (1, 5, 1), (2, 3, 2)]:
        p = pred.detach().clone()
        p[idx] += eps
        up = cfm_loss(p, s, mask)
        p[idx] -= 2 * eps
        down = cfm_loss(p, s, mask)
        fd = float((up - down) / (2 * eps))
        a = float(pred.grad[idx])
        assert abs(fd - a) <= 1e-5 * max(abs(a), 1e-8) or abs(fd - a) < 1e-12


def test_cfm_loss_nonnegative_and_empty_mask(rng):
    s = sample_flow_point(rng.standard_normal((4, 3)), rng.standard_normal((4, 3)), 0.5)
    assert cfm_loss(rng.standard_normal((4, 3)), s) > 0
    with pytest.raises(EmptyMask):
        cfm_loss(s.u_t, s, np.zeros((4, 1)))


def test_euler_zero_field(rng):
    x0 = rng.standard_normal((3, 80))
    np.testing.assert_array_equal(euler_sample(lambda x, t, c: 0 * x, x0), x0)


def point_mass_field(m):
    def field(x, t, cond):
        return (m - x) / (1.0 - t)
    return field


def test_euler_point_mass_transport(rng):
    m = rng.standard_normal(80)
    for _ in range(20):
        out = euler_sample(point_mass_field(m), rng.standard_normal(80), config=SamplerConfig(n_steps=100))
        assert np.max(np.abs(out - m)) < 1e-3


def test_euler_first_order_convergence(rng):
    a = -1.3
    x0 = rng.standard_normal(16)
    exact = x0 * np.exp(a)
    errs = [np.max(np.abs(euler_sample(lambda x, t, c: a * x, x0, config=SamplerConfig(n_steps=n)) - exact))
            for n in (10, 20, 40)]
    assert errs[0] > errs[1] > errs[2]
    assert 1.7 < errs[0] / errs[1] < 2.3 and 1.7 < errs[1] / errs[2] < 2.3


def test_euler_divergence_detected():
    with pytest.raises(NonFiniteState):
        euler_sample(lambda x, t, c: np.full_like(x, np.inf), np.zeros(3))


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(n_steps=0)
    with pytest.raises(ValueError):
        SamplerConfig(sigma_min=1.0)
