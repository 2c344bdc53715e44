import numpy as np
import pytest

from dedupcount import autodiff as ad
from dedupcount.autodiff import Var, backward, check_gradients, relative_error


def grad_of(fn, x):
    v = Var(np.array(x, dtype=float))
    backward(fn(v))
    return v.grad


def test_square():
    assert grad_of(lambda x: x * x, 3.0) == pytest.approx(6.0)


def test_sqrt():
    assert grad_of(ad.sqrt, 4.0) == pytest.approx(0.25)


def test_abs_at_zero_is_zero():
    assert grad_of(ad.absolute, 0.0) == 0.0
    # the one-sided slopes bracket the chosen subgradient
    h = 1e-6
    right = (abs(h) - abs(0.0)) / h
    left = (abs(0.0) - abs(-h)) / h
    assert left <= 0.0 <= right


def test_relu_at_zero_is_zero():
    assert grad_of(ad.relu, 0.0) == 0.0


def test_sqrt_backward_is_floored_at_zero():
    g = grad_of(ad.sqrt, 0.0)
    assert np.isfinite(g)
    assert g == pytest.approx(1 / (2 * ad.SQRT_GRAD_FLOOR))
    assert ad.sqrt(Var(0.0)).value == 0.0


def test_non_scalar_seed_rejected():
    v = Var(np.ones(3))
    with pytest.raises(ValueError):
        backward(v * 2.0)


def test_gradient_reuse_accumulates():
    # x used three times: d/dx (x * x + x) = 2x + 1
    assert grad_of(lambda x: x * x + x, 2.0) == pytest.approx(5.0)


def test_backward_twice_gives_same_result():
    x = Var(np.array([0.3, 0.7]))
    y = ad.vsum(ad.outer(x) * ad.outer(x))
    first = backward(y)[x].copy()
    second = backward(y)[x]
    assert np.array_equal(first, second)


def test_check_gradients_bilinear():
    report = check_gradients(lambda v: v[0] * v[1], [2.0, 5.0], 1e-5)
    assert report.max_rel_error < 1e-6
    np.testing.assert_allclose(report.analytic, [5.0, 2.0])


def test_check_gradients_flags_sqrt_at_zero():
    report = check_gradients(lambda v: ad.vsum(ad.sqrt(v)), [0.0], 1e-6)
    assert report.flagged == [0]
    assert report.max_rel_error == 0.0


def test_check_gradients_reports_mismatch_without_raising():
    def wrong(v):
        # forward is x^2 but the recorded adjoint is that of 3x
        return ad.make_node(v.value ** 2, (v,), lambda g: (3.0 * g,)).sum()

    report = check_gradients(wrong, [1.0], 1e-6)
    assert report.max_rel_error > 0.1


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([0.0]))[0] == 0.0
    assert relative_error(np.array([1e-9]), np.array([0.0]))[0] == pytest.approx(0.1)


# every primitive against central differences at random smooth points

def _away_from(x, kinks, margin=1e-3):
    return all(np.all(np.abs(x - k) >= margin) for k in kinks)


def _smooth_sample(rng, shape, low=-2.0, high=2.0, kinks=(), positive=False):
    while True:
        x = rng.uniform(low, high, size=shape)
        if positive:
            x = np.abs(x) + 0.1
        if _away_from(x, kinks):
            return x


PRIMITIVES = {
    "add": (lambda v: ad.vsum((v[:3] + v[3:]) * np.arange(1.0, 4.0)), 6, {}),
    "sub": (lambda v: ad.vsum((v[:3] - v[3:]) * np.arange(1.0, 4.0)), 6, {}),
    "mul": (lambda v: ad.vsum(v[:3] * v[3:]), 6, {}),
    "outer": (lambda v: ad.vsum(ad.outer(v[:3], v[3:]) * np.arange(9.0).reshape(3, 3)), 6, {}),
    "outer_self": (lambda v: ad.vsum(ad.outer(v) * np.arange(16.0).reshape(4, 4)), 4, {}),
    "abs": (lambda v: ad.vsum(ad.absolute(v) * np.arange(1.0, 5.0)), 4, {"kinks": (0.0,)}),
    "sqrt": (lambda v: ad.vsum(ad.sqrt(v)), 4, {"positive": True}),
    "sum_axis": (lambda v: ad.vsum(ad.vsum(ad.reshape(v, (2, 3)), axis=0) * np.array([1.0, -2.0, 3.0])), 6, {}),
    "relu": (lambda v: ad.vsum(ad.relu(v) * np.arange(1.0, 5.0)), 4, {"kinks": (0.0,)}),
    "reciprocal": (lambda v: ad.vsum(ad.reciprocal(v)), 4, {"positive": True}),
    "prod": (lambda v: ad.vsum(ad.prod(ad.reshape(v, (2, 3)), axis=-1) * np.array([1.0, 2.0])), 6, {}),
    "diag": (lambda v: ad.vsum(ad.diag(v) * np.arange(9.0).reshape(3, 3)), 3, {}),
    "take": (lambda v: ad.vsum(ad.take(ad.reshape(v, (2, 3)), [2, 0, 2, 1], axis=-1) * np.arange(8.0).reshape(2, 4)),
             6, {}),
    "linear": (lambda v: ad.vsum(ad.linear(ad.reshape(v[:4], (2, 2)), ad.reshape(v[4:10], (3, 2)), v[10:13])
                                 * np.arange(6.0).reshape(2, 3)), 13, {}),
    "exp": (lambda v: ad.vsum(ad.exp(v) * np.arange(1.0, 5.0)), 4, {}),
    "mean": (lambda v: ad.vsum(ad.mean(ad.reshape(v, (2, 3)), axis=0) * np.array([1.0, -2.0, 3.0])), 6, {}),
    "log_softmax": (lambda v: ad.vsum(ad.log_softmax(v) * np.array([1.0, 0.0, 2.0, -1.0])), 4, {}),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_matches_finite_differences(name):
    fn, size, opts = PRIMITIVES[name]
    rng = np.random.default_rng(sum(map(ord, name)))
    worst = 0.0
    for _ in range(100):
        x = _smooth_sample(rng, size, **opts)
        report = check_gradients(fn, x, 1e-6)
        assert not report.flagged
        worst = max(worst, report.max_rel_error)
    assert worst < 1e-4


def test_prod_backward_with_zero_entries():
    x = Var(np.array([0.0, 2.0, 3.0]))
    backward(ad.prod(x))
    np.testing.assert_array_equal(x.grad, [6.0, 0.0, 0.0])


def test_broadcasting_gradient_is_summed():
    x = Var(np.array([1.0, 2.0]))
    m = np.ones((3, 2))
    backward(ad.vsum(x * m))
    np.testing.assert_array_equal(x.grad, [3.0, 3.0])


def test_constants_get_no_gradient_slot():
    x = Var(np.array(2.0))
    out = x * np.float64(3.0)
    leaves = backward(out)
    assert list(leaves) == [x]
