import numpy as np
import pytest
from scipy.optimize import least_squares

from xduct.errors import ConvergenceError, SingularMatrixError, ValidationError
from xduct.nlls import central_difference_jacobian, curve_fit, forward_difference_jacobian, nlls


def rosenbrock(x):
    return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])


def test_linear_model_matches_normal_equations():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 5, 40)
    y = 1.7 - 0.4 * x + 0.05 * x**2 + rng.normal(0, 0.1, x.size)
    design = np.column_stack([np.ones_like(x), x, x**2])
    beta = np.linalg.solve(design.T @ design, design.T @ y)
    res = curve_fit(lambda t, a, b, c: a + b * t + c * t**2, x, y, [0.0, 0.0, 0.0])
    np.testing.assert_allclose(res.x, beta, rtol=1e-10, atol=1e-12)
    resid = y - design @ beta
    cov = resid @ resid / (x.size - 3) * np.linalg.inv(design.T @ design)
    np.testing.assert_allclose(res.covariance, cov, rtol=1e-6)


def test_init_at_optimum():
    x = np.linspace(0, 1, 20)
    y = 2.0 * np.exp(-x / 0.3) + 0.1 * np.sin(7 * x)
    first = curve_fit(lambda t, a, tau: a * np.exp(-t / tau), x, y, [1.0, 1.0])
    again = curve_fit(lambda t, a, tau: a * np.exp(-t / tau), x, y, first.x)
    assert again.niter <= 2
    np.testing.assert_allclose(again.x, first.x, rtol=1e-9)


def test_rosenbrock():
    res = nlls(rosenbrock, [-1.2, 1.0])
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-8)
    assert res.niter < 200


def test_rosenbrock_iteration_cap():
    with pytest.raises(ConvergenceError):
        nlls(rosenbrock, [-1.2, 1.0], max_iter=2)


def test_agrees_with_scipy():
    rng = np.random.default_rng(1)
    t = np.linspace(0, 10, 80)
    y = 3.0 * np.exp(-t / 2.5) * np.cos(1.3 * t) + 0.2 + rng.normal(0, 0.05, t.size)

    def resid(p):
        return p[0] * np.exp(-t / p[1]) * np.cos(p[2] * t) + p[3] - y

    ours = nlls(resid, [2.5, 2.0, 1.25, 0.0])
    ref = least_squares(resid, [2.5, 2.0, 1.25, 0.0], method="lm", xtol=1e-14, ftol=1e-14)
    np.testing.assert_allclose(ours.x, ref.x, rtol=1e-7)


def test_unconstrained_parameter():
    with pytest.raises(SingularMatrixError):
        nlls(lambda p: np.array([p[0] - 1.0, p[0] + 1.0, 2 * p[0]]), [0.3, 5.0])


def test_bounds():
    with pytest.raises(ValidationError):
        nlls(rosenbrock, [-1.2, 1.0], bounds=([0, 0], [2, 2]))
    res = nlls(lambda p: np.array([p[0] + 1.0, 0.1 * p[0]]), [1.0], bounds=([0.0], [2.0]))
    assert res.x[0] == 0.0


def test_non_finite_data():
    with pytest.raises(ValidationError):
        curve_fit(lambda t, a: a * t, [0.0, 1.0], [0.0, np.nan], [1.0])


def test_finite_difference_jacobians():
    x = np.array([0.7, -1.3])

    def f(p):
        return np.array([np.sin(p[0]) * p[1], np.exp(p[0] * p[1]), p[1] ** 3])

    exact = np.array([[np.cos(x[0]) * x[1], np.sin(x[0])],
                      [x[1] * np.exp(x[0] * x[1]), x[0] * np.exp(x[0] * x[1])],
                      [0.0, 3 * x[1] ** 2]])
    np.testing.assert_allclose(forward_difference_jacobian(f, x), exact, rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(central_difference_jacobian(f, x), exact, rtol=1e-8, atol=1e-9)


def test_analytic_and_numeric_jacobian_agree():
    t = np.linspace(0, 3, 30)
    y = 1.5 * np.exp(-t / 0.8) + 0.05

    def model(tt, a, tau, c):
        return a * np.exp(-tt / tau) + c

    def jac(tt, a, tau, c):
        e = np.exp(-tt / tau)
        return np.column_stack([e, a * e * tt / tau**2, np.ones_like(tt)])

    with_jac = curve_fit(model, t, y, [1.0, 1.0, 0.0], jac=jac)
    without = curve_fit(model, t, y, [1.0, 1.0, 0.0])
    np.testing.assert_allclose(with_jac.x, [1.5, 0.8, 0.05], rtol=1e-9)
    np.testing.assert_allclose(without.x, with_jac.x, rtol=1e-7)
    assert with_jac.status in {"zero residual", "xtol", "ftol", "stationary"}
