import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from pglab.numdiff import DEFAULT_STEP, central_difference, relative_error


def test_exact_on_quadratics():
    # central differences have zero truncation error on quadratics; only
    # round-off remains
    A = np.array([[2.0, -1.0, 0.5], [-1.0, 3.0, 1.0], [0.5, 1.0, 1.5]])
    b = np.array([0.3, -0.7, 2.0])

    def f(x):
        return 0.5 * x @ A @ x + b @ x

    x0 = np.array([0.2, -1.1, 0.4])
    grad = central_difference(f, x0)
    assert relative_error(grad, A @ x0 + b) < 1e-9


def test_known_gradient_of_exp_sum():
    def f(x):
        return float(np.sum(np.exp(x)))

    x0 = np.array([0.1, -0.5, 1.2, 0.0])
    grad = central_difference(f, x0)
    assert relative_error(grad, np.exp(x0)) < 1e-9


def test_vector_valued_function_stacks_rows():
    # f: R^2 -> R^3 with hand-computed Jacobian
    def f(x):
        return np.array([x[0] ** 2, x[0] * x[1], np.sin(x[1])])

    x0 = np.array([1.5, 0.7])
    jac = central_difference(f, x0)
    expected = np.array(
        [[2 * x0[0], x0[1], 0.0], [0.0, x0[0], np.cos(x0[1])]]
    )
    assert jac.shape == (2, 3)
    assert relative_error(jac, expected) < 1e-9


def test_second_order_accuracy():
    # halving h shrinks the truncation error about fourfold on a cubic
    def f(x):
        return float(x[0] ** 3)

    x0 = np.array([1.0])
    exact = 3.0
    err_h = abs(central_difference(f, x0, h=1e-3)[0] - exact)
    err_h2 = abs(central_difference(f, x0, h=5e-4)[0] - exact)
    assert 3.0 < err_h / err_h2 < 5.0


def test_empty_parameter_vector():
    out = central_difference(lambda x: 1.0, np.zeros(0))
    assert out.shape == (0,)


def test_default_step_value():
    assert DEFAULT_STEP == 1e-5


@given(
    st.lists(st.floats(-5, 5), min_size=1, max_size=6),
    st.lists(st.floats(-5, 5), min_size=1, max_size=6),
)
@settings(deadline=None)
def test_relative_error_is_symmetric_and_zero_on_equal(xs, ys):
    a = np.array(xs)
    b = np.array(ys[: len(xs)] + xs[len(ys):])
    assert relative_error(a, a) == 0.0
    assert relative_error(a, b) == relative_error(b, a)
    assert relative_error(a, b) >= 0.0


def test_relative_error_floor_guards_zero_vectors():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    # tiny difference against zero baseline measures against the floor
    assert relative_error(np.array([1e-13]), np.zeros(1)) <= 1.0
