import math

import numpy as np
import pytest

import karl


def test_basis_and_names():
    b = karl.MonomialBasis(2, 2)
    assert b.dim == 6
    np.testing.assert_array_equal(b(np.array([2.0, 3.0])), [1, 2, 3, 4, 6, 9])
    assert b.terms[0] == "1"


def test_linear_tensor_is_exact():
    env = karl.Environment("linear_system")
    x, u, _, xn = env.collect(5, 100, karl.Rng(0))
    t = karl.fit_tensor(x, u, xn, phi_order=1, psi_order=1, ridge=0.0)
    phi = karl.MonomialBasis(2, 1)
    for i in range(20):
        assert np.max(np.abs(t.predict_phi(x[i], u[i]) - phi(xn[i]))) < 1e-8


def test_softmin_bounds():
    s = np.array([3.0, 1.0, 2.0])
    b = karl.soft_backup(s, 1.0)
    assert s.min() <= b <= s.mean()
    p = karl.softmax_policy(s, 1.0)
    assert math.isclose(p.sum(), 1.0)


def test_scalar_lqr_and_errors():
    env = karl.Environment("double_well")
    K, P = karl.solve_lqr(env)
    assert K.shape == (1, 2)
    assert np.allclose(P, P.T)
    with pytest.raises(karl.ConfigError):
        karl.Environment("pendulum")


def test_skvi_round():
    env = karl.Environment("fluid_flow")
    x, u, _, xn = env.collect(10, 100, karl.Rng(1))
    t = karl.fit_tensor(x, u, xn)
    w, abe = karl.skvi(env, t, x, actions=11, epochs=3, batch=256, rng=karl.Rng(2))
    assert w.shape == (10,)
    assert len(abe) >= 1
    assert karl.interpret(w, t.phi).startswith("V(x) =")
