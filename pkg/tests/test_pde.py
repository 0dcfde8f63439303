import numpy as np
import pytest

from uqpinn import autodiff as ad
from uqpinn.jet import Jet, forward_jet
from uqpinn.mlp import NetworkSpec, init_params
from uqpinn.pde import (
    BURGERS_VISCOSITY,
    PdeProblem,
    burgers_problem,
    burgers_residual,
    navier_stokes_problem,
    navier_stokes_residual,
    residual_vector,
    residuals,
)
from reference import taylor_green_jet


def burgers_jet(u, ux, ut, uxx):
    n = len(u)
    value = np.asarray(u, float).reshape(n, 1)
    d1 = np.stack([ux, ut], axis=1).reshape(n, 1, 2)
    return Jet(value, d1, np.asarray(uxx, float).reshape(n, 1, 1), (0,))


def test_zero_and_constant_burgers():
    z = np.zeros(4)
    assert np.all(burgers_residual(burgers_jet(z, z, z, z)) == 0)
    assert np.all(burgers_residual(burgers_jet(np.ones(4), z, z, z)) == 0)


def test_burgers_residual_formula():
    r = burgers_residual(burgers_jet([2.0], [3.0], [5.0], [7.0]))
    assert r[0] == pytest.approx(5.0 + 2.0 * 3.0 - BURGERS_VISCOSITY * 7.0)


def test_burgers_needs_second_derivative():
    jet = Jet(np.zeros((1, 1)), np.zeros((1, 1, 2)), np.zeros((1, 1, 0)), ())
    with pytest.raises(ValueError):
        burgers_residual(jet)


def test_ns_zero_velocity_constant_pressure():
    n = 5
    value = np.zeros((n, 3))
    value[:, 2] = 4.0
    jet = Jet(value, np.zeros((n, 3, 3)), np.zeros((n, 3, 2)), (0, 1))
    for r in navier_stokes_residual(jet, (1.0, 0.01)):
        assert np.all(r == 0)


@pytest.mark.parametrize("drift", [(0.0, 0.0), (1.0, 0.5)])
def test_taylor_green_analytic_residual(drift):
    nu = 0.01
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0, 2 * np.pi, (2, 200))
    t = rng.uniform(0, 2, 200)
    jet = Jet(*taylor_green_jet(x, y, t, nu, drift), (0, 1))
    r = np.stack(navier_stokes_residual(jet, (1.0, nu)))
    assert np.max(np.abs(r)) <= 1e-12
    r1, r2, r3 = navier_stokes_residual(jet, (1.0, 2 * nu))
    assert np.max(np.abs(r1)) > 1e-4 and np.max(np.abs(r2)) > 1e-4
    assert np.max(np.abs(r3)) <= 1e-12


def test_residual_affine_in_lambda():
    rng = np.random.default_rng(1)
    jet = Jet(rng.normal(size=(6, 3)), rng.normal(size=(6, 3, 3)), rng.normal(size=(6, 3, 2)), (0, 1))
    for fixed, idx in (((1.0, None), 1), ((None, 0.01), 0)):
        vals = []
        for lam_k in (0.1, 0.7, 1.9):
            lam = [fixed[0], fixed[1]]
            lam[idx] = lam_k
            vals.append(np.stack(navier_stokes_residual(jet, lam)))
        # collinear: second difference over equally weighted points vanishes
        slope1 = (vals[1] - vals[0]) / 0.6
        slope2 = (vals[2] - vals[1]) / 1.2
        np.testing.assert_allclose(slope1, slope2, atol=1e-12)


def test_continuity_independent_of_lambda_and_pressure():
    rng = np.random.default_rng(2)
    value, d1, d2 = rng.normal(size=(4, 3)), rng.normal(size=(4, 3, 3)), rng.normal(size=(4, 3, 2))
    r3a = navier_stokes_residual(Jet(value, d1, d2, (0, 1)), (1.0, 0.01))[2]
    value[:, 2] += 10
    d1[:, 2] += 3
    r3b = navier_stokes_residual(Jet(value, d1, d2, (0, 1)), (5.0, 2.0))[2]
    np.testing.assert_array_equal(r3a, r3b)


@pytest.mark.parametrize("kind", ["burgers", "navier_stokes"])
def test_taped_residual_gradient_fd(kind):
    problem = burgers_problem() if kind == "burgers" else navier_stokes_problem()
    spec = NetworkSpec(problem.input_dim, problem.output_dim, 2, 5,
                       input_lower=problem.lower, input_upper=problem.upper)
    rng = np.random.default_rng(3)
    lo, hi = np.asarray(problem.lower), np.asarray(problem.upper)
    x = lo + (hi - lo) * rng.random((8, problem.input_dim))
    p = np.concatenate([init_params(spec, rng), [0.8, -3.0]])

    def f(v):
        net = v[: spec.n_params]
        lam = (v[spec.n_params], ad.softplus(v[spec.n_params + 1]))
        jet = forward_jet(spec, net, x, problem.second_order_indices)
        return sum(ad.sum(r * r) for r in residuals(problem, jet, lam))

    assert ad.fd_check(f, p, step=1e-6) < 1e-5


def test_problem_validation_and_properties():
    with pytest.raises(ValueError):
        PdeProblem("heat", (0.0,), (1.0,))
    with pytest.raises(ValueError):
        PdeProblem("burgers", (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    b, ns = burgers_problem(), navier_stokes_problem()
    assert (b.input_dim, b.output_dim, b.n_residuals) == (2, 1, 1)
    assert (ns.input_dim, ns.output_dim, ns.n_residuals) == (3, 3, 3)
    assert ns.lam == (1.0, 0.01)
    assert ns.with_lambda((2, 3)).lam == (2.0, 3.0)


def test_residual_vector_shape():
    problem = navier_stokes_problem()
    rng = np.random.default_rng(0)
    jet = Jet(rng.normal(size=(4, 3)), rng.normal(size=(4, 3, 3)), rng.normal(size=(4, 3, 2)), (0, 1))
    assert residual_vector(problem, jet).shape == (4, 3)
