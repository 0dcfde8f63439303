import numpy as np
import pytest

from uqpinn import autodiff as ad
from uqpinn.jet import forward_jet
from uqpinn.mlp import DropoutMask, NetworkSpec, forward, init_params, pack, unpack


def fd_derivatives(spec, p, x, h1=1e-6, h2=1e-4):
    d = x.shape[1]
    f0 = forward(spec, p, x)
    d1, d2 = [], []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h1
        d1.append((forward(spec, p, x + e) - forward(spec, p, x - e)) / (2 * h1))
        e[i] = h2
        d2.append((forward(spec, p, x + e) - 2 * f0 + forward(spec, p, x - e)) / h2**2)
    return np.stack(d1, axis=2), np.stack(d2, axis=2)


def test_identity_like_network():
    # u = tanh(eps x) / eps is x up to O(eps^2)
    spec = NetworkSpec(2, 1, 1, 1)
    eps = 1e-4
    layers = [(np.array([[eps], [0.0]]), np.zeros(1)), (np.array([[1.0 / eps]]), np.zeros(1))]
    p = pack(layers)
    jet = forward_jet(spec, p, np.array([[0.0, 0.5]]), (0, 1))
    np.testing.assert_allclose(jet.d1[0, 0], [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(jet.d2[0, 0], [0.0, 0.0], atol=1e-12)


def test_single_tanh_unit():
    spec = NetworkSpec(1, 1, 1, 1)
    p = pack([(np.array([[1.0]]), np.zeros(1)), (np.array([[1.0]]), np.zeros(1))])
    x = np.array([[0.3]])
    jet = forward_jet(spec, p, x, (0,))
    t = np.tanh(0.3)
    assert jet.value[0, 0] == pytest.approx(t, abs=1e-15)
    assert jet.du(0, 0)[0] == pytest.approx(1 - t * t, abs=1e-6)
    assert jet.d2u(0, 0)[0] == pytest.approx(-2 * t * (1 - t * t), abs=1e-4)


def test_constant_network_has_zero_derivatives():
    spec = NetworkSpec(3, 2, 2, 6)
    layers = unpack(init_params(spec, np.random.default_rng(0)), spec)
    layers[-1] = (np.zeros_like(layers[-1][0]), np.array([1.5, -2.0]))
    jet = forward_jet(spec, pack(layers), np.random.default_rng(1).normal(size=(4, 3)), (0, 2))
    assert np.all(jet.d1 == 0.0) and np.all(jet.d2 == 0.0)


def test_shapes_and_missing_second_derivative():
    spec = NetworkSpec(3, 3, 2, 5)
    p = init_params(spec, np.random.default_rng(0))
    jet = forward_jet(spec, p, np.zeros((7, 3)), (0, 1))
    assert jet.value.shape == (7, 3)
    assert jet.d1.shape == (7, 3, 3)
    assert jet.d2.shape == (7, 3, 2)
    with pytest.raises(KeyError):
        jet.d2u(0, 2)
    with pytest.raises(ValueError):
        forward_jet(spec, p, np.zeros((1, 3)), (5,))


@pytest.mark.parametrize("seed", range(5))
def test_jet_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    spec = NetworkSpec(3, 2, int(rng.integers(1, 4)), int(rng.integers(2, 9)),
                       input_lower=(-1.0, 0.0, 0.0), input_upper=(1.0, 2.0, 1.0))
    p = init_params(spec, rng)
    x = rng.uniform([-1, 0, 0], [1, 2, 1], size=(6, 3))
    jet = forward_jet(spec, p, x, (0, 1, 2))
    d1, d2 = fd_derivatives(spec, p, x)
    np.testing.assert_allclose(jet.value, forward(spec, p, x), atol=1e-14)
    np.testing.assert_allclose(jet.d1, d1, atol=1e-6)
    np.testing.assert_allclose(jet.d2, d2, atol=1e-4)


def test_non_contiguous_second_indices():
    spec = NetworkSpec(3, 1, 2, 4)
    p = init_params(spec, np.random.default_rng(3))
    x = np.random.default_rng(4).normal(size=(3, 3))
    full = forward_jet(spec, p, x, (0, 1, 2))
    part = forward_jet(spec, p, x, (2, 0))
    np.testing.assert_allclose(part.d2u(0, 2), full.d2u(0, 2), rtol=1e-14)
    np.testing.assert_allclose(part.d2u(0, 0), full.d2u(0, 0), rtol=1e-14)


def test_taped_jet_gradient_passes_fd_check():
    spec = NetworkSpec(2, 1, 2, 4)
    rng = np.random.default_rng(7)
    p = init_params(spec, rng)
    x = rng.normal(size=(5, 2))

    def f(v):
        jet = forward_jet(spec, v, x, (0,))
        return ad.sum(jet.d2 * jet.d1[:, :, :1]) + ad.sum(jet.value * jet.value)

    assert ad.fd_check(f, p, step=1e-5) < 1e-5


def test_fitted_sine_network_satisfies_uxx_minus_u():
    """A network fit to sin(x) exp(-t) should have u_xx close to -u."""
    from scipy.optimize import minimize

    spec = NetworkSpec(2, 1, 2, 10, input_lower=(0.0, 0.0), input_upper=(np.pi, 1.0))
    rng = np.random.default_rng(0)
    xs = rng.uniform([0, 0], [np.pi, 1], size=(300, 2))
    target = np.sin(xs[:, 0]) * np.exp(-xs[:, 1])

    def obj(v):
        return ad.value_and_grad(lambda t: ad.mean(ad.square(forward(spec, t, xs)[:, 0] - target)), v)

    res = minimize(obj, init_params(spec, rng), jac=True, method="L-BFGS-B",
                   options={"maxiter": 5000, "gtol": 1e-14, "ftol": 1e-16})
    probe = rng.uniform([0.5, 0.1], [np.pi - 0.5, 0.9], size=(50, 2))
    jet = forward_jet(spec, res.x, probe, (0,))
    fit_err = np.sqrt(res.fun)
    assert fit_err < 1e-3
    # second derivatives of a fit are rougher than the fit itself; 1% of the amplitude
    assert np.max(np.abs(jet.d2u(0, 0) + jet.u(0))) < 1e-2


def test_per_row_mask_matches_rowwise_shared_masks():
    spec = NetworkSpec(2, 1, 2, 6, 0.3)
    p = init_params(spec, np.random.default_rng(4))
    x = np.random.default_rng(5).uniform(-1, 1, (5, 2))
    rows = DropoutMask.draw(spec, 11, rows=len(x))
    jet = forward_jet(spec, p, x, (0, 1), rows)
    for i in range(len(x)):
        shared = DropoutMask([k[i] for k in rows.keep], rows.rate)
        ji = forward_jet(spec, p, x[i : i + 1], (0, 1), shared)
        np.testing.assert_allclose(jet.value[i], ji.value[0], rtol=1e-14)
        np.testing.assert_allclose(jet.d1[i], ji.d1[0], rtol=1e-14)
        np.testing.assert_allclose(jet.d2[i], ji.d2[0], rtol=1e-14)
        np.testing.assert_allclose(forward(spec, p, x, rows)[i], ji.value[0], rtol=1e-14)
