"""Energy model behaviour: values, analytic gradients, parameter IO."""

import numpy as np
import pytest

from edbm.bits import all_states
from edbm.models import (
    IsingEnergy,
    MlpEnergy,
    TabularEnergy,
    init_model,
    l1_subgradient,
    load_checkpoint,
    save_checkpoint,
    swish,
    swish_prime,
)
from edbm.rng import RngStream


def _naive_ising_energy(J, x):
    s = 2.0 * np.asarray(x, dtype=np.float64) - 1.0
    return -float(s @ J @ s)


def test_ising_energy_matches_naive():
    rng = np.random.default_rng(3)
    d = 7
    J = rng.normal(size=(d, d))
    model = IsingEnergy(d, J=J)
    X = rng.integers(0, 2, size=(40, d)).astype(np.uint8)
    u = model.energy_batch(X)
    for i in range(40):
        assert u[i] == pytest.approx(_naive_ising_energy(model.J, X[i]), abs=1e-12)


def test_ising_projection_symmetrises_and_zeroes_diagonal():
    d = 5
    J = np.arange(d * d, dtype=np.float64).reshape(d, d)
    model = IsingEnergy(d, J=J)
    assert np.array_equal(model.J, model.J.T)
    assert np.all(np.diag(model.J) == 0.0)
    # set_params re-applies the projection
    model.set_params(np.arange(d * d, dtype=np.float64))
    assert np.array_equal(model.J, model.J.T)
    assert np.all(np.diag(model.J) == 0.0)


def _fd_weighted_sum(model, X, coeffs, h=1e-6):
    theta0 = model.get_params()
    g = np.zeros_like(theta0)
    for k in range(theta0.size):
        theta = theta0.copy()
        theta[k] += h
        model.set_params(theta)
        up = float(model.energy_batch(X) @ coeffs)
        theta[k] -= 2 * h
        model.set_params(theta)
        dn = float(model.energy_batch(X) @ coeffs)
        g[k] = (up - dn) / (2 * h)
    model.set_params(theta0)
    return g


def test_ising_grad_weighted_matches_finite_differences():
    rng = np.random.default_rng(11)
    d = 4
    model = IsingEnergy(d, J=rng.normal(size=(d, d)) * 0.3)
    X = rng.integers(0, 2, size=(9, d)).astype(np.uint8)
    coeffs = rng.normal(size=9)
    g = model.grad_weighted(X, coeffs)
    fd = _fd_weighted_sum(model, X, coeffs)
    # set_params averages theta with its transpose, so dU/dtheta_ij equals the
    # symmetric dU/dJ_ij that grad_weighted reports (diagonal pinned at zero)
    assert np.allclose(g, fd, atol=1e-5)


def test_swish_values_and_derivative():
    assert swish(0.0) == 0.0
    assert swish(20.0) == pytest.approx(20.0, rel=1e-6)
    # derivative by central differences
    for t in (-3.0, -0.7, 0.0, 0.4, 2.5):
        h = 1e-6
        fd = (swish(t + h) - swish(t - h)) / (2 * h)
        assert swish_prime(t) == pytest.approx(fd, abs=1e-8)


def _naive_mlp_energy(model, x):
    a = np.asarray(x, dtype=np.float64)
    if model.input_encoding == "pm1":
        a = 2.0 * a - 1.0
    for i in range(4):
        t = a @ model.weights[i] + model.biases[i]
        a = swish(t) if i < 3 else t
    return float(a[0])


def test_mlp_energy_matches_naive_per_sample():
    rng = RngStream(21)
    model = MlpEnergy(6, rng=rng, hidden=16)
    X = np.random.default_rng(0).integers(0, 2, size=(12, 6)).astype(np.uint8)
    u = model.energy_batch(X)
    for i in range(12):
        assert u[i] == pytest.approx(_naive_mlp_energy(model, X[i]), abs=1e-10)


def test_mlp_grad_weighted_matches_finite_differences():
    rng = RngStream(5)
    model = MlpEnergy(3, rng=rng, hidden=5)
    X = np.array([[0, 1, 1], [1, 0, 0], [1, 1, 1], [0, 0, 0]], dtype=np.uint8)
    coeffs = np.array([0.7, -0.4, 0.1, 1.3])
    g = model.grad_weighted(X, coeffs)
    fd = _fd_weighted_sum(model, X, coeffs, h=1e-5)
    denom = max(1e-12, np.abs(g).max())
    assert np.abs(g - fd).max() / denom < 1e-6


def test_mlp_pm1_encoding_changes_inputs_only():
    rng = RngStream(8)
    m01 = MlpEnergy(4, rng=rng, input_encoding="01", hidden=6)
    mpm = MlpEnergy(4, rng=None, input_encoding="pm1", hidden=6)
    mpm.set_params(m01.get_params())
    x = np.array([[1, 0, 1, 1]], dtype=np.uint8)
    # same weights: pm1 on bits == 01 encoding fed the +-1 floats directly
    assert mpm.energy_batch(x)[0] == pytest.approx(
        m01.energy_batch(2.0 * x - 1.0)[0], abs=1e-12
    )
    with pytest.raises(ValueError):
        MlpEnergy(4, rng=None, input_encoding="spin", hidden=6)


def test_mlp_glorot_initialisation_statistics():
    rng = RngStream(99)
    model = MlpEnergy(32, rng=rng, hidden=256)
    # square hidden layers: limit = sqrt(6 / 512), var = limit^2 / 3 = 1/256
    W = model.weights[1]
    limit = np.sqrt(6.0 / 512.0)
    assert np.abs(W).max() <= limit
    assert W.var() == pytest.approx(1.0 / 256.0, rel=0.05)
    assert np.all(model.biases[0] == 0.0)


def test_mlp_param_round_trip():
    model = MlpEnergy(5, rng=RngStream(2), hidden=7)
    theta = model.get_params()
    model.set_params(theta * 2.0)
    assert np.array_equal(model.get_params(), theta * 2.0)
    with pytest.raises(ValueError):
        model.set_params(theta[:-1])


def test_tabular_energy_and_grad():
    d = 3
    table = np.arange(8, dtype=np.float64)
    model = TabularEnergy(d, table=table)
    X = all_states(d)
    assert np.array_equal(model.energy_batch(X), table)
    coeffs = np.linspace(-1, 1, 8)
    g = model.grad_weighted(X, coeffs)
    assert np.allclose(g, coeffs)
    # repeated states accumulate
    X2 = np.array([[0, 0, 0], [0, 0, 0]], dtype=np.uint8)
    g2 = model.grad_weighted(X2, np.array([2.0, 3.0]))
    assert g2[0] == 5.0 and np.all(g2[1:] == 0.0)


def test_tabular_rejects_large_d_and_bad_table():
    with pytest.raises(ValueError):
        TabularEnergy(21)
    with pytest.raises(ValueError):
        TabularEnergy(3, table=np.zeros(7))


def test_init_model_dispatch():
    assert isinstance(init_model("ising", 4), IsingEnergy)
    assert isinstance(init_model("tabular", 4), TabularEnergy)
    assert isinstance(init_model("mlp", 4, rng=RngStream(0), hidden=8), MlpEnergy)
    with pytest.raises(ValueError):
        init_model("mlp", 4)  # no rng
    with pytest.raises(ValueError):
        init_model("boltzmann", 4)


def test_l1_subgradient_sign_structure():
    d = 3
    J = np.array([[0.0, 1.5, -0.2], [1.5, 0.0, 0.0], [-0.2, 0.0, 0.0]])
    model = IsingEnergy(d, J=J)
    g = l1_subgradient(model, 0.5).reshape(d, d)
    assert g[0, 1] == 0.5 and g[0, 2] == -0.5
    assert g[1, 2] == 0.0  # sign(0) = 0
    assert np.all(np.diag(g) == 0.0)
    with pytest.raises(TypeError):
        l1_subgradient(TabularEnergy(3), 0.1)
    with pytest.raises(ValueError):
        l1_subgradient(model, -1.0)


@pytest.mark.parametrize("kind", ["ising", "tabular", "mlp"])
def test_checkpoint_round_trip_is_exact(tmp_path, kind):
    rng = RngStream(77)
    if kind == "mlp":
        model = MlpEnergy(5, rng=rng, hidden=9)
    elif kind == "ising":
        model = IsingEnergy(5, J=np.random.default_rng(1).normal(size=(5, 5)))
    else:
        model = TabularEnergy(5, table=np.random.default_rng(2).normal(size=32))
    path = tmp_path / "ckpt.json"
    save_checkpoint(model, path, step=123, seed=77, digest="abc123")
    restored, meta = load_checkpoint(path)
    assert type(restored) is type(model)
    # 17 significant digits round-trips float64 exactly
    assert np.array_equal(restored.get_params(), model.get_params())
    assert meta["step"] == 123
    assert meta["seed"] == 77
    assert meta["config_digest"] == "abc123"
    X = np.random.default_rng(3).integers(0, 2, size=(6, 5)).astype(np.uint8)
    assert np.array_equal(restored.energy_batch(X), model.energy_batch(X))
