import numpy as np
import pytest

from hermflow import jets
from hermflow.errors import JetOrderError
from hermflow.geometry import random_metric_jet, random_scalar_jet
from hermflow.lattice import TorusLattice, field_jet, random_trig_field


def test_inverse_jet_is_two_sided():
    rng = np.random.default_rng(0)
    g = random_metric_jet(3, 3, rng).jet
    prod = jets.jeinsum("ij,jk->ik", g, jets.inverse(g))
    assert np.allclose(prod.value, np.eye(3), atol=1e-13)
    for term in prod.terms[1:]:
        assert np.allclose(term, 0, atol=1e-12)


def test_symmetric_random_is_exactly_symmetric():
    rng = np.random.default_rng(1)
    arr = jets.symmetric_random(rng, 4, 3, (2,))
    assert np.array_equal(arr, np.transpose(arr, (1, 0, 2, 3)))
    assert np.array_equal(arr, np.transpose(arr, (2, 1, 0, 3)))


def test_conj_twice_is_identity():
    rng = np.random.default_rng(2)
    g = random_metric_jet(2, 2, rng).jet
    back = g.conj().conj()
    for a, b in zip(g.terms, back.terms):
        assert np.array_equal(a, b)


def test_exp_of_log_recovers_positive_scalar():
    rng = np.random.default_rng(3)
    u = random_scalar_jet(2, 3, rng).add_value(2.0)
    back = jets.exp(jets.log(u))
    for a, b in zip(u.terms, back.terms):
        assert np.allclose(a, b, atol=1e-12)


def test_log_det_gradient_is_trace_of_inverse_times_gradient():
    rng = np.random.default_rng(4)
    g = random_metric_jet(3, 1, rng).jet
    ld = jets.log_det(g)
    h = np.linalg.inv(g.value)
    expected = np.einsum("ji,aij->a", h, g.terms[1])
    assert np.allclose(ld.terms[1], expected)
    assert np.isclose(ld.value.real, np.log(np.linalg.det(g.value).real))


def test_truncate_beyond_order_raises():
    g = random_metric_jet(2, 1, np.random.default_rng(5)).jet
    with pytest.raises(JetOrderError):
        g.truncate(2)


def test_grad_of_order_zero_raises():
    g = random_metric_jet(2, 0, np.random.default_rng(6)).jet
    with pytest.raises(JetOrderError):
        g.grad()


def test_leibniz_product_matches_lattice_derivative_of_product():
    rng = np.random.default_rng(7)
    lat = TorusLattice.from_reduction(2, 32, "x1,y1")
    f = random_trig_field(2, rng, lat.active, (), n_modes=2, amplitude=1.0)
    g = random_trig_field(2, rng, lat.active, (), n_modes=2, amplitude=1.0)
    product = jets.jeinsum(",->", f.jet(lat, 1), g.jet(lat, 1))
    numeric = field_jet(lat, f.sample(lat) * g.sample(lat), 0, 1)
    scale = np.max(np.abs(product.terms[1]))
    assert np.max(np.abs(product.terms[1] - numeric.terms[1])) <= 1e-2 * scale
