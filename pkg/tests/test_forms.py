import math

import numpy as np
import pytest

from hermflow.errors import DegreeError
from hermflow.forms import (
    Form,
    HermitianMetric,
    hodge_star_brute,
    hodge_star_closed,
    inner,
    inner_norm,
    lambda_op,
    power,
    random_form,
    star_shape_input,
    sup_norm,
    volume_form,
    wedge,
)
from hermflow.geometry import random_metric


def test_wedge_of_one_forms_anticommutes():
    a = Form.basis(3, [0], [])
    b = Form.basis(3, [1], [])
    assert np.allclose(wedge(a, b).coeff, -wedge(b, a).coeff)
    assert sup_norm(wedge(a, a)) == 0


def test_wedge_beyond_top_degree_is_zero_form():
    eta = HermitianMetric(np.eye(2)).kahler_form()
    out = wedge(power(eta, 2), eta)
    assert (out.p, out.q) == (3, 3)
    assert sup_norm(out) == 0


def test_written_components_round_trip_for_antisymmetric_table():
    rng = np.random.default_rng(0)
    t = rng.normal(size=(3, 3, 3)) + 1j * rng.normal(size=(3, 3, 3))
    t = t - np.swapaxes(t, 1, 2)
    form = Form.from_components(3, "bhh", t)
    assert (form.p, form.q) == (2, 1)
    assert np.allclose(form.to_components("bhh"), t)


def test_kahler_form_is_real_and_traces_to_dimension():
    g = random_metric(4, np.random.default_rng(1))
    eta = g.kahler_form()
    assert eta.is_real()
    assert np.isclose(lambda_op(g, eta).coeff, 4)


def test_top_power_is_determinant_times_flat_volume():
    g = random_metric(3, np.random.default_rng(2))
    flat = volume_form(HermitianMetric(np.eye(3))).top()
    ratio = volume_form(g).top() / flat
    assert np.isclose(ratio, g.det)


def test_volume_form_has_unit_norm():
    g = random_metric(3, np.random.default_rng(3))
    vol = volume_form(g)
    assert np.isclose(inner(g, vol, vol), 1.0)


def test_inner_norm_is_factorial_multiple_of_inner():
    g = random_metric(3, np.random.default_rng(4))
    phi = random_form(3, 2, 1, np.random.default_rng(5))
    assert np.isclose(inner_norm(g, phi), 2 * inner(g, phi, phi).real)


def test_lambda_beyond_degree_raises():
    g = HermitianMetric(np.eye(3))
    with pytest.raises(DegreeError, match="contraction exceeds degree"):
        lambda_op(g, random_form(3, 1, 1, np.random.default_rng(6)), 2)


def test_adding_forms_of_different_bidegree_raises():
    with pytest.raises(DegreeError):
        Form.zeros(2, 1, 0) + Form.zeros(2, 0, 1)


def test_metric_must_be_positive():
    with pytest.raises(ValueError):
        HermitianMetric(np.diag([1.0, -1.0]))


def test_random_real_form_is_real():
    phi = random_form(3, 2, 2, np.random.default_rng(7), real=True)
    assert phi.is_real()


def test_star_of_kahler_form_in_dimension_two():
    g = random_metric(2, np.random.default_rng(8))
    eta = g.kahler_form()
    # ⋆η = (Λη)η − η = η for m = 2
    assert np.allclose(hodge_star_brute(g, eta).coeff, eta.coeff)


@pytest.mark.parametrize("shape", ["alpha", "Phi", "tau", "T"])
def test_closed_star_matches_basis_star(shape):
    rng = np.random.default_rng(9)
    p, q, min_m = {"alpha": (1, 1, 2), "Phi": (2, 2, 3), "tau": (1, 0, 2), "T": (2, 1, 3)}[shape]
    m = max(min_m, 3)
    g = random_metric(m, rng)
    payload = random_form(m, p, q, rng)
    closed = hodge_star_closed(g, shape, payload)
    brute = hodge_star_brute(g, star_shape_input(g, shape, payload))
    assert np.allclose(closed.coeff, brute.coeff, atol=1e-11)


def test_closed_star_of_eta_power():
    g = random_metric(3, np.random.default_rng(10))
    eta = g.kahler_form()
    # ⋆(η∧η) = (m−2)!(−η + 3η) = 2η
    assert np.allclose(hodge_star_closed(g, "alpha", eta).coeff, 2 * math.factorial(1) * eta.coeff)


def test_star_shape_requires_dimension():
    g = HermitianMetric(np.eye(2))
    with pytest.raises(DegreeError):
        hodge_star_closed(g, "Phi", random_form(2, 2, 2, np.random.default_rng(11)))


def test_double_contraction_of_eta_squared_on_flat_metric():
    g = HermitianMetric(np.eye(3))
    eta_sq = power(g.kahler_form(), 2)
    assert np.allclose(lambda_op(g, eta_sq).coeff, 4 * g.kahler_form().coeff)
    assert np.isclose(lambda_op(g, eta_sq, 2).coeff, 12)
