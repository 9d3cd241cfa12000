import numpy as np
import pytest

from hermflow import identities
from hermflow.errors import ConfigError, DegreeError
from hermflow.forms import HermitianMetric, lambda_op, random_form
from hermflow.geometry import (
    MetricJet,
    balanced_jet,
    curvature,
    flat_jet,
    kahler_jet,
    random_metric_jet,
    random_scalar_jet,
    tau_jet,
    torsion,
)
from hermflow.identities import CATALOGUE, run_suite, summarize

JET_KEYS = [
    "ddbar_eta",
    "lambda_ddbar",
    "lambda2_ddbar",
    "TT_contractions",
    "A_B",
    "A_B_balanced",
    "contracted_bianchi",
    "star_cancellation",
    "ricci_potential",
    "bianchi",
    "traced_bianchi",
    "dagger_T",
    "conformal",
    "star_closed",
    "lambda_pairing",
]
LATTICE_KEYS = {"balanced_tau": {3}, "power_derivatives": {3}, "dagger_adjoint": {2, 3}}


def test_every_catalogue_entry_is_covered():
    assert set(JET_KEYS) | set(LATTICE_KEYS) == set(CATALOGUE)
    assert all(CATALOGUE[k].lattice for k in LATTICE_KEYS)


def _assert_all_pass(reports):
    assert reports
    failed = [(r.id, r.m, r.seed, r.residual_rel) for r in reports if not r.passed]
    assert not failed, failed


@pytest.mark.parametrize("key", JET_KEYS)
def test_algebraic_identities_hold_for_random_data(key):
    reports = run_suite(dims=(2, 3, 4), seeds=3, only=key)
    _assert_all_pass(reports)
    assert {r.m for r in reports} == {2, 3, 4}


@pytest.mark.parametrize("key", sorted(LATTICE_KEYS))
def test_lattice_identities_hold(key):
    reports = run_suite(dims=(2, 3), seeds=1, only=key)
    _assert_all_pass(reports)
    assert {r.m for r in reports} == LATTICE_KEYS[key]
    assert all(not r.flags for r in reports)


def test_power_derivatives_in_dimension_four():
    field = identities.random_lattice_field(4, np.random.default_rng(0))
    _assert_all_pass(identities.check_power_derivatives(field))


def test_power_derivatives_refuse_dimension_two():
    field = identities.random_lattice_field(2, np.random.default_rng(0))
    with pytest.raises(DegreeError):
        identities.check_power_derivatives(field)


def test_unbalanced_field_is_flagged():
    field = identities.random_lattice_field(3, np.random.default_rng(5))
    report = identities.check_balanced_tau(field, hypothesis_tol=1e-6)
    assert report.flags == ["hypothesis violated"]


def test_unknown_identity_key():
    with pytest.raises(ConfigError, match="unknown identity"):
        run_suite(dims=(2,), seeds=1, only="no_such_identity")


JET_CHECKS = [
    identities.check_ddbar_eta,
    identities.check_lambda_ddbar,
    identities.check_lambda2_ddbar,
    identities.check_A_B,
    identities.check_contracted_bianchi,
    identities.check_ricci_potential,
    identities.check_bianchi,
    identities.check_traced_bianchi,
    identities.check_dagger_T,
]


@pytest.mark.parametrize("check", JET_CHECKS)
def test_flat_metric_satisfies_identities_trivially(check):
    reports = identities._as_list(check(flat_jet(3, 2)))
    _assert_all_pass(reports)
    assert all(r.residual_abs <= 1e-15 for r in reports)


@pytest.mark.parametrize("check", JET_CHECKS)
def test_kahler_metrics_satisfy_identities(check):
    _assert_all_pass(identities._as_list(check(kahler_jet(3, 2, np.random.default_rng(7)))))


@pytest.mark.parametrize("factor", [0.5, 2.0])
@pytest.mark.parametrize("check", JET_CHECKS)
def test_identities_survive_constant_rescaling(check, factor):
    j = random_metric_jet(3, 2, np.random.default_rng(8))
    _assert_all_pass(identities._as_list(check(MetricJet(j.jet * factor))))


def test_conformal_rules():
    rng = np.random.default_rng(9)
    reports = identities.check_conformal(random_metric_jet(2, 2, rng), random_scalar_jet(2, 2, rng))
    assert [r.id for r in reports] == ["conformal.torsion", "conformal.curvature"]
    _assert_all_pass(reports)


def test_lambda_pairing_rejects_unequal_bidegree():
    rng = np.random.default_rng(10)
    g = HermitianMetric(np.eye(3))
    with pytest.raises(DegreeError):
        identities.check_lambda_pairing(g, random_form(3, 2, 1, rng))


def test_report_flags_failure_and_summary_keeps_worst():
    bad = identities.make_report("x", 2, np.array([1.0]), np.array([1.1]), tol=1e-3)
    good = identities.make_report("x", 2, np.array([1.0]), np.array([1.0]))
    assert not bad.passed and good.passed
    assert bad.residual_rel == pytest.approx(0.1 / 1.1)
    assert summarize([good, bad]) == {"x": bad.residual_rel}


def test_report_serializes():
    report = identities.make_report("y", 3, np.zeros(2), np.zeros(2), seed=4)
    data = report.model_dump()
    assert data["passed"] and data["seed"] == 4 and data["residual_rel"] == 0.0




@pytest.mark.parametrize("m,seed", [(2, 0), (2, 1), (3, 2)])
def test_adjointness_defect_converges_at_fourth_order(m, seed):
    assert 3.5 <= identities.adjointness_order(m, seed=seed, sizes=(16, 32)) <= 4.5


def test_adjointness_defect_is_discretization_not_roundoff():
    inputs = identities._adjoint_inputs(2, 0, 16)
    lhs, rhs, scale = identities._adjoint_pairings(inputs)
    assert 1e-8 * scale < abs(lhs - rhs) < identities.lattice_tolerance(inputs.lattice) * scale


def test_lattice_entries_use_a_fixed_seed_subset():
    reports = run_suite(dims=(2,), seeds=10, only="dagger_adjoint")
    assert sorted(r.seed for r in reports) == list(range(identities.LATTICE_SEEDS))
    jet_reports = run_suite(dims=(2,), seeds=10, only="ricci_potential")
    assert len(jet_reports) == 10


def test_seeded_jets_are_shared_between_entries():
    assert identities.seeded_jet(3, 4) is identities.seeded_jet(3, 4)
    assert identities.seeded_jet(3, 4, "balanced") is not identities.seeded_jet(3, 4)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_balanced_jet_has_tau_from_log_det(m):
    j = balanced_jet(m, 2, np.random.default_rng(m))
    tau = tau_jet(j).value
    assert np.max(np.abs(tau)) > 1e-3
    assert np.allclose(tau, -j.log_det.holo().value, atol=1e-12)
    cp = curvature(j)
    assert np.max(np.abs(cp.Rprime)) <= 1e-10 * np.max(np.abs(cp.Ric))
    assert np.max(np.abs(cp.Rdprime)) <= 1e-10 * np.max(np.abs(cp.Ric))


def test_A_B_collapse_needs_balanced_metric():
    reports = identities.check_A_B_balanced(random_metric_jet(3, 2, np.random.default_rng(11)))
    assert not any(r.passed for r in reports)
    _assert_all_pass(identities.check_A_B_balanced(balanced_jet(3, 2, np.random.default_rng(11))))


def test_lambda_of_ddbar_eta_vanishes_on_kahler_jet():
    j = kahler_jet(3, 2, np.random.default_rng(12))
    lam = lambda_op(j.metric, identities.ddbar_eta(j)).coeff
    assert np.max(np.abs(lam)) <= 1e-13
    report = identities.check_lambda_ddbar(j)
    assert report.passed and report.scale > 1e-3


def test_lambda_of_ddbar_eta_on_balanced_jet_drops_mixed_traces():
    j = balanced_jet(3, 2, np.random.default_rng(13))
    cp = curvature(j)
    tp = torsion(j)
    lam = lambda_op(j.metric, identities.ddbar_eta(j)).to_components("bh")
    assert np.allclose(lam, -1j * (cp.Rtilde + cp.Ric - tp.TT), atol=1e-12)
    assert abs(identities.mixed_scalar(j)) <= 1e-12
