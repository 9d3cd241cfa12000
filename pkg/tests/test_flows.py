from pathlib import Path

import numpy as np
import pytest

from hermflow import flows
from hermflow.config import FlowConfig, load_flow_config
from hermflow.errors import DegenerateRescalingError
from hermflow.geometry import HolVolForm, MetricJet, curvature, torsion
from hermflow.lattice import MetricField, TorusLattice, max_norm, random_trig_field

PRESETS = Path(__file__).resolve().parent.parent / "presets"


def _config(**kwargs) -> FlowConfig:
    return FlowConfig.model_validate(kwargs)


def _rate_scale(result, values) -> float:
    spacing = result.snapshot_spacing
    return max(max_norm((values[i + 1] - values[i - 1]) / (2 * spacing)) for i in range(1, len(values) - 1))


def test_flat_metric_is_stationary():
    result = flows.run(_config(m=2, n=10, steps=5))
    assert result.completed
    assert len(result.rows) == 6
    assert np.array_equal(result.final.g, flows.flat_field(result.final.lattice).g)
    assert all(r.maxT2 == 0.0 and r.maxRic == 0.0 for r in result.rows)
    assert result.final.time == pytest.approx(5 * result.dt)


def test_stride_thins_rows():
    result = flows.run(_config(m=2, n=10, steps=6, stride=3))
    assert [r.t for r in result.rows] == pytest.approx([0.0, 3 * result.dt, 6 * result.dt])


def test_unified_flow_reduces_to_kahler_ricci_on_kahler_data():
    lat = TorusLattice.from_reduction(2, 16, "x1,y1")
    field = flows.kahler_potential_field(lat, np.random.default_rng(0), amplitude=0.02)
    eta = flows.rhs_eta(field)
    kr = flows.rhs_kr(field)
    assert np.max(np.abs(eta - kr)) <= 1e-9 * max(np.max(np.abs(kr)), 1e-12)


def test_lattice_vector_field_matches_exact_jets():
    lat = TorusLattice.from_reduction(2, 32, "x1,x2")
    trig = random_trig_field(2, np.random.default_rng(1), lat.active, (2, 2), n_modes=2, amplitude=0.05, hermitian=True, offset=np.eye(2))
    field = MetricField(lat, trig.sample(lat))
    exact = MetricJet(trig.jet(lat, 2))
    expected = -(curvature(exact).Rtilde + 0.5 * torsion(exact).TcT)
    got = flows.rhs_eta(field)
    assert np.max(np.abs(got - expected)) <= 1e-3 * np.max(np.abs(expected))


def test_kappa_scales_vector_field():
    lat = TorusLattice.from_reduction(3, 16, "x1,x2")
    field = flows.perturbation_field(lat, np.random.default_rng(2))
    assert np.allclose(flows.rhs_eta(field, 0.5), 0.5 * flows.rhs_eta(field))
    assert _config(m=3, time_normalization="one_over_m_minus_1").kappa == pytest.approx(0.5)


def test_explicit_step_above_cfl_bound_halts():
    result = flows.run(_config(m=2, n=10, steps=3, dt=1.0))
    assert result.halt_reason == flows.HALT_CFL
    assert not result.completed
    assert len(result.rows) == 1


def test_positivity_floor_halts():
    result = flows.run(_config(m=2, n=10, steps=3, positivity_floor=2.0))
    assert result.halt_reason == flows.HALT_POSITIVITY


def test_auto_step_is_half_the_cfl_bound():
    config = _config(m=2, n=16)
    field, _ = flows.initial_field(config)
    assert flows.resolve_dt(config, field) == pytest.approx(0.5 * config.cfl / 256)


def test_euler_and_rk4_agree_for_short_runs():
    base = dict(m=2, n=16, steps=2, initial={"kind": "perturbation", "amplitude": 0.01})
    rk4 = flows.run(_config(**base))
    euler = flows.run(_config(scheme="euler", **base))
    assert np.max(np.abs(rk4.final.g - euler.final.g)) < 1e-5


def _row(value: float, t: float) -> flows.DiagnosticsRow:
    fields = {name: value for name in flows.DiagnosticsRow.model_fields}
    fields["t"] = t
    return flows.DiagnosticsRow(**fields)


def test_plateau_detection():
    settled = [_row(1.0 / (k + 1), k) for k in range(5)] + [_row(0.0, 5 + k) for k in range(10)]
    assert flows.plateau_reached(settled, window=5) == 5
    assert flows.stationarity_holds(settled, window=5) is True
    moving = [_row(float(k), k) for k in range(15)]
    assert flows.plateau_reached(moving, window=5) is None
    assert flows.stationarity_holds(moving, window=5) is None
    stuck = [_row(0.5, k) for k in range(15)]
    assert flows.stationarity_holds(stuck, window=5) is False


def _preset(name: str, **update) -> FlowConfig:
    return load_flow_config(PRESETS / f"{name}.cfg").model_copy(update=update)


def test_lattice_ricci_matches_exact_jets():
    lat = TorusLattice.from_reduction(2, 32, "x1,x2")
    trig = random_trig_field(2, np.random.default_rng(3), lat.active, (2, 2), n_modes=2, amplitude=0.05, hermitian=True, offset=np.eye(2))
    exact = curvature(MetricJet(trig.jet(lat, 2))).Ric
    got = flows.ricci_lattice(MetricField(lat, trig.sample(lat)))
    assert np.max(np.abs(got - exact)) <= 1e-3 * np.max(np.abs(exact))


def test_unified_vector_field_swaps_in_lattice_ricci():
    lat = TorusLattice.from_reduction(2, 16, "x1,x2")
    field = flows.perturbation_field(lat, np.random.default_rng(4), amplitude=0.05)
    j = field.jet(2)
    cp, tp = curvature(j), torsion(j)
    expected = -(flows.ricci_lattice(field) + cp.Rtilde - cp.Ric + 0.5 * tp.TcT)
    expected = 0.5 * (expected + np.conj(np.swapaxes(expected, -1, -2)))
    assert np.max(np.abs(flows.rhs_eta(field) - expected)) <= 1e-12


@pytest.fixture(scope="module")
def kahler_runs():
    config = _preset("kahler_preservation_m2")
    return flows.run(config, keep_snapshots=True), flows.run(config.model_copy(update={"which": "kahler_ricci"}), keep_snapshots=True)


def test_kahler_condition_is_preserved(kahler_runs):
    eta_run, kr_run = kahler_runs
    assert eta_run.completed and kr_run.completed
    assert len(eta_run.rows) == 21
    residual = flows.kahler_preservation(eta_run)
    assert residual[0] < 1e-13
    assert residual.max() <= 5 * residual[0] + flows.ROUNDOFF_FLOOR
    assert flows.kahler_condition_kept(eta_run)
    assert max(r.maxT2 for r in eta_run.rows) < 1e-20


def test_unified_and_kahler_ricci_runs_agree_on_kahler_data(kahler_runs):
    eta_run, kr_run = kahler_runs
    gap = max(np.max(np.abs(a.g - b.g)) for a, b in zip(eta_run.snapshots, kr_run.snapshots))
    assert gap <= 1e-6
    assert np.max(np.abs(eta_run.final.g - eta_run.snapshots[0].g)) > 1e-4


@pytest.fixture(scope="module")
def settling_run():
    return flows.run(_preset("perturbed_flat_m2"))


def test_perturbed_flat_metric_settles_to_flat_kahler(settling_run):
    config = _preset("perturbed_flat_m2")
    rows = settling_run.rows
    assert settling_run.completed and len(rows) == 501
    assert rows[0].maxRic > 1e-3 and rows[0].maxT2 > 1e-6
    start = flows.plateau_reached(rows, config.plateau_window, config.plateau_tol)
    assert start is not None
    assert flows.stationarity_holds(rows, config.plateau_window, config.plateau_tol, config.tolerances.flat) is True
    assert rows[-1].maxRic <= 1e-8 and rows[-1].maxT2 <= 1e-8


def test_balanced_residual_has_no_secular_growth():
    result = flows.run(_preset("balanced_preservation_m3"))
    series = flows.balanced_preservation(result)
    assert result.completed and len(series) == 11
    assert series[0] < 1e-10
    assert series[-1] <= series[0] + 1e-6
    assert flows.balanced_condition_kept(result)


@pytest.fixture(scope="module")
def anomaly_residuals():
    out = []
    for n in (16, 32):
        config = _preset("anomaly_equiv_m3", n=n, steps=4)
        result = flows.run(config)
        out.append(flows.anomaly_equivalence_residual(result, HolVolForm(config.omega_c)).max())
    return out


def test_anomaly_equivalence_baseline(anomaly_residuals):
    coarse, _ = anomaly_residuals
    assert coarse <= 1e-5


def test_anomaly_equivalence_refines(anomaly_residuals):
    coarse, fine = anomaly_residuals
    assert coarse / fine >= 10


PERTURBED = {"m": 2, "steps": 4, "initial": {"kind": "perturbation", "amplitude": 0.05}, "monitors": "torsion_flow,tsq"}


@pytest.fixture(scope="module")
def perturbed_run():
    return flows.run(_config(n=32, **PERTURBED))


@pytest.fixture(scope="module")
def perturbed_kr_run():
    config = _config(m=2, n=32, steps=4, which="kahler_ricci", initial={"kind": "perturbation", "amplitude": 0.05}, monitors="tsq")
    return flows.run(config)


def test_torsion_flow_monitor(perturbed_run):
    assert perturbed_run.completed and len(perturbed_run.snapshots) == 5
    forms = [flows.torsion_form(f).coeff for f in perturbed_run.snapshots]
    residual = flows.torsion_flow_residual(perturbed_run)
    assert residual.shape == (3,)
    assert residual.max() < 1e-2 * _rate_scale(perturbed_run, forms)
    assert flows.torsion_rate_scale(perturbed_run) == pytest.approx(_rate_scale(perturbed_run, forms))


def test_torsion_flow_residual_converges_at_fourth_order(perturbed_run):
    coarse = flows.run(_config(n=16, **PERTURBED))
    ratio = flows.torsion_flow_residual(coarse).max() / flows.torsion_flow_residual(perturbed_run).max()
    assert ratio >= 10


def test_kahler_ricci_flow_leaves_torsion_fixed(perturbed_kr_run):
    forms = [flows.torsion_form(f).coeff for f in perturbed_kr_run.snapshots]
    assert max(np.max(np.abs(f - forms[0])) for f in forms) < 1e-12


def test_torsion_norm_monitor(perturbed_run):
    monitor = flows.tsq_evolution_residual(perturbed_run)
    tsq = [torsion(f.jet(1)).normTsq for f in perturbed_run.snapshots]
    assert monitor.residuals.max() < 1e-3 * _rate_scale(perturbed_run, tsq)
    assert np.isfinite(monitor.fitted_C)
    assert monitor.gradient_part.shape == (3,) and np.all(monitor.gradient_part > 0)


def test_torsion_norm_monitor_separates_the_flows(perturbed_run, perturbed_kr_run):
    eta = flows.tsq_evolution_residual(perturbed_run).residuals.max()
    kr = flows.tsq_evolution_residual(perturbed_kr_run).residuals.max()
    assert kr > 10 * eta


def test_tau_norm_monitor(perturbed_run, perturbed_kr_run):
    tausq = [torsion(f.jet(1)).normTauSq for f in perturbed_run.snapshots]
    eta = flows.tau_sq_evolution_residual(perturbed_run)
    assert eta.max() < 1e-3 * _rate_scale(perturbed_run, tausq)
    assert flows.tau_sq_evolution_residual(perturbed_kr_run).max() > 10 * eta.max()


def test_monitors_need_three_snapshots():
    result = flows.run(_config(m=2, n=10, steps=1), keep_snapshots=True)
    with pytest.raises(ValueError):
        flows.torsion_flow_residual(result)


@pytest.fixture(scope="module")
def balanced_run():
    config = _config(
        m=3,
        n=32,
        steps=4,
        time_normalization="one_over_m_minus_1",
        initial={"kind": "balanced", "eps": 0.002},
        monitors="anomaly,singularity,tau",
    )
    return flows.run(config)


def test_balanced_run_diagnostics(balanced_run):
    first = balanced_run.rows[0]
    assert first.balancedRes < 1e-10
    assert np.isfinite(first.singOmega)
    assert all(np.isfinite(flows.tau_flow_residual(balanced_run)))


def test_singularity_dictionary(balanced_run):
    omega = HolVolForm()
    for field in balanced_run.snapshots[:2]:
        assert flows.singularity_dictionary_residual(field, omega) < 1e-10


def test_dimension_two_has_no_omega_side():
    lat = TorusLattice.from_reduction(2, 10, "x1")
    field = flows.flat_field(lat)
    assert np.isnan(flows.diagnostics(field, HolVolForm()).singOmega)
    with pytest.raises(DegenerateRescalingError):
        flows.singularity_dictionary_residual(field, HolVolForm())


def test_kahler_ricci_rhs_is_heat_operator_in_dimension_one():
    lat = TorusLattice.from_reduction(1, 32, "x1")
    x = lat.coordinates()[0]
    amplitude = 1e-6
    field = MetricField(lat, (1.0 + amplitude * np.cos(2 * np.pi * x))[..., None, None])
    expected = -np.pi ** 2 * amplitude * np.cos(2 * np.pi * x)
    assert np.max(np.abs(flows.rhs_kr(field)[..., 0, 0] - expected)) <= 1e-3 * amplitude * np.pi ** 2


def test_dimension_one_kahler_ricci_run():
    result = flows.run(_config(m=1, n=10, reduction=None, which="kahler_ricci", steps=3, initial={"kind": "perturbation"}))
    assert result.completed
    assert all(np.isnan(r.singOmega) for r in result.rows)
