"""Time integration of the metric flows on lattice fields, with diagnostics and residual monitors.

The unified flow is ∂_t g_{k̄j} = −κ (R̃_{k̄j} + ½ (T∘T̄)_{k̄j}); the Kähler-Ricci flow is
∂_t g_{k̄j} = −κ R_{k̄j}.  κ is 1 or 1/(m−1) depending on the time normalization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from pydantic import BaseModel

from hermflow import balanced, io
from hermflow.config import FlowConfig
from hermflow.errors import DegenerateRescalingError, PositivityError
from hermflow.forms import Form, power
from hermflow.geometry import (
    HolVolForm,
    MetricJet,
    chern_laplacian,
    conformal_change,
    curvature,
    curvature_lowered_jet,
    del_dagger,
    grad_torsion_norm,
    nabla_holo,
    omega_norm,
    omega_norm_jet,
    rescale_to_omega,
    tau_jet,
    tensor_norm_sq,
    torsion,
    torsion_jet,
    torsion_upper_jet,
)
from hermflow.jets import log as jet_log
from hermflow.lattice import (
    MetricField,
    TorusLattice,
    ddbar,
    del_,
    exterior_d,
    field_jet,
    max_norm,
    min_eigenvalue,
    mixed_sup_norm,
    random_trig_field,
)

logger = logging.getLogger(__name__)

HALT_COMPLETED = "completed"
HALT_POSITIVITY = "positivity lost"
HALT_CFL = "CFL violated"
HALT_NAN = "NaN"

ROUNDOFF_FLOOR = 1e-14


class DiagnosticsRow(BaseModel):
    t: float
    maxT2: float
    maxTau2: float
    maxRm2: float
    maxRic: float
    maxRtilde: float
    minEig: float
    omegaNormMin: float
    omegaNormMax: float
    balancedRes: float
    kahlerRes: float
    singEta: float
    singOmega: float


@dataclass
class RunResult:
    rows: list[DiagnosticsRow]
    final: MetricField
    halt_reason: str
    snapshots: list[MetricField] = dc_field(default_factory=list)
    dt: float = 0.0
    stride: int = 1
    kappa: float = 1.0
    which: str = "eta"

    @property
    def completed(self) -> bool:
        return self.halt_reason == HALT_COMPLETED

    @property
    def snapshot_spacing(self) -> float:
        return self.dt * self.stride


class _Halt(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _hermitian(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


# vector fields ------------------------------------------------------------


def ricci_lattice(field: MetricField) -> np.ndarray:
    """Ric = −∂∂̄ log det g with both derivatives taken on the lattice, arranged [k, j].

    Nested lattice derivatives commute, so this Ric is ∂- and ∂̄-closed to roundoff.
    """
    m = field.lattice.m
    log_det = np.linalg.slogdet(field.g)[1]
    return -field_jet(field.lattice, log_det, 0, 2).terms[2][..., m:, :m]


def rhs_eta(field: MetricField, kappa: float = 1.0) -> np.ndarray:
    """∂_t g = −κ (R̃ + ½ T∘T̄), Hermitian at every site.

    R̃ is split as Ric + (R̃ − Ric): the Ric part comes from ``ricci_lattice`` and
    the difference from the metric jets.  On Kähler data the difference and T∘T̄
    vanish to roundoff, so Kähler data stay Kähler on the lattice.
    """
    j = field.jet(2)
    cp = curvature(j)
    tp = torsion(j)
    return _hermitian(-kappa * (ricci_lattice(field) + cp.Rtilde - cp.Ric + 0.5 * tp.TcT))


def rhs_kr(field: MetricField, kappa: float = 1.0) -> np.ndarray:
    """∂_t g = −κ Ric with Ric = −∂∂̄ log det g."""
    return _hermitian(-kappa * ricci_lattice(field))


def vector_field(config: FlowConfig) -> Callable[[MetricField], np.ndarray]:
    rhs = rhs_eta if config.which == "eta" else rhs_kr
    kappa = config.kappa
    return lambda f: rhs(f, kappa)


def cfl_bound(field: MetricField, cfl: float = 0.2) -> float:
    """Largest stable explicit step: cfl · h² · λ_min(g)."""
    lowest = min_eigenvalue(field.g)
    if not lowest > 0:
        return 0.0
    return cfl * field.lattice.h ** 2 * lowest


# diagnostics --------------------------------------------------------------


def _singularity_omega(j_eta: MetricJet, omega: HolVolForm) -> np.ndarray:
    j_omega = rescale_to_omega(j_eta, omega)
    norm_sq = omega_norm(j_omega, omega)
    cp = curvature(j_omega)
    tp = torsion(j_omega)
    return cp.RmNormSq / norm_sq + tp.normTsq / np.sqrt(norm_sq) + grad_torsion_norm(j_omega) / norm_sq


def diagnostics(field: MetricField, omega: HolVolForm) -> DiagnosticsRow:
    j = field.jet(2)
    h = j.inverse.value
    cp = curvature(j)
    tp = torsion(j)
    norm_sq = omega_norm(j, omega)
    sing_eta = cp.RmNormSq + tp.normTsq + grad_torsion_norm(j)
    m = field.lattice.m
    sing_omega = float(np.max(_singularity_omega(j, omega))) if m >= 3 else float("nan")
    return DiagnosticsRow(
        t=field.time,
        maxT2=float(np.max(tp.normTsq)),
        maxTau2=float(np.max(tp.normTauSq)),
        maxRm2=float(np.max(cp.RmNormSq)),
        maxRic=float(np.max(np.sqrt(np.maximum(tensor_norm_sq(h, cp.Ric, "bh"), 0.0)))),
        maxRtilde=float(np.max(np.sqrt(np.maximum(tensor_norm_sq(h, cp.Rtilde, "bh"), 0.0)))),
        minEig=min_eigenvalue(field.g),
        omegaNormMin=float(np.min(norm_sq)),
        omegaNormMax=float(np.max(norm_sq)),
        balancedRes=balanced.balanced_residual(field, omega),
        kahlerRes=mixed_sup_norm(exterior_d(field.lattice, field.kahler_form())),
        singEta=float(np.max(sing_eta)),
        singOmega=sing_omega,
    )


# initial data -------------------------------------------------------------


def flat_field(lattice: TorusLattice) -> MetricField:
    return MetricField(lattice, np.broadcast_to(np.eye(lattice.m, dtype=complex), lattice.shape + (lattice.m,) * 2).copy(), tag="flat")


def kahler_potential_field(lattice: TorusLattice, rng: np.random.Generator, amplitude: float = 0.02, n_modes: int = 2) -> MetricField:
    """g_{k̄j} = δ_{kj} + ∂_j∂_k̄ φ with lattice derivatives, so dη vanishes to roundoff."""
    m = lattice.m
    phi = random_trig_field(m, rng, lattice.active, (), n_modes=n_modes, amplitude=amplitude, real=True)
    second = field_jet(lattice, phi.sample(lattice).real, 0, 2).terms[2][..., m:, :m]
    return MetricField(lattice, _hermitian(np.eye(m) + second), tag="kahler_potential")


def perturbation_field(lattice: TorusLattice, rng: np.random.Generator, amplitude: float = 0.02, n_modes: int = 2) -> MetricField:
    """Flat metric plus a small Hermitian trigonometric perturbation (not Kähler in general)."""
    m = lattice.m
    trig = random_trig_field(m, rng, lattice.active, (m, m), n_modes=n_modes, amplitude=amplitude, hermitian=True, offset=np.eye(m))
    return MetricField(lattice, _hermitian(trig.sample(lattice)), tag="perturbation")


def initial_field(config: FlowConfig) -> tuple[MetricField, HolVolForm]:
    spec = config.initial
    omega = HolVolForm(config.omega_c)
    if spec.kind == "balanced_file":
        field, omega_c = io.read_snapshot(spec.path)
        return field, HolVolForm(omega_c)
    if spec.kind == "balanced":
        _, field = balanced.make_balanced(config.m, config.n, spec.eps, config.seed, omega, config.reduction)
        return field, omega
    lattice = TorusLattice.from_reduction(config.m, config.n, config.reduction)
    rng = np.random.default_rng(config.seed)
    if spec.kind == "kahler_potential":
        return kahler_potential_field(lattice, rng, spec.amplitude, spec.n_modes), omega
    if spec.kind == "perturbation":
        return perturbation_field(lattice, rng, spec.amplitude, spec.n_modes), omega
    return flat_field(lattice), omega


# time stepping ------------------------------------------------------------


def _evaluate(rhs: Callable[[MetricField], np.ndarray], field: MetricField, g: np.ndarray, floor: float) -> np.ndarray:
    if not np.all(np.isfinite(g)):
        raise _Halt(HALT_NAN)
    lowest = min_eigenvalue(g)
    if not lowest > floor:
        raise _Halt(HALT_POSITIVITY)
    try:
        out = rhs(field.replace(g))
    except PositivityError as exc:
        raise _Halt(HALT_POSITIVITY) from exc
    if not np.all(np.isfinite(out)):
        raise _Halt(HALT_NAN)
    return out


def step(rhs: Callable[[MetricField], np.ndarray], field: MetricField, dt: float, scheme: str = "rk4", floor: float = 1e-6) -> np.ndarray:
    """One explicit step; returns the metric increment or raises _Halt."""
    g = field.g
    k1 = _evaluate(rhs, field, g, floor)
    if scheme == "euler":
        return dt * k1
    k2 = _evaluate(rhs, field, g + 0.5 * dt * k1, floor)
    k3 = _evaluate(rhs, field, g + 0.5 * dt * k2, floor)
    k4 = _evaluate(rhs, field, g + dt * k3, floor)
    return (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def resolve_dt(config: FlowConfig, field: MetricField) -> float:
    bound = cfl_bound(field, config.cfl)
    return 0.5 * bound if config.dt == "auto" else float(config.dt)


def run(config: FlowConfig, initial: MetricField | None = None, omega: HolVolForm | None = None, keep_snapshots: bool | None = None) -> RunResult:
    """Integrate the configured flow; halts are recorded, never raised."""
    if initial is None:
        field, default_omega = initial_field(config)
    else:
        field, default_omega = initial, HolVolForm(config.omega_c)
    omega = default_omega if omega is None else omega
    rhs = vector_field(config)
    dt = resolve_dt(config, field)
    keep = bool(config.monitors) if keep_snapshots is None else keep_snapshots
    logger.info("flow %s: m=%d n=%d dt=%.3e steps=%d scheme=%s", config.which, config.m, field.lattice.n, dt, config.steps, config.scheme)

    rows = [diagnostics(field, omega)]
    snapshots = [field] if keep else []
    halt = HALT_COMPLETED
    # g = g0 + drift, with every increment summed into drift
    g0 = field.g
    drift = np.zeros_like(g0)
    for n_step in range(1, config.steps + 1):
        if dt > cfl_bound(field, config.cfl):
            halt = HALT_CFL
            break
        try:
            increment = step(rhs, field, dt, config.scheme, config.positivity_floor)
            g_new = g0 + (drift + increment)
            if not np.all(np.isfinite(g_new)):
                raise _Halt(HALT_NAN)
            if not min_eigenvalue(g_new) > config.positivity_floor:
                raise _Halt(HALT_POSITIVITY)
        except _Halt as exc:
            halt = exc.reason
            break
        drift = _hermitian(drift + increment)
        field = field.replace(g0 + drift, time=n_step * dt)
        if n_step % config.stride == 0:
            rows.append(diagnostics(field, omega))
            if keep:
                snapshots.append(field)
            logger.info("t=%.5g maxT2=%.3e maxRic=%.3e minEig=%.4f", field.time, rows[-1].maxT2, rows[-1].maxRic, rows[-1].minEig)
    if halt != HALT_COMPLETED:
        logger.warning("flow halted at t=%.5g: %s", field.time, halt)
    return RunResult(rows, field, halt, snapshots, dt, config.stride, config.kappa, config.which)


# residual monitors --------------------------------------------------------


def _interior(result: RunResult) -> range:
    if len(result.snapshots) < 3:
        raise ValueError("residual monitors need at least three stored snapshots")
    return range(1, len(result.snapshots) - 1)


def _rate(result: RunResult, values: list, i: int):
    """Centered time difference of a per-snapshot quantity."""
    return (values[i + 1] - values[i - 1]) * (1.0 / (2.0 * result.snapshot_spacing))


def _sup(form: Form) -> float:
    return max_norm(form.coeff)


def anomaly_equivalence_residual(result: RunResult, omega: HolVolForm) -> np.ndarray:
    """∂_t(‖Ω‖²_η η^{m−1}) against κ(m−1) i∂∂̄(‖Ω‖²_η η^{m−2}) at interior snapshots.

    With κ = 1/(m−1) this is the anomaly flow written in η; the input must be
    conformally balanced.
    """
    m = result.final.lattice.m
    if m == 2:
        raise DegenerateRescalingError()
    if m < 2:
        raise ValueError("anomaly equivalence needs m >= 3")
    snaps = result.snapshots
    top = [balanced.balanced_form(f, omega) for f in snaps]
    out = []
    for i in _interior(result):
        f = snaps[i]
        norm = omega.abs_sq / np.linalg.det(f.g).real
        lower = power(f.kahler_form(), m - 2).scale(norm)
        rhs = (result.kappa * (m - 1)) * (1j * ddbar(f.lattice, lower))
        out.append(_sup(_rate(result, top, i) - rhs))
    return np.asarray(out)


def balanced_preservation(result: RunResult) -> np.ndarray:
    return np.asarray([r.balancedRes for r in result.rows])


def kahler_preservation(result: RunResult) -> np.ndarray:
    return np.asarray([r.kahlerRes for r in result.rows])


def torsion_form(field: MetricField) -> Form:
    return torsion(field.jet(1)).T


def torsion_velocity(field: MetricField) -> Form:
    """−∂∂†T + ∂(τ̄·T): the torsion velocity of the unified flow with κ = 1."""
    m = field.lattice.m
    j = field.jet(2)
    dagger = del_dagger(j, torsion_jet(j), (2, 1)).value
    inner_part = Form.from_components(m, "bh", -dagger + torsion(j).tauT)
    return del_(field.lattice, inner_part)


def torsion_flow_residual(result: RunResult) -> np.ndarray:
    """∂_t T against κ(−∂∂†T + ∂(τ̄·T))."""
    forms = [torsion_form(f) for f in result.snapshots]
    out = []
    for i in _interior(result):
        rhs = torsion_velocity(result.snapshots[i]) * result.kappa
        out.append(_sup(_rate(result, forms, i) - rhs))
    return np.asarray(out)


def _pairing(hs: list[np.ndarray], x: np.ndarray, y: np.ndarray, signature: str) -> np.ndarray:
    """Σ x conj(y) with one metric factor per axis; ``h`` axes pair as h[a, A], ``b`` axes as h[A, a]."""
    n = len(signature)
    left = "cdefg"[:n]
    right = left.upper()
    subs = ["..." + left]
    for a, b, kind in zip(left, right, signature):
        subs.append(f"...{a}{b}" if kind == "h" else f"...{b}{a}")
    subs.append("..." + right)
    return np.einsum(",".join(subs) + "->...", x, *hs, np.conj(y), optimize=True)


def _norm_rate(h: np.ndarray, hdot: np.ndarray, x: np.ndarray, xdot: np.ndarray, signature: str) -> np.ndarray:
    """Time derivative of the full contraction |x|² by the product rule."""
    n = len(signature)
    rate = 2.0 * _pairing([h] * n, xdot, x, signature).real
    for i in range(n):
        hs = [hdot if k == i else h for k in range(n)]
        rate = rate + _pairing(hs, x, x, signature).real
    return rate


@dataclass(frozen=True)
class TorsionRates:
    """Inverse metric and torsion at every site with their unified-flow velocities at κ = 1.

    ṫ comes from the torsion evolution −∂∂†T + ∂(τ̄·T) and ḣ from ġ = −(R̃ + ½T∘T̄),
    never from the vector field that produced the run.
    """

    h: np.ndarray
    hdot: np.ndarray
    t: np.ndarray
    tdot: np.ndarray

    @property
    def tau(self) -> np.ndarray:
        return np.einsum("...jk,...kjl->...l", self.h, self.t)

    @property
    def taudot(self) -> np.ndarray:
        return np.einsum("...jk,...kjl->...l", self.hdot, self.t) + np.einsum("...jk,...kjl->...l", self.h, self.tdot)

    def tsq_rate(self) -> np.ndarray:
        return _norm_rate(self.h, self.hdot, self.t, self.tdot, "bhh")

    def tau_sq_rate(self) -> np.ndarray:
        return _norm_rate(self.h, self.hdot, self.tau, self.taudot, "h")


def torsion_rates(field: MetricField) -> TorsionRates:
    h = field.jet(1).inverse.value
    gdot = rhs_eta(field)
    return TorsionRates(
        h=h,
        hdot=-np.einsum("...ab,...bc,...cd->...ad", h, gdot, h),
        t=torsion(field.jet(1)).t,
        tdot=torsion_velocity(field).to_components("bhh"),
    )


@dataclass(frozen=True)
class TorsionNormMonitor:
    residuals: np.ndarray
    fitted_C: float
    inequality_holds: bool
    gradient_part: np.ndarray


def tsq_evolution_residual(result: RunResult, floor: float = 1e-14, slack: float = 1e-10) -> TorsionNormMonitor:
    """((1/κ)∂_t − Δ_c)|T|² measured on the run against the unified-flow value.

    The value is −|∇T|² − |∇̄T|² plus lower-order terms in T, ∇T and Rm; both sides
    share the lattice Δ_c|T|², so the residual is the mismatch of (1/κ)∂_t|T|² with
    the rate implied by the torsion evolution.  A Kähler-Ricci run leaves T fixed
    and fails it.  Also fits the smallest C in ((1/κ)∂_t − Δ_c)|T|² ≤ C|T|²(|T|² + |Rm|)
    and reports max(|∇T|² + |∇̄T|²) per snapshot.
    """
    snaps = result.snapshots
    tsq = [torsion(f.jet(1)).normTsq for f in snaps]
    residuals, ratios, gradients, holds = [], [0.0], [], True
    for i in _interior(result):
        f = snaps[i]
        predicted = torsion_rates(f).tsq_rate()
        measured = _rate(result, tsq, i) / result.kappa
        residuals.append(float(np.max(np.abs(measured - predicted))))

        j = f.jet(2)
        lap = chern_laplacian(j, field_jet(f.lattice, tsq[i], 0, 2)).value.real
        gradients.append(float(np.max(grad_torsion_norm(j))))
        lhs = measured - lap
        bound = tsq[i] * (tsq[i] + np.sqrt(curvature(j).RmNormSq))
        big = bound > floor
        if np.any(big):
            ratios.append(float(np.max(lhs[big] / bound[big])))
        if np.any(lhs[~big] > slack):
            holds = False
    return TorsionNormMonitor(np.asarray(residuals), max(ratios), holds, np.asarray(gradients))


def tau_sq_evolution_residual(result: RunResult) -> np.ndarray:
    """(1/κ)∂_t|τ|² measured on the run against the rate implied by the torsion evolution."""
    snaps = result.snapshots
    tausq = [torsion(f.jet(1)).normTauSq for f in snaps]
    out = []
    for i in _interior(result):
        predicted = torsion_rates(snaps[i]).tau_sq_rate()
        out.append(float(np.max(np.abs(_rate(result, tausq, i) / result.kappa - predicted))))
    return np.asarray(out)


def tau_flow_rhs(field: MetricField) -> np.ndarray:
    """−□τ_j + ∇_j(|τ|² + ½|T|²) + T^s_{pj} R′^p_s + τ̄^p (∇_pτ_j − ∇_jτ_p + T^s_{pj} τ_s)."""
    j = field.jet(3)
    h = j.inverse.value
    tau = tau_jet(j)
    tp = torsion(j)
    box = chern_laplacian(j, tau, "h").value
    scalar = tp.normTauSq + 0.5 * tp.normTsq
    grad = field_jet(field.lattice, scalar, 0, 1).holo().value
    t_up = torsion_upper_jet(j).value
    r_up = np.einsum("...pk,...ks->...ps", h, curvature(j).Rprime)
    nab = nabla_holo(j, tau, "h").value
    bracket = nab - np.swapaxes(nab, -1, -2) + np.einsum("...spj,...s->...pj", t_up, tp.tau_vec)
    return (
        -box
        + grad
        + np.einsum("...spj,...ps->...j", t_up, r_up)
        + np.einsum("...pk,...k,...pj->...j", h, np.conj(tp.tau_vec), bracket)
    )


def tau_flow_residual(result: RunResult) -> np.ndarray:
    """∂_tτ/κ against ``tau_flow_rhs`` on balanced runs (informational)."""
    snaps = result.snapshots
    taus = [torsion(f.jet(1)).tau_vec for f in snaps]
    out = []
    for i in _interior(result):
        lhs = _rate(result, taus, i) / result.kappa
        out.append(float(np.max(np.abs(lhs - tau_flow_rhs(snaps[i])))))
    return np.asarray(out)


def singularity_dictionary_residual(field: MetricField, omega: HolVolForm) -> float:
    """Rebuild η = ‖Ω‖_ω ω from ω and compare the transformed torsion and curvature
    with those computed on η directly."""
    if field.lattice.m == 2:
        raise DegenerateRescalingError()
    j_eta = field.jet(2)
    j_omega = rescale_to_omega(j_eta, omega)
    f = jet_log(omega_norm_jet(j_omega, omega)) * 0.5
    cc = conformal_change(j_omega, f)
    return max(
        float(np.max(np.abs(cc.metric.jet.value - j_eta.jet.value))),
        float(np.max(np.abs(cc.torsion_predicted - torsion_upper_jet(j_eta).value))),
        float(np.max(np.abs(cc.curvature_predicted - curvature_lowered_jet(j_eta).value))),
    )


def torsion_rate_scale(result: RunResult) -> float:
    """sup|∂_tT| over the interior snapshots, the scale torsion-flow residuals are judged on."""
    forms = [torsion_form(f) for f in result.snapshots]
    return max(_sup(_rate(result, forms, i)) for i in _interior(result))


def kahler_condition_kept(result: RunResult, factor: float = 5.0) -> bool:
    """kahlerRes never exceeds ``factor`` times its initial value (plus roundoff)."""
    series = kahler_preservation(result)
    return bool(series.max() <= factor * series[0] + ROUNDOFF_FLOOR)


def balanced_condition_kept(result: RunResult, allowance: float = 1e-6) -> bool:
    """The final balancedRes exceeds the initial one by at most ``allowance``."""
    series = balanced_preservation(result)
    return bool(series[-1] <= series[0] + allowance)


def plateau_reached(rows: list[DiagnosticsRow], window: int = 50, tol: float = 1e-10, columns: tuple[str, ...] = ("maxT2", "maxRic", "maxRm2")) -> int | None:
    """First row index from which the monitored columns vary by at most tol over ``window`` rows."""
    table = np.asarray([[getattr(r, c) for c in columns] for r in rows])
    for start in range(0, len(rows) - window):
        chunk = table[start:start + window + 1]
        if np.all(chunk.max(axis=0) - chunk.min(axis=0) <= tol):
            return start
    return None


def stationarity_holds(rows: list[DiagnosticsRow], window: int = 50, tol: float = 1e-10, flat_tol: float = 1e-8) -> bool | None:
    """On a plateau the metric must be Kähler and Ricci-flat; None when no plateau is reached."""
    start = plateau_reached(rows, window, tol)
    if start is None:
        return None
    row = rows[start]
    return row.maxT2 <= flat_tol and row.maxRic <= flat_tol
