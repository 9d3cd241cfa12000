"""Conformally balanced, non-Kähler initial data on the torus.

A positive (m−1,m−1)-form Ψ is carried by its dual Hermitian matrix M, defined
through the flat pairing

    Ψ ∧ i dz^j∧dzbar^k = M[j, k] · vol₀,        vol₀ = ω₀^m / m!,

so that η^{m−1}/(m−1)! corresponds to det(g) g^{-1}.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from hermflow.errors import AmplitudeError, DegenerateRescalingError, DegreeError, PositivityError
from hermflow.forms import Form, HermitianMetric, power, volume_form, wedge
from hermflow.geometry import HolVolForm
from hermflow.lattice import (
    MetricField,
    TorusLattice,
    TrigField,
    TrigMode,
    exterior_d,
    field_jet,
    min_eigenvalue,
    mixed_sup_norm,
    random_trig_field,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClosedPsi:
    lattice: TorusLattice
    M: np.ndarray
    eps: float
    potential: TrigField

    @property
    def m(self) -> int:
        return self.lattice.m


def default_potential(m: int, lattice: TorusLattice, seed: int) -> TrigField:
    """Seeded real trigonometric potential along the active axes, unit amplitude."""
    rng = np.random.default_rng(seed)
    return random_trig_field(m, rng, lattice.active, (), n_modes=2, amplitude=1.0, real=True)


def cosine_potential(m: int, axis: int = 0) -> TrigField:
    """φ = cos(2π x^{axis+1})."""
    k = [0] * (2 * m)
    k[axis] = 1
    return TrigField(m, (), (TrigMode(tuple(k), np.array(1.0 + 0j)),))


def build_psi(
    m: int,
    lattice: TorusLattice,
    eps: float,
    seed: int = 0,
    potential: TrigField | None = None,
) -> ClosedPsi:
    """Ψ = ω₀^{m−1}/(m−1)! + ε i∂∂̄(φ ω₀^{m−2}/(m−2)!), stored as M.

    In dual form M = (1 + ε tr b) I − ε b with b[k, j] = ∂_j∂_k̄ φ taken from lattice
    differencing, so dΨ vanishes to roundoff.
    """
    if m < 2:
        raise DegreeError("balanced data needs m >= 2")
    if lattice.m != m:
        raise DegreeError(f"lattice dimension {lattice.m} does not match m={m}")
    potential = default_potential(m, lattice, seed) if potential is None else potential
    second = field_jet(lattice, potential.sample(lattice), 0, 2).terms[2]
    b = second[..., m:, :m]  # [k, j] = ∂_k̄ ∂_j φ
    trace = np.trace(b, axis1=-2, axis2=-1)
    eye = np.eye(m)
    M = (1.0 + eps * trace)[..., None, None] * eye - eps * b
    M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
    lowest = min_eigenvalue(M)
    if not lowest > 0:
        logger.warning("Ψ not positive for eps=%g (min eigenvalue %.3e)", eps, lowest)
        raise AmplitudeError(eps)
    logger.info("built Ψ: m=%d n=%d eps=%g min eigenvalue %.4f", m, lattice.n, eps, lowest)
    return ClosedPsi(lattice, M, float(eps), potential)


@lru_cache(maxsize=None)
def _pairing_basis(m: int) -> tuple[tuple[Form, ...], np.ndarray]:
    """Basis (m−1,m−1)-forms E_{jk} (all holomorphic indices but j, antiholomorphic but k)
    with their pairing values against i dz^j∧dzbar^k."""
    vol_top = volume_form(HermitianMetric(np.eye(m))).top()
    forms = []
    pairing = np.zeros((m, m), dtype=complex)
    for j in range(m):
        for k in range(m):
            e = Form.basis(m, [a for a in range(m) if a != j], [a for a in range(m) if a != k])
            basis_form = 1j * Form.basis(m, [j], [k])
            pairing[j, k] = wedge(e, basis_form).top() / vol_top
            forms.append(e)
    return tuple(forms), pairing


def psi_to_form(M: np.ndarray) -> Form:
    """The (m−1,m−1)-form field whose dual matrix is M."""
    m = M.shape[-1]
    basis, pairing = _pairing_basis(m)
    batch = M.shape[:-2]
    out = Form.zeros(m, m - 1, m - 1, batch)
    for index, e in enumerate(basis):
        j, k = divmod(index, m)
        out = out + e.scale(M[..., j, k] / pairing[j, k])
    return out


def form_to_dual(psi: Form) -> np.ndarray:
    """Dual matrix M[j, k] of an (m−1,m−1)-form field."""
    m = psi.m
    vol_top = volume_form(HermitianMetric(np.eye(m))).top()
    M = np.zeros(psi.batch_shape + (m, m), dtype=complex)
    for j in range(m):
        for k in range(m):
            M[..., j, k] = wedge(psi, 1j * Form.basis(m, [j], [k])).top() / vol_top
    return M


def closedness_residual(psi: ClosedPsi) -> float:
    """‖dΨ‖∞ on the lattice."""
    return mixed_sup_norm(exterior_d(psi.lattice, psi_to_form(psi.M)))


def eta_root(psi: ClosedPsi, omega: HolVolForm, tag: str = "balanced") -> MetricField:
    """Metric η with ‖Ω‖²_η η^{m−1}/(m−1)! = Ψ.

    First det(g₀) g₀^{-1} = M, i.e. det g₀ = (det M)^{1/(m−1)}, g₀ = det(g₀) M^{-1};
    then η = e^u g₀ with u = log ‖Ω‖²_{g₀}.
    """
    m = psi.m
    if m == 2:
        raise DegenerateRescalingError(
            "rescaling degenerate at m=2: ‖Ω‖²_η ≡ 1, so balanced roots are not unique"
        )
    if m < 2:
        raise DegreeError("balanced data needs m >= 3")
    det_m = np.linalg.det(psi.M).real
    if not np.all(det_m > 0):
        raise PositivityError("dual matrix M is not positive definite")
    det_g0 = det_m ** (1.0 / (m - 1))
    g0 = det_g0[..., None, None] * np.linalg.inv(psi.M)
    u = np.log(omega.abs_sq / det_g0)
    g = np.exp(u)[..., None, None] * g0
    g = 0.5 * (g + np.conj(np.swapaxes(g, -1, -2)))
    return MetricField(psi.lattice, g, 0.0, tag)


def dual_of_metric(g: np.ndarray, omega: HolVolForm) -> np.ndarray:
    """Dual matrix of ‖Ω‖²_η η^{m−1}/(m−1)!, i.e. |c|² g^{-1}."""
    return omega.abs_sq * np.linalg.inv(g)


def reconstruction_residual(field: MetricField, psi: ClosedPsi, omega: HolVolForm) -> float:
    return float(np.max(np.abs(dual_of_metric(field.g, omega) - psi.M)))


def balanced_form(field: MetricField, omega: HolVolForm) -> Form:
    """‖Ω‖²_η η^{m−1} as a lattice form field."""
    m = field.lattice.m
    norm = omega.abs_sq / np.linalg.det(field.g).real
    return power(field.kahler_form(), m - 1).scale(norm)


def balanced_residual(field: MetricField, omega: HolVolForm) -> float:
    """‖d(‖Ω‖²_η η^{m−1})‖∞."""
    return mixed_sup_norm(exterior_d(field.lattice, balanced_form(field, omega)))


def make_balanced(
    m: int,
    n: int,
    eps: float,
    seed: int,
    omega: HolVolForm | None = None,
    reduction: str | None = "x1,x2",
) -> tuple[ClosedPsi, MetricField]:
    """Build Ψ and its balanced root on a (reduced) lattice."""
    omega = HolVolForm() if omega is None else omega
    lattice = TorusLattice.from_reduction(m, n, reduction)
    psi = build_psi(m, lattice, eps, seed)
    field = eta_root(psi, omega)
    logger.info(
        "balanced root: reconstruction %.3e, closedness %.3e",
        reconstruction_residual(field, psi, omega),
        closedness_residual(psi),
    )
    return psi, field
