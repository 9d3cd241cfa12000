"""Chern connection, torsion and curvature of a Hermitian metric from its jet.

Index conventions (0-based arrays, see CONVENTIONS.md):

- ``g[k, j] = g_{k̄j}``, ``h[j, k] = g^{j k̄}``
- ``gamma[l, j, p] = Γ^l_{jp} = g^{l q̄} ∂_j g_{q̄p}``
- ``t[k, j, m] = T_{k̄jm} = ∂_j g_{k̄m} − ∂_m g_{k̄j}``
- ``rfull[k, j, p, q] = R_{k̄j}{}^p{}_q = −∂_k̄ Γ^p_{jq}``
- ``r4[k, j, l, q] = R_{k̄j l̄ q} = g_{l̄p} R_{k̄j}{}^p{}_q``
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from hermflow import jets
from hermflow.errors import (
    DegenerateRescalingError,
    DegreeError,
    JetOrderError,
    SingularMetricError,
)
from hermflow.forms import Form, HermitianMetric, wedge_differentials
from hermflow.jets import Jet, jeinsum

logger = logging.getLogger(__name__)

_AXES = "cdefgrstuvwxyz"


@dataclass(frozen=True)
class HolVolForm:
    """Ω = c dz^1∧…∧dz^m, constant on the torus."""

    c: complex = 1.0

    def __post_init__(self):
        if self.c == 0:
            raise ValueError("holomorphic volume form must be nowhere vanishing (c != 0)")

    @property
    def abs_sq(self) -> float:
        return float(abs(self.c) ** 2)


@dataclass(frozen=True)
class MetricJet:
    jet: Jet

    def __post_init__(self):
        if self.jet.rank != 2 or self.jet.tensor_shape != (self.jet.m, self.jet.m):
            raise DegreeError("metric jet must carry an m x m tensor")

    @property
    def m(self) -> int:
        return self.jet.m

    @property
    def order(self) -> int:
        return self.jet.order

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.jet.batch_shape

    def require(self, order: int, what: str) -> None:
        if self.order < order:
            raise JetOrderError(f"{what} needs a metric jet of order >= {order}, got {self.order}")

    def truncate(self, order: int) -> "MetricJet":
        return MetricJet(self.jet.truncate(order))

    @cached_property
    def metric(self) -> HermitianMetric:
        return HermitianMetric(self.jet.value)

    @cached_property
    def inverse(self) -> Jet:
        try:
            return jets.inverse(self.jet)
        except np.linalg.LinAlgError as exc:
            raise SingularMetricError() from exc

    @cached_property
    def log_det(self) -> Jet:
        return jets.log_det(self.jet, self.inverse)

    @cached_property
    def christoffel(self) -> Jet:
        self.require(1, "Christoffel symbols")
        return jeinsum("lq,jqp->ljp", self.inverse, self.jet.holo())


# random and model jets ----------------------------------------------------


def flat_jet(m: int, order: int, batch: tuple[int, ...] = ()) -> MetricJet:
    value = np.broadcast_to(np.eye(m, dtype=complex), tuple(batch) + (m, m)).copy()
    return MetricJet(Jet.constant(value, m, 2, order))


def _hermitianize(jet: Jet) -> Jet:
    return (jet + jet.conj().transform("kj->jk")) * 0.5


def random_metric_jet(m: int, order: int, rng: np.random.Generator, scale: float = 0.1) -> MetricJet:
    """Generic Hermitian metric jet near the identity."""
    nvar = 2 * m
    base = jets.symmetric_random(rng, nvar, 0, (m, m))
    terms = [np.eye(m) + scale * base]
    for k in range(1, order + 1):
        terms.append(scale * jets.symmetric_random(rng, nvar, k, (m, m)))
    return MetricJet(_hermitianize(Jet(m, 2, tuple(terms))))


def random_scalar_jet(m: int, order: int, rng: np.random.Generator, scale: float = 0.1) -> Jet:
    """Real-valued scalar jet."""
    terms = tuple(scale * jets.symmetric_random(rng, 2 * m, k, ()) for k in range(order + 1))
    return Jet(m, 0, terms).real_part()


def kahler_jet(m: int, order: int, rng: np.random.Generator, scale: float = 0.1) -> MetricJet:
    """g_{k̄j} = δ_{kj} + ∂_j∂_k̄ φ for a random real potential φ."""
    phi = random_scalar_jet(m, order + 2, rng, scale)
    return MetricJet(phi.holo().antiholo().add_value(np.eye(m)))


def balanced_jet(m: int, order: int, rng: np.random.Generator, eps: float = 1.0, scale: float = 0.1) -> MetricJet:
    """Conformally balanced jet for Ω = dz^1∧…∧dz^m.

    The dual matrix M = (1 + ε tr b) I − ε b, b = ∂∂̄φ, is that of a closed
    (m−1,m−1)-form; g = M^{-1} then has ‖Ω‖²_η η^{m−1}/(m−1)! dual to M.
    """
    phi = random_scalar_jet(m, order + 2, rng, scale)
    b = phi.holo().antiholo()
    eye = Jet.constant(np.eye(m, dtype=complex), m, 2, order)
    dual = eye + eps * (jets.scale(b.transform("kk->"), eye) - b)
    return MetricJet(_hermitianize(jets.inverse(dual)))


def random_metric(m: int, rng: np.random.Generator, scale: float = 0.3) -> HermitianMetric:
    return random_metric_jet(m, 0, rng, scale).metric


def random_torsion(m: int, rng: np.random.Generator) -> np.ndarray:
    """Random t[k, j, m] antisymmetric in its two holomorphic indices."""
    t = rng.uniform(-1, 1, (m, m, m)) + 1j * rng.uniform(-1, 1, (m, m, m))
    return t - np.swapaxes(t, 1, 2)


# tensor norms -------------------------------------------------------------


def tensor_norm_sq(h: np.ndarray, x: np.ndarray, signature: str) -> np.ndarray:
    """Full g-contraction Σ x conj(x) for lower indices of type ``h``/``b``."""
    n = len(signature)
    left = _AXES[:n]
    right = _AXES[n:2 * n].upper()
    subs = ["..." + left]
    operands = [x]
    for a, b, kind in zip(left, right, signature):
        subs.append(f"...{a}{b}" if kind == "h" else f"...{b}{a}")
        operands.append(h)
    subs.append("..." + right)
    operands.append(np.conj(x))
    return np.einsum(",".join(subs) + "->...", *operands, optimize=True).real


# torsion ------------------------------------------------------------------


def torsion_jet(j: MetricJet) -> Jet:
    """T_{k̄jm} as a jet of one order less than the metric."""
    j.require(1, "torsion")
    dg = j.jet.holo()
    return dg.transform("jkm->kjm") - dg.transform("mkj->kjm")


def torsion_upper_jet(j: MetricJet) -> Jet:
    """T^l_{jm} = Γ^l_{jm} − Γ^l_{mj}."""
    gamma = j.christoffel
    return gamma - gamma.transform("lmj->ljm")


def tau_jet(j: MetricJet, t: Jet | None = None) -> Jet:
    t = torsion_jet(j) if t is None else t
    return jeinsum("jk,kjl->l", j.inverse, t)


def tct(h: np.ndarray, t: np.ndarray) -> np.ndarray:
    """(T∘T̄)_{b̄a} = g^{l c̄} g^{j k̄} T_{b̄jl} conj(T_{āk c})."""
    return np.einsum("...lc,...jk,...bjl,...akc->...ba", h, h, t, np.conj(t), optimize=True)


def tt(h: np.ndarray, t: np.ndarray) -> np.ndarray:
    """(TT̄)_{l̄m} = g^{s r̄} g^{j k̄} T_{r̄jm} conj(T_{s̄kl})."""
    return np.einsum("...sr,...jk,...rjm,...skl->...lm", h, h, t, np.conj(t), optimize=True)


def tau_dot_t(h: np.ndarray, tau: np.ndarray, t: np.ndarray) -> np.ndarray:
    """(τ̄·T)_{āb} = τ̄^c T_{ābc} with τ̄^c = g^{c k̄} conj(τ_k)."""
    return np.einsum("...ck,...k,...abc->...ab", h, np.conj(tau), t, optimize=True)


@dataclass(frozen=True)
class TorsionPack:
    t: np.ndarray
    tau_vec: np.ndarray
    TcT: np.ndarray
    TT: np.ndarray
    tauT: np.ndarray
    normTsq: np.ndarray
    normTauSq: np.ndarray

    @property
    def m(self) -> int:
        return self.t.shape[-1]

    @property
    def T(self) -> Form:
        return Form.from_components(self.m, "bhh", self.t)

    @property
    def tau(self) -> Form:
        return Form.from_components(self.m, "h", self.tau_vec)


def torsion_pack(h: np.ndarray, t: np.ndarray) -> TorsionPack:
    """All torsion quantities from the inverse metric and T values."""
    tau = np.einsum("...jk,...kjl->...l", h, t)
    return TorsionPack(
        t=t,
        tau_vec=tau,
        TcT=tct(h, t),
        TT=tt(h, t),
        tauT=tau_dot_t(h, tau, t),
        normTsq=tensor_norm_sq(h, t, "bhh"),
        normTauSq=tensor_norm_sq(h, tau, "h"),
    )


def torsion(j: MetricJet) -> TorsionPack:
    return torsion_pack(j.inverse.value, torsion_jet(j.truncate(1)).value)


# curvature ----------------------------------------------------------------


def curvature_full_jet(j: MetricJet) -> Jet:
    j.require(2, "curvature")
    return -j.christoffel.antiholo().transform("kpjq->kjpq")


def curvature_lowered_jet(j: MetricJet) -> Jet:
    return jeinsum("ls,kjsq->kjlq", j.jet, curvature_full_jet(j))


@dataclass(frozen=True)
class CurvaturePack:
    Rfull: np.ndarray
    R4: np.ndarray
    Ric: np.ndarray
    Rtilde: np.ndarray
    Rprime: np.ndarray
    Rdprime: np.ndarray
    Rscalar: np.ndarray
    RmNormSq: np.ndarray


def curvature_pack(h: np.ndarray, rfull: np.ndarray, r4: np.ndarray) -> CurvaturePack:
    ric = np.einsum("...kjpp->...kj", rfull)
    return CurvaturePack(
        Rfull=rfull,
        R4=r4,
        Ric=ric,
        Rtilde=np.einsum("...pq,...qpkj->...kj", h, r4),
        Rprime=np.einsum("...pl,...kplj->...kj", h, r4),
        Rdprime=np.einsum("...pq,...qjkp->...kj", h, r4),
        Rscalar=np.einsum("...jk,...kj->...", h, ric),
        RmNormSq=tensor_norm_sq(h, r4, "bhbh"),
    )


def curvature(j: MetricJet) -> CurvaturePack:
    j2 = j.truncate(2)
    rfull = curvature_full_jet(j2).value
    r4 = np.einsum("...ls,...kjsq->...kjlq", j2.jet.value, rfull)
    return curvature_pack(j2.inverse.value, rfull, r4)


def ricci_from_log_det(j: MetricJet) -> np.ndarray:
    """−∂_j∂_k̄ log det g, arranged as [k, j]."""
    j.require(2, "Ricci potential")
    return -j.log_det.holo().antiholo().value


# covariant derivatives ----------------------------------------------------


def covariant_derivative(j: MetricJet, t: Jet, signature: str) -> Jet:
    """Chern covariant derivative of a tensor jet.

    ``signature`` gives one letter per tensor axis: ``h``/``b`` for lower
    holomorphic/antiholomorphic indices, ``H``/``B`` for upper ones.  The result
    carries the derivative direction (2m of them, holomorphic first) as a new
    first tensor axis.
    """
    if len(signature) != t.rank or set(signature) - set("hbHB"):
        raise DegreeError(f"signature {signature!r} does not describe a rank-{t.rank} tensor")
    if t.order < 1:
        raise JetOrderError("covariant derivative needs a tensor jet of order >= 1")
    gamma = j.christoffel
    gamma_bar = gamma.conj()
    holo, anti = t.holo(), t.antiholo()
    letters = _AXES[: t.rank]
    for i, kind in enumerate(signature):
        with_p = letters[:i] + "p" + letters[i + 1:]
        with_q = letters[:i] + "q" + letters[i + 1:]
        if kind == "h":
            holo = holo - jeinsum(f"paq,{with_p}->a{with_q}", gamma, t)
        elif kind == "H":
            holo = holo + jeinsum(f"paq,{with_q}->a{with_p}", gamma, t)
        elif kind == "b":
            anti = anti - jeinsum(f"paq,{with_p}->a{with_q}", gamma_bar, t)
        else:
            anti = anti + jeinsum(f"paq,{with_q}->a{with_p}", gamma_bar, t)
    return jets.concat([holo, anti])


def _split(nabla: Jet, m: int) -> tuple[Jet, Jet]:
    def take(index):
        terms = tuple(np.take(x, index, axis=nabla.batch_ndim + k) for k, x in enumerate(nabla.terms))
        return Jet(nabla.m, nabla.rank, terms)

    return take(np.arange(m)), take(np.arange(m, 2 * m))


def nabla_holo(j: MetricJet, t: Jet, signature: str) -> Jet:
    return _split(covariant_derivative(j, t, signature), j.m)[0]


def nabla_anti(j: MetricJet, t: Jet, signature: str) -> Jet:
    return _split(covariant_derivative(j, t, signature), j.m)[1]


def chern_laplacian(j: MetricJet, t: Jet, signature: str = "") -> Jet:
    """Δ_c t = g^{p q̄} ∇_q̄ ∇_p t."""
    first = nabla_holo(j, t, signature)
    second = nabla_anti(j, first, "h" + signature)
    letters = _AXES[: t.rank]
    return jeinsum(f"pq,qp{letters}->{letters}", j.inverse, second)


def grad_torsion_norm(j: MetricJet) -> np.ndarray:
    """|∇T|² + |∇̄T|², both direction types contracted with the metric."""
    j.require(2, "|∇T|²")
    j2 = j.truncate(2)
    t = torsion_jet(j2)
    h = j2.inverse.value
    holo = nabla_holo(j2, t, "bhh").value
    anti = nabla_anti(j2, t, "bhh").value
    return tensor_norm_sq(h, holo, "hbhh") + tensor_norm_sq(h, anti, "bbhh")


# ∂ and ∂† -----------------------------------------------------------------


def del_jet(coeff: Jet, p: int, q: int, anti: bool = False) -> Jet:
    """∂ (or ∂̄) of a form whose canonical coefficients are given as a jet."""
    grad = coeff.antiholo() if anti else coeff.holo()
    # the direction axis of each gradient term sits right before the form blocks,
    # i.e. it is the last batch axis of the family
    terms = tuple(wedge_differentials(Form(coeff.m, p, q, term), anti).coeff for term in grad.terms)
    return Jet(coeff.m, p + q + 1, terms)


_DAGGER_PATTERNS = {(1, 0): "h", (2, 0): "hh", (2, 1): "bhh"}


def del_dagger(j: MetricJet, alpha: Jet, bidegree: tuple[int, int]) -> Jet:
    """∂† of a (1,0), (2,0) or (2,1) form given by its components.

    Components follow the index patterns ψ_p, β_{lp}, ψ_{ᾱβγ}; the result is
    returned the same way (scalar, ψ_l, (∂†ψ)_{ᾱβ}).
    """
    if bidegree not in _DAGGER_PATTERNS:
        raise DegreeError(f"∂† is implemented for (1,0), (2,0), (2,1) forms, not {bidegree}")
    j.require(1, "∂†")
    h = j.inverse
    tau_bar = tau_jet(j).conj()
    pattern = _DAGGER_PATTERNS[bidegree]
    nab = nabla_anti(j, alpha, pattern)
    if bidegree == (1, 0):
        return -jeinsum("pk,kp->", h, nab) + jeinsum("pk,kp->", h, jeinsum("k,p->kp", tau_bar, alpha))
    t_bar = torsion_jet(j).conj()
    if bidegree == (2, 0):
        out = -jeinsum("pk,klp->l", h, nab)
        out = out + jeinsum("pk,klp->l", h, jeinsum("k,lp->klp", tau_bar, alpha))
        raised = jeinsum("ca,cd->ad", h, alpha)
        raised = jeinsum("db,ad->ab", h, raised)
        return out - 0.5 * jeinsum("lab,ab->l", t_bar, raised)
    out = -jeinsum("gj,jabg->ab", h, nab)
    out = out + jeinsum("gj,jabg->ab", h, jeinsum("j,abg->jabg", tau_bar, alpha))
    raised = jeinsum("gj,agd->ajd", h, alpha)
    raised = jeinsum("dm,ajd->ajm", h, raised)
    return out - 0.5 * jeinsum("bjm,ajm->ab", t_bar, raised)


# Ω and rescaling ----------------------------------------------------------


def omega_norm(j: MetricJet, omega: HolVolForm) -> np.ndarray:
    """‖Ω‖² = |c|² / det g."""
    return omega.abs_sq / j.metric.det


def omega_norm_jet(j: MetricJet, omega: HolVolForm) -> Jet:
    return jets.exp(-1.0 * j.log_det) * omega.abs_sq


def rescale_to_eta(j_omega: MetricJet, omega: HolVolForm) -> MetricJet:
    """η = ‖Ω‖_ω ω."""
    log_norm = -0.5 * j_omega.log_det
    log_norm = log_norm.add_value(np.log(abs(omega.c)))
    return MetricJet(jets.scale(jets.exp(log_norm), j_omega.jet))


def rescale_to_omega(j_eta: MetricJet, omega: HolVolForm) -> MetricJet:
    """Inverse of ``rescale_to_eta``, via ‖Ω‖_ω^{2−m} = ‖Ω‖²_η."""
    m = j_eta.m
    if m == 2:
        raise DegenerateRescalingError()
    log_norm_sq_eta = (-1.0 * j_eta.log_det).add_value(2 * np.log(abs(omega.c)))
    log_norm_omega = log_norm_sq_eta * (1.0 / (2 - m))
    return MetricJet(jets.scale(jets.exp(-1.0 * log_norm_omega), j_eta.jet))


# conformal change ---------------------------------------------------------


@dataclass(frozen=True)
class ConformalCheck:
    metric: MetricJet
    torsion_direct: np.ndarray
    torsion_predicted: np.ndarray
    curvature_direct: np.ndarray | None
    curvature_predicted: np.ndarray | None

    def residuals(self) -> tuple[float, float]:
        res_t = float(np.max(np.abs(self.torsion_direct - self.torsion_predicted), initial=0.0))
        if self.curvature_direct is None:
            return res_t, 0.0
        res_r = float(np.max(np.abs(self.curvature_direct - self.curvature_predicted), initial=0.0))
        return res_t, res_r


def conformal_change(j: MetricJet, f: Jet) -> ConformalCheck:
    """Metric e^f g together with directly computed and transformed T^l_{jk} and R_{k̄j l̄ q}.

    Torsion: T_f = T + f_j δ^l_k − f_k δ^l_j.
    Curvature: R_f = e^f (R − ∂_j∂_k̄ f · g_{l̄q}).
    """
    if f.rank != 0:
        raise DegreeError("conformal factor must be a scalar jet")
    order = min(j.order, f.order)
    j = j.truncate(order)
    f = f.truncate(order)
    new = MetricJet(jets.scale(jets.exp(f), j.jet))
    m = j.m
    eye = np.eye(m)
    df = f.holo().value
    t_old = torsion_upper_jet(j).value
    t_pred = t_old + np.einsum("...j,lk->...ljk", df, eye) - np.einsum("...k,lj->...ljk", df, eye)
    t_new = torsion_upper_jet(new).value
    if order < 2:
        return ConformalCheck(new, t_new, t_pred, None, None)
    r_old = curvature_lowered_jet(j).value
    ddf = f.holo().antiholo().value  # [k, j] = ∂_k̄ ∂_j f
    r_pred = np.exp(f.value)[..., None, None, None, None] * (
        r_old - np.einsum("...kj,...lq->...kjlq", ddf, j.jet.value)
    )
    r_new = curvature_lowered_jet(new).value
    return ConformalCheck(new, t_new, t_pred, r_new, r_pred)
