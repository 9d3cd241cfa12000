"""Pointwise exterior algebra of (p,q)-forms on C^m.

A ``Form`` stores a dense coefficient table ``coeff[..., j_1..j_q, k_1..k_p]``
(antiholomorphic block first) with

    Φ = 1/(p! q!) Σ coeff[J, K] dz^{k_1}∧…∧dz^{k_p}∧dzbar^{j_1}∧…∧dzbar^{j_q},

antisymmetric in each block.  Leading axes are batch axes (lattice sites), so
every operation here works pointwise on whole fields at once.

Components written the way the derivation writes them (e.g. ``T_{k̄jm}`` or
``Φ_{j̄1 k1 j̄2 k2}``) go through ``from_components`` / ``to_components`` with an index
pattern string of ``h`` (holomorphic) and ``b`` (antiholomorphic) letters; the
differentials are taken in reverse index order.  See CONVENTIONS.md.
"""

from __future__ import annotations

import itertools
import logging
import math
import string
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from hermflow.errors import DegreeError, PositivityError, SingularMetricError

logger = logging.getLogger(__name__)

MAX_DIMENSION = 6
_LETTERS = string.ascii_letters


def _perm_sign(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def _block_transpose(arr: np.ndarray, offset: int, perm: Sequence[int]) -> np.ndarray:
    axes = list(range(arr.ndim))
    n = len(perm)
    full = axes[:offset] + [offset + x for x in perm] + axes[offset + n:]
    return np.transpose(arr, full)


def _antisymmetrize(arr: np.ndarray, offset: int, n: int) -> np.ndarray:
    if n < 2:
        return arr
    out = np.zeros_like(arr)
    for perm in itertools.permutations(range(n)):
        out = out + _perm_sign(perm) * _block_transpose(arr, offset, perm)
    return out / math.factorial(n)


def _shuffle(arr: np.ndarray, offset: int, n1: int, n2: int) -> np.ndarray:
    """Signed sum over (n1, n2)-shuffles of the block starting at ``offset``."""
    if n1 == 0 or n2 == 0:
        return arr
    n = n1 + n2
    out = np.zeros_like(arr)
    for pos in itertools.combinations(range(n), n1):
        rest = [i for i in range(n) if i not in pos]
        perm = [0] * n
        for k, p in enumerate(pos):
            perm[p] = k
        for k, p in enumerate(rest):
            perm[p] = n1 + k
        sign = (-1) ** sum(p - k for k, p in enumerate(pos))
        out = out + sign * _block_transpose(arr, offset, perm)
    return out


def _pattern_layout(pattern: str) -> tuple[int, list[int]]:
    """Sign and axis order taking a written index pattern to canonical storage."""
    if set(pattern) - {"h", "b"}:
        raise DegreeError(f"index pattern {pattern!r} must use only 'h' and 'b'")
    diff = list(range(len(pattern)))[::-1]
    holo = [i for i in diff if pattern[i] == "h"]
    anti = [i for i in diff if pattern[i] == "b"]
    inversions = 0
    seen_anti = 0
    for i in diff:
        if pattern[i] == "b":
            seen_anti += 1
        else:
            inversions += seen_anti
    return (-1) ** inversions, anti + holo


@dataclass(frozen=True)
class Form:
    m: int
    p: int
    q: int
    coeff: np.ndarray

    def __post_init__(self):
        if not 1 <= self.m <= MAX_DIMENSION:
            raise DegreeError(f"dimension m={self.m} outside 1..{MAX_DIMENSION}")
        if self.p < 0 or self.q < 0:
            raise DegreeError(f"negative bidegree ({self.p},{self.q})")
        if self.coeff.shape[self.coeff.ndim - self.degree:] != (self.m,) * self.degree:
            raise DegreeError(f"coefficient shape {self.coeff.shape} does not fit ({self.p},{self.q}), m={self.m}")

    @property
    def degree(self) -> int:
        return self.p + self.q

    @property
    def batch_ndim(self) -> int:
        return self.coeff.ndim - self.degree

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeff.shape[: self.batch_ndim]

    # construction ---------------------------------------------------------

    @classmethod
    def zeros(cls, m: int, p: int, q: int, batch: tuple[int, ...] = ()) -> "Form":
        return cls(m, p, q, np.zeros(tuple(batch) + (m,) * (p + q), dtype=complex))

    @classmethod
    def scalar(cls, m: int, value) -> "Form":
        return cls(m, 0, 0, np.asarray(value, dtype=complex))

    @classmethod
    def basis(cls, m: int, holo: Sequence[int], anti: Sequence[int]) -> "Form":
        """The form dz^{holo[0]}∧…∧dzbar^{anti[0]}∧… (0-based indices)."""
        p, q = len(holo), len(anti)
        coeff = np.zeros((m,) * (p + q), dtype=complex)
        if len(set(holo)) == p and len(set(anti)) == q:
            for sk in itertools.permutations(range(p)):
                for sj in itertools.permutations(range(q)):
                    idx = tuple(anti[i] for i in sj) + tuple(holo[i] for i in sk)
                    coeff[idx] = _perm_sign(sk) * _perm_sign(sj)
        return cls(m, p, q, coeff)

    @classmethod
    def from_components(cls, m: int, pattern: str, table: np.ndarray) -> "Form":
        """Build a form from components indexed in the derivation's order.

        ``pattern`` has one letter per trailing axis of ``table``: ``h`` for a
        holomorphic index, ``b`` for an antiholomorphic one.  The table is
        antisymmetrized within each block on the way in.
        """
        table = np.asarray(table, dtype=complex)
        sign, order = _pattern_layout(pattern)
        nb = table.ndim - len(pattern)
        coeff = sign * np.transpose(table, list(range(nb)) + [nb + i for i in order])
        p, q = pattern.count("h"), pattern.count("b")
        coeff = _antisymmetrize(coeff, nb, q)
        coeff = _antisymmetrize(coeff, nb + q, p)
        return cls(m, p, q, coeff)

    def to_components(self, pattern: str) -> np.ndarray:
        if (pattern.count("h"), pattern.count("b")) != (self.p, self.q):
            raise DegreeError(f"pattern {pattern!r} does not match bidegree ({self.p},{self.q})")
        sign, order = _pattern_layout(pattern)
        nb = self.batch_ndim
        back = [nb + order.index(i) for i in range(len(pattern))]
        return sign * np.transpose(self.coeff, list(range(nb)) + back)

    # algebra --------------------------------------------------------------

    def _check_same(self, other: "Form") -> None:
        if (self.m, self.p, self.q) != (other.m, other.p, other.q):
            raise DegreeError(
                f"cannot combine ({self.p},{self.q}) with ({other.p},{other.q}) forms"
            )

    def __add__(self, other: "Form") -> "Form":
        self._check_same(other)
        return Form(self.m, self.p, self.q, self.coeff + other.coeff)

    def __sub__(self, other: "Form") -> "Form":
        self._check_same(other)
        return Form(self.m, self.p, self.q, self.coeff - other.coeff)

    def __neg__(self) -> "Form":
        return Form(self.m, self.p, self.q, -self.coeff)

    def __mul__(self, factor: complex) -> "Form":
        return Form(self.m, self.p, self.q, factor * self.coeff)

    __rmul__ = __mul__

    def scale(self, values: np.ndarray) -> "Form":
        """Multiply by a batch-shaped scalar field."""
        values = np.asarray(values)
        return Form(self.m, self.p, self.q, self.coeff * values.reshape(values.shape + (1,) * self.degree))

    def conjugate(self) -> "Form":
        nb = self.batch_ndim
        axes = list(range(nb)) + list(range(nb + self.q, nb + self.degree)) + list(range(nb, nb + self.q))
        coeff = (-1) ** (self.p * self.q) * np.conj(np.transpose(self.coeff, axes))
        return Form(self.m, self.q, self.p, coeff)

    def is_real(self, tol: float = 1e-12) -> bool:
        if self.p != self.q:
            return False
        return sup_norm(self - self.conjugate()) <= tol * max(1.0, sup_norm(self))

    def top(self) -> np.ndarray:
        """Coefficient of dz^1∧…∧dz^m∧dzbar^1∧…∧dzbar^m."""
        if (self.p, self.q) != (self.m, self.m):
            raise DegreeError("top coefficient needs an (m,m)-form")
        idx = tuple(range(self.m)) * 2
        return self.coeff[(Ellipsis,) + idx]


def random_form(m: int, p: int, q: int, rng: np.random.Generator, real: bool = False) -> Form:
    shape = (m,) * (p + q)
    coeff = rng.uniform(-1, 1, shape) + 1j * rng.uniform(-1, 1, shape)
    coeff = _antisymmetrize(_antisymmetrize(coeff, 0, q), q, p)
    form = Form(m, p, q, coeff)
    if real:
        if p != q:
            raise DegreeError("only (p,p)-forms can be real")
        form = (form + form.conjugate()) * 0.5
    return form


def sup_norm(form: Form) -> float:
    if form.coeff.size == 0:
        return 0.0
    return float(np.max(np.abs(form.coeff)))


@dataclass(frozen=True)
class HermitianMetric:
    """g[..., k, j] = g_{k̄j}.  Positive definite and Hermitian at every site."""

    g: np.ndarray
    check: bool = True

    def __post_init__(self):
        g = np.asarray(self.g, dtype=complex)
        object.__setattr__(self, "g", g)
        if g.ndim < 2 or g.shape[-1] != g.shape[-2]:
            raise DegreeError(f"metric must be square, got shape {g.shape}")
        if self.check:
            scale = max(1.0, float(np.max(np.abs(g))))
            if not np.allclose(g, np.conj(np.swapaxes(g, -1, -2)), rtol=0, atol=1e-12 * scale):
                raise PositivityError("metric is not Hermitian")
            lowest = float(np.min(np.linalg.eigvalsh(g)))
            if lowest <= 0:
                raise PositivityError(f"metric not positive definite (min eigenvalue {lowest:.3e})")

    @property
    def m(self) -> int:
        return self.g.shape[-1]

    @cached_property
    def inverse(self) -> np.ndarray:
        """h[..., j, k] = g^{j k̄}."""
        try:
            return np.linalg.inv(self.g)
        except np.linalg.LinAlgError as exc:
            raise SingularMetricError() from exc

    @cached_property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.g).real

    def kahler_form(self) -> Form:
        """η = i g_{k̄j} dz^j∧dzbar^k."""
        return Form(self.m, 1, 1, 1j * self.g)


def wedge(a: Form, b: Form) -> Form:
    if a.m != b.m:
        raise DegreeError("wedge of forms in different dimensions")
    m, p, q = a.m, a.p + b.p, a.q + b.q
    if p > m or q > m:
        return Form.zeros(m, p, q, np.broadcast_shapes(a.batch_shape, b.batch_shape))
    letters = iter(_LETTERS)
    ja = "".join(next(letters) for _ in range(a.q))
    ka = "".join(next(letters) for _ in range(a.p))
    jb = "".join(next(letters) for _ in range(b.q))
    kb = "".join(next(letters) for _ in range(b.p))
    prod = np.einsum(f"...{ja}{ka},...{jb}{kb}->...{ja}{jb}{ka}{kb}", a.coeff, b.coeff)
    nb = prod.ndim - p - q
    prod = _shuffle(prod, nb, a.q, b.q)
    prod = _shuffle(prod, nb + q, a.p, b.p)
    return Form(m, p, q, (-1) ** (a.q * b.p) * prod)


def wedge_differentials(family: Form, anti: bool = False) -> Form:
    """Σ_a dz^a ∧ F_a (or dzbar^a ∧ F_a); the last batch axis of ``family`` indexes a."""
    m = family.m
    if family.batch_ndim < 1 or family.batch_shape[-1] != m:
        raise DegreeError("family of forms must carry the differential index as its last batch axis")
    dz = Form(m, 0, 1, np.eye(m)) if anti else Form(m, 1, 0, np.eye(m))
    out = wedge(dz, family)
    return Form(m, out.p, out.q, out.coeff.sum(axis=out.batch_ndim - 1))


def power(eta: Form, k: int) -> Form:
    out = Form.scalar(eta.m, np.ones(eta.batch_shape))
    for _ in range(k):
        out = wedge(out, eta)
    return out


def _lambda_once(g: HermitianMetric, phi: Form) -> Form:
    p, q = phi.p, phi.q
    js = _LETTERS[:q]
    ks = _LETTERS[q:q + p]
    spec = f"...{js}{ks},...{ks[-1]}{js[-1]}->...{js[:-1]}{ks[:-1]}"
    coeff = (-1) ** (q - 1) * (-1j) * np.einsum(spec, phi.coeff, g.inverse)
    return Form(phi.m, p - 1, q - 1, coeff)


def lambda_op(g: HermitianMetric, phi: Form, q: int = 1) -> Form:
    """Λ^q: q-fold contraction with g^{k j̄}; adjoint of wedging with η."""
    if q > min(phi.p, phi.q):
        raise DegreeError("contraction exceeds degree")
    for _ in range(q):
        phi = _lambda_once(g, phi)
    return phi


def inner(g: HermitianMetric, a: Form, b: Form) -> np.ndarray:
    """Pointwise Hermitian inner product, normalized by 1/(p! q!).

    Pinned so that Λ^pΦ = ⟨Φ, η^p⟩ and ⟨vol, vol⟩ = 1.
    """
    if (a.p, a.q) != (b.p, b.q):
        raise DegreeError("inner product of forms of different bidegree")
    h = g.inverse
    letters = iter(_LETTERS)
    js = [next(letters) for _ in range(a.q)]
    ks = [next(letters) for _ in range(a.p)]
    ls = [next(letters) for _ in range(a.q)]
    ms = [next(letters) for _ in range(a.p)]
    subs = ["..." + "".join(js + ks)]
    operands = [a.coeff]
    for j, l in zip(js, ls):
        subs.append(f"...{l}{j}")
        operands.append(h)
    for k, mm in zip(ks, ms):
        subs.append(f"...{k}{mm}")
        operands.append(h)
    subs.append("..." + "".join(ls + ms))
    operands.append(np.conj(b.coeff))
    value = np.einsum(",".join(subs) + "->...", *operands, optimize=True)
    return value / (math.factorial(a.p) * math.factorial(a.q))


def inner_norm(g: HermitianMetric, phi: Form) -> np.ndarray:
    """Tensor norm: the full g-contraction of the components, p! q! ⟨Φ, Φ⟩.

    This is the norm behind |T|² and |τ|², so that Λ³(iT∧T̄) = 6|τ|² − 3|T|².
    """
    return (math.factorial(phi.p) * math.factorial(phi.q) * inner(g, phi, phi)).real


def volume_form(g: HermitianMetric) -> Form:
    return power(g.kahler_form(), g.m) * (1.0 / math.factorial(g.m))


def hodge_star_brute(g: HermitianMetric, phi: Form) -> Form:
    """Complex-linear star, (p,q) -> (m−q, m−p), defined by α∧⋆Φ = ⟨α, Φ̄⟩ vol.

    Solved against every basis test form α.
    """
    m = phi.m
    ap, aq = phi.q, phi.p
    vol_top = volume_form(g).top()
    target = phi.conjugate()
    out = Form.zeros(m, m - ap, m - aq, np.broadcast_shapes(phi.batch_shape, g.g.shape[:-2]))
    for holo in itertools.combinations(range(m), ap):
        for anti in itertools.combinations(range(m), aq):
            alpha = Form.basis(m, holo, anti)
            dual = Form.basis(
                m,
                [i for i in range(m) if i not in holo],
                [i for i in range(m) if i not in anti],
            )
            sign = wedge(alpha, dual).top()
            out = out + dual.scale(inner(g, alpha, target) * vol_top / sign)
    return out


STAR_SHAPES: dict[str, tuple[int, int, int]] = {
    "alpha": (1, 1, 2),
    "Phi": (2, 2, 3),
    "Psi": (3, 3, 4),
    "tau": (1, 0, 2),
    "T": (2, 1, 3),
}


def _check_shape(g: HermitianMetric, shape: str, payload: Form) -> int:
    if shape not in STAR_SHAPES:
        raise DegreeError(f"unknown star shape {shape!r}")
    p, q, min_m = STAR_SHAPES[shape]
    if g.m < min_m:
        raise DegreeError(f"shape {shape} needs m >= {min_m}, got m={g.m}")
    if (payload.p, payload.q) != (p, q):
        raise DegreeError(f"shape {shape} needs a ({p},{q}) payload")
    return min_m


def star_shape_input(g: HermitianMetric, shape: str, payload: Form) -> Form:
    """payload ∧ η^{m−k} for the given shape."""
    min_m = _check_shape(g, shape, payload)
    return wedge(payload, power(g.kahler_form(), g.m - min_m))


def hodge_star_closed(g: HermitianMetric, shape: str, payload: Form) -> Form:
    """Closed-form ⋆ of payload ∧ η^{m−k} for the five supported shapes."""
    min_m = _check_shape(g, shape, payload)
    m = g.m
    eta = g.kahler_form()
    fact = math.factorial(m - min_m)
    if shape == "alpha":
        return fact * (-payload + wedge(lambda_op(g, payload), eta))
    if shape == "Phi":
        return fact * (-lambda_op(g, payload) + 0.5 * wedge(lambda_op(g, payload, 2), eta))
    if shape == "Psi":
        return fact * (-0.5 * lambda_op(g, payload, 2) + (1.0 / 6.0) * wedge(lambda_op(g, payload, 3), eta))
    if shape == "tau":
        return -1j * fact * wedge(payload, eta)
    return 1j * fact * (-wedge(lambda_op(g, payload), eta) + payload)
