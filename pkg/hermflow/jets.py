"""Truncated Taylor jets of tensor-valued functions in Wirtinger variables.

A jet of order r stores all derivatives up to order r of a tensor field at a point (or at
every site of a lattice).  Derivative directions run over the 2m Wirtinger variables:
index a < m is the holomorphic derivative d/dz^a, index m + a is d/dzbar^a.

``terms[k]`` has shape ``batch + (2m,) * k + tensor_shape``.  The k derivative axes are
symmetric.  Products follow the Leibniz rule, so every derived quantity (inverse metric,
Christoffel symbols, curvature, torsion, ...) is itself a jet of lower order.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from hermflow.errors import JetOrderError

_DERIV = string.ascii_uppercase


@dataclass(frozen=True)
class Jet:
    m: int
    rank: int
    terms: tuple[np.ndarray, ...]

    @property
    def order(self) -> int:
        return len(self.terms) - 1

    @property
    def nvar(self) -> int:
        return 2 * self.m

    @property
    def value(self) -> np.ndarray:
        return self.terms[0]

    @property
    def batch_ndim(self) -> int:
        return self.terms[0].ndim - self.rank

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.terms[0].shape[: self.batch_ndim]

    @property
    def tensor_shape(self) -> tuple[int, ...]:
        return self.terms[0].shape[self.batch_ndim:]

    # construction ---------------------------------------------------------

    @classmethod
    def constant(cls, value: np.ndarray, m: int, rank: int, order: int = 0) -> "Jet":
        value = np.asarray(value, dtype=complex)
        terms = [value]
        nb = value.ndim - rank
        for k in range(1, order + 1):
            shape = value.shape[:nb] + (2 * m,) * k + value.shape[nb:]
            terms.append(np.zeros(shape, dtype=complex))
        return cls(m, rank, tuple(terms))

    @classmethod
    def integrate(cls, value: np.ndarray, gradient: "Jet") -> "Jet":
        """Jet whose value is ``value`` and whose gradient jet is ``gradient``.

        ``gradient`` carries the derivative direction as its first tensor axis.
        """
        value = np.asarray(value, dtype=complex)
        return cls(gradient.m, gradient.rank - 1, (value,) + gradient.terms)

    # bookkeeping ----------------------------------------------------------

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetOrderError(f"jet of order {self.order} cannot supply order {order}")
        return Jet(self.m, self.rank, self.terms[: order + 1])

    def _deriv_axis(self, k: int, i: int) -> int:
        return self.batch_ndim + i

    def _tensor_axis(self, k: int, i: int) -> int:
        return self.batch_ndim + k + i

    # arithmetic -----------------------------------------------------------

    def __add__(self, other: "Jet") -> "Jet":
        order = min(self.order, other.order)
        return Jet(self.m, self.rank, tuple(a + b for a, b in zip(self.terms[: order + 1], other.terms[: order + 1])))

    def __sub__(self, other: "Jet") -> "Jet":
        return self + (-other)

    def __neg__(self) -> "Jet":
        return Jet(self.m, self.rank, tuple(-t for t in self.terms))

    def __mul__(self, factor: complex) -> "Jet":
        return Jet(self.m, self.rank, tuple(factor * t for t in self.terms))

    __rmul__ = __mul__

    def add_value(self, value: np.ndarray) -> "Jet":
        """Shift the value by a constant tensor."""
        return Jet(self.m, self.rank, (self.terms[0] + value,) + self.terms[1:])

    # differentiation ------------------------------------------------------

    def grad(self) -> "Jet":
        if self.order < 1:
            raise JetOrderError("gradient needs a jet of order >= 1")
        return Jet(self.m, self.rank + 1, self.terms[1:])

    def _take_direction(self, index: np.ndarray) -> "Jet":
        g = self.grad()
        terms = tuple(np.take(t, index, axis=g._tensor_axis(k, 0)) for k, t in enumerate(g.terms))
        return Jet(self.m, g.rank, terms)

    def holo(self) -> "Jet":
        """Holomorphic gradient; new first tensor axis a means d/dz^a."""
        return self._take_direction(np.arange(self.m))

    def antiholo(self) -> "Jet":
        """Antiholomorphic gradient; new first tensor axis a means d/dzbar^a."""
        return self._take_direction(np.arange(self.m, 2 * self.m))

    def conj(self) -> "Jet":
        """Complex conjugate.  Conjugation exchanges d/dz and d/dzbar."""
        swap = np.concatenate([np.arange(self.m, 2 * self.m), np.arange(self.m)])
        terms = []
        for k, t in enumerate(self.terms):
            t = np.conj(t)
            for i in range(k):
                t = np.take(t, swap, axis=self._deriv_axis(k, i))
            terms.append(t)
        return Jet(self.m, self.rank, tuple(terms))

    # tensor algebra -------------------------------------------------------

    def transform(self, spec: str) -> "Jet":
        """Apply a one-operand einsum ``spec`` (tensor letters only) to every term."""
        lhs, out = spec.split("->")
        terms = tuple(
            np.einsum(f"...{_DERIV[:k]}{lhs}->...{_DERIV[:k]}{out}", t) for k, t in enumerate(self.terms)
        )
        return Jet(self.m, len(out), terms)

    def real_part(self) -> "Jet":
        return (self + self.conj()) * 0.5


def jeinsum(spec: str, a: Jet, b: Jet) -> Jet:
    """Leibniz-rule product of two jets with tensor contraction ``spec``.

    ``spec`` names tensor axes only, e.g. ``"ij,ajk->aik"``.  The result has the order of
    the shorter operand.
    """
    lhs, out = spec.split("->")
    sa, sb = lhs.split(",")
    order = min(a.order, b.order)
    terms = []
    for k in range(order + 1):
        letters = _DERIV[:k]
        total = None
        for r in range(k + 1):
            for pos in itertools.combinations(range(k), r):
                da = "".join(letters[i] for i in pos)
                db = "".join(letters[i] for i in range(k) if i not in pos)
                t = np.einsum(f"...{da}{sa},...{db}{sb}->...{letters}{out}", a.terms[r], b.terms[k - r])
                total = t if total is None else total + t
        terms.append(total)
    return Jet(a.m, len(out), tuple(terms))


def concat(parts: Sequence[Jet]) -> Jet:
    """Concatenate jets along their first tensor axis."""
    order = min(p.order for p in parts)
    first = parts[0]
    terms = tuple(
        np.concatenate([p.terms[k] for p in parts], axis=first._tensor_axis(k, 0)) for k in range(order + 1)
    )
    return Jet(first.m, first.rank, terms)


def _grow(value: np.ndarray, m: int, rank: int, order: int, step: Callable[[Jet, int], Jet]) -> Jet:
    jet = Jet.constant(value, m, rank, 0)
    for k in range(1, order + 1):
        jet = Jet.integrate(value, step(jet, k))
    return jet


def inverse(g: Jet) -> Jet:
    """Matrix inverse; d(g^-1) = -g^-1 (dg) g^-1, grown one order at a time."""
    h0 = np.linalg.inv(g.value)
    dg = g.grad()

    def step(h: Jet, k: int) -> Jet:
        left = jeinsum("ij,ajk->aik", h, dg.truncate(k - 1))
        return -jeinsum("aik,kl->ail", left, h)

    return _grow(h0, g.m, 2, g.order, step)


def log_det(g: Jet, h: Jet | None = None) -> Jet:
    """log det g for a positive Hermitian matrix jet (Jacobi's formula)."""
    h = inverse(g) if h is None else h
    _, logabs = np.linalg.slogdet(g.value)
    return Jet.integrate(logabs.astype(complex), jeinsum("ji,aij->a", h, g.grad()))


def exp(u: Jet) -> Jet:
    f0 = np.exp(u.value)
    du = u.grad()
    return _grow(f0, u.m, 0, u.order, lambda f, k: jeinsum(",a->a", f, du.truncate(k - 1)))


def reciprocal(u: Jet) -> Jet:
    r0 = 1.0 / u.value
    du = u.grad()

    def step(r: Jet, k: int) -> Jet:
        return -jeinsum(",a->a", jeinsum(",->", r, r), du.truncate(k - 1))

    return _grow(r0, u.m, 0, u.order, step)


def log(u: Jet) -> Jet:
    return Jet.integrate(np.log(u.value), jeinsum(",a->a", reciprocal(u).truncate(u.order - 1), u.grad()))


def scale(f: Jet, t: Jet) -> Jet:
    """Scalar jet times tensor jet."""
    letters = "cdefghijkl"[: t.rank]
    return jeinsum(f",{letters}->{letters}", f, t)


def symmetric_random(rng: np.random.Generator, nvar: int, k: int, tensor_shape: tuple[int, ...]) -> np.ndarray:
    """Random complex array symmetric in its first k axes (exactly, not up to rounding)."""
    out = np.zeros((nvar,) * k + tensor_shape, dtype=complex)
    for idx in itertools.combinations_with_replacement(range(nvar), k):
        draw = rng.uniform(-1, 1, tensor_shape) + 1j * rng.uniform(-1, 1, tensor_shape)
        for perm in set(itertools.permutations(idx)):
            out[perm] = draw
    return out
