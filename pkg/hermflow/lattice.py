"""Periodic fields on the flat torus C^m / (Z + iZ)^m.

Real coordinate axis r < m is x^{r+1}, axis r >= m is y^{r-m+1}; every axis has
period 1.  A field array starts with 2m lattice axes, extent n along active axes
and extent 1 along reduced ones, followed by its tensor axes.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from hermflow.errors import DegreeError, PositivityError, StencilError
from hermflow.forms import Form, HermitianMetric
from hermflow.geometry import MetricJet, del_jet
from hermflow.jets import Jet

logger = logging.getLogger(__name__)

# f'(x) ≈ Σ c f(x + s h) / h, fourth order
_STENCIL = ((-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0))


def parse_reduction(m: int, text: str | None) -> tuple[int, ...]:
    """``"x1,y1"`` -> real axis indices; empty, ``None`` or ``"none"`` -> all axes."""
    if text is None or text.strip().lower() in ("", "none", "all"):
        return tuple(range(2 * m))
    axes = []
    for token in text.split(","):
        token = token.strip().lower()
        if len(token) < 2 or token[0] not in "xy" or not token[1:].isdigit():
            raise DegreeError(f"bad reduction axis {token!r}; use names like x1, y2")
        index = int(token[1:]) - 1
        if not 0 <= index < m:
            raise DegreeError(f"axis {token} outside dimension m={m}")
        axes.append(index if token[0] == "x" else m + index)
    return tuple(sorted(set(axes)))


def axis_name(m: int, axis: int) -> str:
    return f"x{axis + 1}" if axis < m else f"y{axis - m + 1}"


@dataclass(frozen=True)
class TorusLattice:
    m: int
    n: int
    active: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise StencilError(f"lattice needs an even n >= 8, got n={self.n}")
        active = tuple(sorted(set(self.active))) if self.active else tuple(range(2 * self.m))
        if any(not 0 <= r < 2 * self.m for r in active):
            raise DegreeError(f"active axes {active} outside 0..{2 * self.m - 1}")
        object.__setattr__(self, "active", active)

    @classmethod
    def from_reduction(cls, m: int, n: int, reduction: str | None) -> "TorusLattice":
        return cls(m, n, parse_reduction(m, reduction))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.n if r in self.active else 1 for r in range(2 * self.m))

    @property
    def ndim(self) -> int:
        return 2 * self.m

    @property
    def sites(self) -> int:
        return int(np.prod(self.shape))

    @property
    def reduction(self) -> str:
        return ",".join(axis_name(self.m, r) for r in self.active)

    def coordinates(self) -> list[np.ndarray]:
        """One broadcastable coordinate array per real axis."""
        coords = []
        for r in range(self.ndim):
            shape = [1] * self.ndim
            if r in self.active:
                shape[r] = self.n
                coords.append((np.arange(self.n) / self.n).reshape(shape))
            else:
                coords.append(np.zeros(shape))
        return coords

    def check_stencil(self, order: int) -> None:
        # k nested radius-2 stencils reach 4k + 1 points per axis
        width = 4 * order + 1
        if self.n < width:
            raise StencilError(f"stencil exceeds grid: order {order} needs n >= {width}, got n={self.n}")

    def check_field(self, values: np.ndarray) -> None:
        if values.shape[: self.ndim] != self.shape:
            raise DegreeError(f"field shape {values.shape} does not start with lattice shape {self.shape}")


# differencing -------------------------------------------------------------


def real_derivative(lat: TorusLattice, values: np.ndarray, axis: int) -> np.ndarray:
    if axis not in lat.active:
        return np.zeros_like(values)
    out = np.zeros_like(values)
    for shift, weight in _STENCIL:
        out = out + weight * np.roll(values, -shift, axis=axis)
    return out / lat.h


def wirtinger(lat: TorusLattice, values: np.ndarray, direction: int) -> np.ndarray:
    """∂/∂z^a for direction a < m, ∂/∂zbar^a for direction m + a."""
    m = lat.m
    a = direction % m
    dx = real_derivative(lat, values, a)
    dy = real_derivative(lat, values, m + a)
    sign = -1j if direction < m else 1j
    return 0.5 * (dx + sign * dy)


def field_jet(lat: TorusLattice, values: np.ndarray, rank: int, order: int) -> Jet:
    """Finite-difference jet of a lattice field; the batch shape is the lattice shape."""
    values = np.asarray(values, dtype=complex)
    lat.check_field(values)
    if order > 0:
        lat.check_stencil(order)
    nvar = 2 * lat.m
    tensor_shape = values.shape[lat.ndim:]
    cache: dict[tuple[int, ...], np.ndarray] = {(): values}

    def derivative(idx: tuple[int, ...]) -> np.ndarray:
        if idx not in cache:
            cache[idx] = wirtinger(lat, derivative(idx[1:]), idx[0])
        return cache[idx]

    terms = [values]
    lead = (slice(None),) * lat.ndim
    for k in range(1, order + 1):
        arr = np.empty(lat.shape + (nvar,) * k + tensor_shape, dtype=complex)
        for idx in itertools.combinations_with_replacement(range(nvar), k):
            d = derivative(idx)
            for perm in set(itertools.permutations(idx)):
                arr[lead + perm] = d
        terms.append(arr)
    return Jet(lat.m, rank, tuple(terms))


def metric_jet(lat: TorusLattice, g: np.ndarray, order: int) -> MetricJet:
    return MetricJet(field_jet(lat, g, 2, order))


@dataclass(frozen=True)
class MetricField:
    """Per-site metric g[..., k, j] = g_{k̄j} on a lattice, positive at every site."""

    lattice: TorusLattice
    g: np.ndarray
    time: float = 0.0
    tag: str = ""

    def __post_init__(self):
        g = np.asarray(self.g, dtype=complex)
        object.__setattr__(self, "g", g)
        self.lattice.check_field(g)
        if g.shape[self.lattice.ndim:] != (self.lattice.m, self.lattice.m):
            raise DegreeError(f"metric field needs trailing shape ({self.lattice.m},{self.lattice.m})")
        lowest = min_eigenvalue(g)
        if not lowest > 0:
            raise PositivityError(f"metric field not positive definite (min eigenvalue {lowest:.3e})")

    def metric(self) -> HermitianMetric:
        return HermitianMetric(self.g, check=False)

    def jet(self, order: int) -> MetricJet:
        return metric_jet(self.lattice, self.g, order)

    def kahler_form(self) -> Form:
        return self.metric().kahler_form()

    def replace(self, g: np.ndarray, time: float | None = None, tag: str | None = None) -> "MetricField":
        return MetricField(self.lattice, g, self.time if time is None else time, self.tag if tag is None else tag)


def min_eigenvalue(g: np.ndarray) -> float:
    """Smallest eigenvalue over all sites; NaN if any entry is not finite."""
    if not np.all(np.isfinite(g)):
        return float("nan")
    herm = 0.5 * (g + np.conj(np.swapaxes(g, -1, -2)))
    return float(np.min(np.linalg.eigvalsh(herm)))


# quadrature ---------------------------------------------------------------


def integrate(lat: TorusLattice, values: np.ndarray) -> np.ndarray:
    """Trapezoidal rule on the unit-volume torus; exact below the Nyquist degree."""
    values = np.asarray(values)
    lat.check_field(values)
    return np.mean(values, axis=tuple(range(lat.ndim)))


def max_norm(values: np.ndarray) -> float:
    values = np.asarray(values)
    if values.size == 0:
        return 0.0
    return float(np.max(np.abs(values)))


# forms on the lattice -----------------------------------------------------


def del_(lat: TorusLattice, form: Form) -> Form:
    coeff = field_jet(lat, form.coeff, form.degree, 1)
    return Form(form.m, form.p + 1, form.q, del_jet(coeff, form.p, form.q).value)


def delbar(lat: TorusLattice, form: Form) -> Form:
    coeff = field_jet(lat, form.coeff, form.degree, 1)
    return Form(form.m, form.p, form.q + 1, del_jet(coeff, form.p, form.q, anti=True).value)


def ddbar(lat: TorusLattice, form: Form) -> Form:
    """∂∂̄ of a form field."""
    return del_(lat, delbar(lat, form))


MixedForm = Mapping[tuple[int, int], Form]


def exterior_d(lat: TorusLattice, form: Form | MixedForm) -> dict[tuple[int, int], Form]:
    """d = ∂ + ∂̄ on a (possibly mixed-degree) form field, grouped by bidegree."""
    parts: Iterable[Form] = form.values() if isinstance(form, Mapping) else [form]
    out: dict[tuple[int, int], Form] = {}
    for piece in parts:
        for image in (del_(lat, piece), delbar(lat, piece)):
            key = (image.p, image.q)
            out[key] = out[key] + image if key in out else image
    return out


def mixed_sup_norm(form: MixedForm) -> float:
    return max((max_norm(f.coeff) for f in form.values()), default=0.0)


# trigonometric fields -----------------------------------------------------


@dataclass(frozen=True)
class TrigMode:
    wavevector: tuple[int, ...]
    coeff: np.ndarray
    phase: float = 0.0


@dataclass(frozen=True)
class TrigField:
    """Σ coeff · cos(2π k·x + phase): band-limited field with exact Wirtinger derivatives."""

    m: int
    tensor_shape: tuple[int, ...]
    modes: tuple[TrigMode, ...] = field(default_factory=tuple)

    def _wirtinger_symbol(self, mode: TrigMode) -> np.ndarray:
        k = np.asarray(mode.wavevector, dtype=float)
        kx, ky = k[: self.m], k[self.m:]
        return np.concatenate([0.5 * (kx - 1j * ky), 0.5 * (kx + 1j * ky)])

    def _phase(self, lat: TorusLattice, mode: TrigMode) -> np.ndarray:
        theta = np.full(lat.shape, mode.phase, dtype=float)
        for r, x in enumerate(lat.coordinates()):
            if mode.wavevector[r]:
                if r not in lat.active:
                    raise DegreeError(f"mode varies along reduced axis {axis_name(self.m, r)}")
                theta = theta + 2 * np.pi * mode.wavevector[r] * x
        return theta

    def sample(self, lat: TorusLattice) -> np.ndarray:
        return self.jet(lat, 0).value

    def jet(self, lat: TorusLattice, order: int) -> Jet:
        nvar = 2 * self.m
        terms = [np.zeros(lat.shape + (nvar,) * k + self.tensor_shape, dtype=complex) for k in range(order + 1)]
        for mode in self.modes:
            theta = self._phase(lat, mode)
            plus, minus = np.exp(1j * theta), np.exp(-1j * theta)
            kappa = 2j * np.pi * self._wirtinger_symbol(mode)
            fp = np.ones((), dtype=complex)
            fm = np.ones((), dtype=complex)
            coeff = np.asarray(mode.coeff, dtype=complex)
            for k in range(order + 1):
                terms[k] = terms[k] + 0.5 * (
                    np.multiply.outer(plus, np.multiply.outer(fp, coeff))
                    + np.multiply.outer(minus, np.multiply.outer(fm, coeff))
                )
                fp = np.multiply.outer(fp, kappa)
                fm = np.multiply.outer(fm, -kappa)
        return Jet(self.m, len(self.tensor_shape), tuple(terms))


def random_trig_field(
    m: int,
    rng: np.random.Generator,
    active: Iterable[int],
    tensor_shape: tuple[int, ...] = (),
    n_modes: int = 3,
    amplitude: float = 0.1,
    max_wave: int = 1,
    hermitian: bool = False,
    real: bool = False,
    offset: np.ndarray | None = None,
) -> TrigField:
    """Seeded low-frequency field along the given real axes.

    ``hermitian`` draws Hermitian matrix coefficients, ``real`` real ones;
    ``offset`` adds a constant mode (e.g. the identity for metrics).
    """
    active = tuple(active)
    modes = []
    if offset is not None:
        modes.append(TrigMode((0,) * (2 * m), np.asarray(offset, dtype=complex)))
    for _ in range(n_modes):
        k = [0] * (2 * m)
        while not any(k):
            for r in active:
                k[r] = int(rng.integers(-max_wave, max_wave + 1))
        coeff = rng.uniform(-1, 1, tensor_shape)
        if not real:
            coeff = coeff + 1j * rng.uniform(-1, 1, tensor_shape)
        if hermitian:
            coeff = 0.5 * (coeff + np.conj(np.swapaxes(coeff, -1, -2)))
        modes.append(TrigMode(tuple(k), amplitude * coeff, float(rng.uniform(0, 2 * np.pi))))
    return TrigField(m, tuple(tensor_shape), tuple(modes))
