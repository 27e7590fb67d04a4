"""Z^n-invariant Tonelli Lagrangians on the cover R^n and their Legendre duals.

Points and velocities are float arrays whose trailing axis has length ``dim``;
for one-dimensional models bare scalars and 1-D arrays of coordinates are
accepted as well.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import InputError, ResolutionError

KINDS = ("kinetic", "mechanical", "custom")


def as_points(a, dim: int) -> np.ndarray:
    """Coerce ``a`` to an array with trailing axis ``dim``."""
    a = np.asarray(a, dtype=float)
    if dim == 1 and (a.ndim == 0 or a.shape[-1] != 1):
        a = a[..., None]
    if a.shape[-1] != dim:
        raise InputError(f"expected trailing axis of length {dim}, got shape {a.shape}")
    return a


def reduce_mod(x: np.ndarray) -> np.ndarray:
    """Representative in the fundamental domain [0, 1)^n."""
    r = np.mod(x, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(r >= 1.0, 0.0, r)


# ---------------------------------------------------------------- potentials


@dataclass(frozen=True)
class FourierPotential:
    """V(x) = sum a cos(2 pi k.x) + b sin(2 pi k.x) over the listed modes."""

    terms: tuple  # ((k_1, ..., k_n), a, b) triples

    @property
    def dim(self) -> int:
        return len(self.terms[0][0]) if self.terms else 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[:-1])
        for k, a, b in self.terms:
            phase = 2.0 * np.pi * (x @ np.asarray(k, dtype=float))
            if a:
                out = out + a * np.cos(phase)
            if b:
                out = out + b * np.sin(phase)
        return out

    def key(self):
        return ["fourier", [[list(k), a, b] for k, a, b in self.terms]]

    @classmethod
    def cosine(cls, dim: int = 1, amplitude: float = 1.0) -> "FourierPotential":
        """amplitude * sum_i cos(2 pi x_i)."""
        terms = []
        for i in range(dim):
            k = [0] * dim
            k[i] = 1
            terms.append((tuple(k), amplitude, 0.0))
        return cls(tuple(terms))


@dataclass(frozen=True, eq=False)
class TabulatedPotential:
    """Samples on the uniform periodic grid of [0,1)^n, cubic-interpolated."""

    samples: np.ndarray
    _spline: object = field(init=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        if s.ndim == 1:
            m = s.size
            xs = np.arange(m + 1) / m
            spline = CubicSpline(xs, np.append(s, s[0]), bc_type="periodic")
        elif s.ndim == 2:
            m1, m2 = s.shape
            pad = 4
            tiled = np.pad(s, pad, mode="wrap")
            x1 = (np.arange(m1 + 2 * pad) - pad) / m1
            x2 = (np.arange(m2 + 2 * pad) - pad) / m2
            spline = RectBivariateSpline(x1, x2, tiled, kx=3, ky=3, s=0)
        else:
            raise InputError("tabulated potentials support dimension 1 or 2")
        object.__setattr__(self, "_spline", spline)

    @property
    def dim(self) -> int:
        return self.samples.ndim

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.dim == 1:
            return self._spline(x[..., 0])
        return self._spline.ev(x[..., 0], x[..., 1])

    def key(self):
        digest = hashlib.sha256(self.samples.tobytes()).hexdigest()
        return ["table", list(self.samples.shape), digest]


@dataclass(frozen=True)
class ClosedFormPotential:
    """Arbitrary vectorized periodic function; ``name`` identifies it in caches."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str
    dim: int = 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(x), dtype=float)

    def key(self):
        return ["closed", self.name]


def potential_max(potential, dim: int, samples: int = 1 << 16) -> float:
    """Maximum of a periodic potential by dense sampling of the unit cell."""
    if dim == 1:
        x = (np.arange(samples) / samples)[:, None]
    else:
        m = int(round(samples ** (1.0 / dim)))
        axes = np.meshgrid(*([np.arange(m) / m] * dim), indexing="ij")
        x = np.stack(axes, axis=-1).reshape(-1, dim)
    return float(np.max(potential(x)))


# ---------------------------------------------------------------- models


@dataclass(frozen=True)
class LagrangianModel:
    """A Z^n-invariant Lagrangian L(x, v) on R^n.

    ``kinetic``: |v|^2/2.  ``mechanical``: |v|^2/2 - V(x) with periodic V.
    ``custom``: ``evaluator(x, v)`` called with x already reduced mod Z^n.
    A constant ``offset`` is added in every case (used for normalization).
    """

    dim: int = 1
    kind: str = "kinetic"
    potential: object = None
    evaluator: Callable | None = None
    a_max: float = 4.0
    group: str = "abelian"
    offset: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown model kind {self.kind!r}")
        if self.dim not in (1, 2, 3):
            raise InputError("model dimension must be 1, 2 or 3")
        if self.group != "abelian":
            raise InputError("only Z^n covers are discretized; Heisenberg enters via effective quantities")
        if self.kind == "mechanical" and self.potential is None:
            raise InputError("mechanical model needs a potential")
        if self.kind == "custom" and self.evaluator is None:
            raise InputError("custom model needs an evaluator")
        if not (np.isfinite(self.a_max) and self.a_max > 0):
            raise InputError("a_max must be positive")

    @property
    def x_dependent(self) -> bool:
        return self.kind != "kinetic"

    def __call__(self, x, v) -> np.ndarray:
        """Vectorized evaluation on arrays with trailing axis ``dim``."""
        if self.kind == "kinetic":
            out = 0.5 * np.sum(v * v, axis=-1)
            if self.offset:
                out = out + self.offset
            return out
        xr = reduce_mod(x)
        if self.kind == "mechanical":
            out = 0.5 * np.sum(v * v, axis=-1) - self.potential(xr)
        else:
            out = np.asarray(self.evaluator(xr, v), dtype=float)
        return out + self.offset if self.offset else out

    def shifted(self, c: float) -> "LagrangianModel":
        return replace(self, offset=self.offset + c)

    def with_a_max(self, a_max: float) -> "LagrangianModel":
        return replace(self, a_max=a_max)

    def cache_key(self) -> str | None:
        if self.kind == "custom" and not self.name:
            return None
        desc = {
            "dim": self.dim,
            "kind": self.kind,
            "potential": self.potential.key() if self.potential is not None else None,
            "a_max": self.a_max,
            "offset": self.offset,
            "name": self.name,
        }
        return json.dumps(desc, sort_keys=True)


def kinetic(dim: int = 1, a_max: float = 4.0) -> LagrangianModel:
    return LagrangianModel(dim=dim, kind="kinetic", a_max=a_max)


def mechanical(potential, dim: int = 1, a_max: float = 4.0) -> LagrangianModel:
    return LagrangianModel(dim=dim, kind="mechanical", potential=potential, a_max=a_max)


def eval_lagrangian(model: LagrangianModel, x, v) -> float | np.ndarray:
    xp = as_points(x, model.dim)
    vp = as_points(v, model.dim)
    if not (np.all(np.isfinite(xp)) and np.all(np.isfinite(vp))):
        raise InputError("non-finite point or velocity")
    out = model(xp, vp)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- Legendre duality


def velocity_grid(radius: float, h: float, dim: int) -> np.ndarray:
    """Grid of spacing ``h`` anchored at 0, restricted to the closed ball."""
    m = int(np.floor(radius / h + 1e-9))
    ticks = np.arange(-m, m + 1) * h
    if dim == 1:
        return ticks[:, None]
    mesh = np.stack(np.meshgrid(*([ticks] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return mesh[np.linalg.norm(mesh, axis=1) <= radius + 1e-12]


@dataclass(frozen=True)
class HamiltonianView:
    model: LagrangianModel
    radius: float


def _grid_sup(values: np.ndarray, grid: np.ndarray, radius: float, h: float, what: str):
    k = int(np.argmax(values))
    if np.linalg.norm(grid[k]) + h > radius + 1e-12:
        raise ResolutionError(f"{what}: maximizer on the search boundary (radius {radius})")
    return float(values[k]), grid[k]


def legendre_hamiltonian(view: HamiltonianView, x, p, h_v: float = 1e-2) -> float:
    """H(x,p) = sup_{|v| <= radius} <p,v> - L(x,v) over a velocity grid."""
    model = view.model
    if view.radius < model.a_max:
        raise InputError("search radius must be at least a_max")
    xp = as_points(x, model.dim)
    pp = as_points(p, model.dim)
    grid = velocity_grid(view.radius, h_v, model.dim)
    vals = grid @ pp - model(np.broadcast_to(xp, grid.shape), grid)
    return _grid_sup(vals, grid, view.radius, h_v, "legendre_hamiltonian")[0]


def legendre_lagrangian(view: HamiltonianView, x, v, p_radius: float, h_p: float = 1e-2,
                        h_v: float = 1e-2) -> float:
    """sup_p <p,v> - H(x,p): the double transform, which should give back L."""
    model = view.model
    xp = as_points(x, model.dim)
    vp = as_points(v, model.dim)
    pgrid = velocity_grid(p_radius, h_p, model.dim)
    vgrid = velocity_grid(view.radius, h_v, model.dim)
    lag = model(np.broadcast_to(xp, vgrid.shape), vgrid)
    ham = np.empty(len(pgrid))
    for i, p in enumerate(pgrid):
        ham[i] = _grid_sup(vgrid @ p - lag, vgrid, view.radius, h_v, "legendre_lagrangian")[0]
    return _grid_sup(pgrid @ vp - ham, pgrid, p_radius, h_p, "legendre_lagrangian")[0]


# ---------------------------------------------------------------- Tonelli diagnostics


@dataclass(frozen=True)
class SampleSpec:
    x_points: np.ndarray | None = None  # defaults to k/8 lattice in the unit cell
    v_radius: float = 8.0
    h_v: float = 0.25
    h_diff: float = 1e-3
    slopes: tuple = (1.0, 2.0, 4.0)
    c_conv: float = 1e-6


@dataclass
class TonelliReport:
    valid: bool
    convexity_modulus: float
    superlinearity: dict
    invariant: bool
    problems: list

    def require_valid(self):
        if not self.valid:
            raise InputError("model fails Tonelli checks: " + "; ".join(self.problems))


def _directions(dim: int) -> np.ndarray:
    eye = np.eye(dim)
    if dim == 1:
        return eye
    diag = [(eye[i] + s * eye[j]) / np.sqrt(2) for i in range(dim) for j in range(i + 1, dim) for s in (1, -1)]
    return np.vstack([eye] + diag)


def check_tonelli(model: LagrangianModel, sample: SampleSpec | None = None) -> TonelliReport:
    sample = sample or SampleSpec()
    dim = model.dim
    if sample.x_points is None:
        ticks = np.arange(8) / 8.0
        xs = np.stack(np.meshgrid(*([ticks] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    else:
        xs = as_points(sample.x_points, dim).reshape(-1, dim)
    vs = velocity_grid(sample.v_radius, sample.h_v, dim)
    X = np.repeat(xs, len(vs), axis=0)
    V = np.tile(vs, (len(xs), 1))
    problems = []

    base = model(X, V)
    h = sample.h_diff
    modulus = np.inf
    for e in _directions(dim):
        second = (model(X, V + h * e) + model(X, V - h * e) - 2.0 * base) / (h * h)
        modulus = min(modulus, float(np.min(second)))
    if not modulus >= sample.c_conv:
        problems.append(f"convexity modulus {modulus:.3g} below {sample.c_conv:g}")

    speed = np.linalg.norm(V, axis=-1)
    superlin = {}
    for A in sample.slopes:
        gap = A * speed - base
        k = int(np.argmax(gap))
        superlin[A] = float(gap[k])
        if speed[k] + sample.h_v > sample.v_radius:
            problems.append(f"A={A:g}: A|v| - L maximized on the sampled boundary")
        if not np.isfinite(gap[k]):
            problems.append(f"A={A:g}: B(A) not finite")

    invariant = True
    for i in range(dim):
        shift = np.zeros(dim)
        shift[i] = 1.0
        for s in (1.0, -1.0):
            if not np.array_equal(model(X + s * shift, V), base):
                invariant = False
    if not invariant:
        problems.append("not invariant under integer translations")

    return TonelliReport(
        valid=not problems,
        convexity_modulus=modulus,
        superlinearity=superlin,
        invariant=invariant,
        problems=problems,
    )
