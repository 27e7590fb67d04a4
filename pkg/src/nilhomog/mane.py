"""Mañé potentials and Lax-Oleinik solutions by semi-Lagrangian dynamic programming.

One DP step over a time step ``h_t`` is

    u_new(x) = min_{|v| <= A_max} u_old(x - v h_t) + h_t L(x - v h_t / 2, v)

with ``u_old`` linearly interpolated at the departure point. Seeding with a
delta at ``y`` gives the Mañé potential phi(y, ., t); seeding with initial data
gives the Lax-Oleinik evolution. Everything runs in unscaled time on the
cover; rescaled quantities are obtained from phi^eps(y,x,S) = eps phi(y,x,S/eps).

Values outside the simulation box are +inf. Two taint bits are propagated
along optimal departures so that reads can refuse unreliable entries:
``SATURATED`` (a minimizing step used the outermost velocity) and ``EDGE``
(a minimizing path started within one stencil of the box boundary).
"""

from __future__ import annotations

import hashlib
import io
import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit

from .errors import InputError, RangeError, ResolutionError
from .lagrangian import LagrangianModel, as_points, velocity_grid

log = logging.getLogger(__name__)

SATURATED = np.uint8(1)
EDGE = np.uint8(2)
CACHE_VERSION = 1


# ---------------------------------------------------------------- discretization


@dataclass(frozen=True)
class DiscretizationSpec:
    h_x: float = 0.05
    h_t: float = 0.1
    r_box: float = 10.0
    h_v: float = 0.01
    quadrature: str = "midpoint"

    def __post_init__(self):
        for name in ("h_x", "h_t", "r_box", "h_v"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise InputError(f"{name} must be positive")
        if self.quadrature not in ("midpoint", "trapezoid"):
            raise InputError(f"unknown quadrature {self.quadrature!r}")
        per_unit = 1.0 / self.h_x
        if abs(per_unit - round(per_unit)) > 1e-9 * per_unit:
            raise InputError("1/h_x must be an integer so lattice points are grid nodes")

    @property
    def cells_per_unit(self) -> int:
        return int(round(1.0 / self.h_x))

    def check(self, model: LagrangianModel, horizon: float | None = None):
        if self.h_t * model.a_max < self.h_x * (1 - 1e-12):
            raise InputError("h_t * A_max must be at least h_x")
        if horizon is not None and self.r_box < model.a_max * horizon:
            log.debug("r_box %.3g < A_max*T = %.3g; relying on EDGE taint detection",
                      self.r_box, model.a_max * horizon)

    def coarsened(self, factor: int = 2) -> "DiscretizationSpec":
        return replace(self, h_x=self.h_x * factor, h_t=self.h_t * factor, h_v=self.h_v * factor)

    def refined(self, factor: int = 2) -> "DiscretizationSpec":
        return replace(self, h_x=self.h_x / factor, h_t=self.h_t / factor, h_v=self.h_v / factor)


@dataclass(frozen=True)
class Grid:
    """Uniform grid of nodes ``(start + i) * h`` along each axis."""

    h: float
    start: tuple
    shape: tuple
    periodic: bool = False

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def cells_per_unit(self) -> int:
        return int(round(1.0 / self.h))

    def axis(self, i: int) -> np.ndarray:
        return (self.start[i] + np.arange(self.shape[i])) * self.h

    def coords(self) -> np.ndarray:
        axes = [self.axis(i) for i in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def fractional_index(self, x: np.ndarray) -> np.ndarray:
        return x / self.h - np.asarray(self.start, dtype=float)

    def node_index(self, x) -> tuple:
        """Index of the node at ``x``; ``x`` must be a node (up to 1e-9 cells)."""
        f = self.fractional_index(as_points(x, self.dim).reshape(self.dim))
        idx = np.rint(f)
        if np.any(np.abs(f - idx) > 1e-9):
            raise InputError(f"point {x} is not a grid node")
        idx = idx.astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            raise InputError(f"point {x} outside the simulation box")
        return tuple(int(i) for i in idx)

    def reduced(self, i: int, period: int) -> np.ndarray:
        return np.mod(self.start[i] + np.arange(self.shape[i]), period).astype(np.int64)


def box_grid(spec: DiscretizationSpec, dim: int, center=0.0) -> Grid:
    c = as_points(center, dim).reshape(dim)
    m = int(round(spec.r_box / spec.h_x))
    cidx = np.rint(c / spec.h_x).astype(int)
    return Grid(spec.h_x, tuple(int(ci - m) for ci in cidx), (2 * m + 1,) * dim)


def periodic_grid(spec: DiscretizationSpec, dim: int) -> Grid:
    p = spec.cells_per_unit
    return Grid(spec.h_x, (0,) * dim, (p,) * dim, periodic=True)


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _step_1d(u, cost, red, mi, th, sat, periodic, flags, out, out_flags, arg):
    nb, n = u.shape
    nk = mi.shape[0]
    for b in range(nb):
        for i in range(n):
            best = np.inf
            bk = -1
            r = red[i]
            for k in range(nk):
                j = i - mi[k]
                t = th[k]
                if periodic:
                    j = j % n
                    a = u[b, j]
                    if t != 0.0:
                        a = (1.0 - t) * a + t * u[b, (j - 1) % n]
                else:
                    if j < 0 or j >= n:
                        continue
                    a = u[b, j]
                    if t != 0.0:
                        if j == 0:
                            continue
                        a = (1.0 - t) * a + t * u[b, j - 1]
                c = a + cost[k, r]
                if c < best:
                    best = c
                    bk = k
            out[b, i] = best
            arg[b, i] = bk
            if bk < 0:
                out_flags[b, i] = flags[b, i]
                continue
            j = i - mi[bk]
            if periodic:
                j = j % n
            f = flags[b, j]
            if th[bk] != 0.0:
                f |= flags[b, (j - 1) % n]
            if sat[bk]:
                f |= 1
            out_flags[b, i] = f


@njit(cache=True)
def _step_2d(u, cost, red1, red2, m1, t1, m2, t2, sat, periodic, flags, out, out_flags, arg):
    nb, n1, n2 = u.shape
    nk = m1.shape[0]
    for b in range(nb):
        for i1 in range(n1):
            r1 = red1[i1]
            for i2 in range(n2):
                r2 = red2[i2]
                best = np.inf
                bk = -1
                for k in range(nk):
                    j1 = i1 - m1[k]
                    j2 = i2 - m2[k]
                    a1 = t1[k]
                    a2 = t2[k]
                    if periodic:
                        j1 = j1 % n1
                        j2 = j2 % n2
                        k1 = (j1 - 1) % n1
                        k2 = (j2 - 1) % n2
                    else:
                        if j1 < 0 or j1 >= n1 or j2 < 0 or j2 >= n2:
                            continue
                        k1 = j1 - 1
                        k2 = j2 - 1
                        if (a1 != 0.0 and k1 < 0) or (a2 != 0.0 and k2 < 0):
                            continue
                    val = (1.0 - a1) * (1.0 - a2) * u[b, j1, j2]
                    if a1 != 0.0:
                        val += a1 * (1.0 - a2) * u[b, k1, j2]
                    if a2 != 0.0:
                        val += (1.0 - a1) * a2 * u[b, j1, k2]
                    if a1 != 0.0 and a2 != 0.0:
                        val += a1 * a2 * u[b, k1, k2]
                    c = val + cost[k, r1, r2]
                    if c < best:
                        best = c
                        bk = k
                out[b, i1, i2] = best
                arg[b, i1, i2] = bk
                if bk < 0:
                    out_flags[b, i1, i2] = flags[b, i1, i2]
                    continue
                j1 = i1 - m1[bk]
                j2 = i2 - m2[bk]
                if periodic:
                    j1 = j1 % n1
                    j2 = j2 % n2
                f = flags[b, j1, j2]
                if t1[bk] != 0.0:
                    f |= flags[b, (j1 - 1) % n1, j2]
                if t2[bk] != 0.0:
                    f |= flags[b, j1, (j2 - 1) % n2]
                if t1[bk] != 0.0 and t2[bk] != 0.0:
                    f |= flags[b, (j1 - 1) % n1, (j2 - 1) % n2]
                if sat[bk]:
                    f |= 1
                out_flags[b, i1, i2] = f


def _gather_origin(orig, arg, shifts_int, shifts_frac, periodic):
    """Linear interpolation of tracked origin coordinates at the optimal departure."""
    dim = len(shifts_int)
    shape = arg.shape[1:]
    out = np.full(orig.shape, np.nan)
    valid = arg >= 0
    k = np.where(valid, arg, 0)
    idx = np.indices(arg.shape)
    b = idx[0]
    base = [idx[1 + a] - shifts_int[a][k] for a in range(dim)]
    frac = [shifts_frac[a][k] for a in range(dim)]
    acc = np.zeros(orig.shape)
    for corner in range(1 << dim):
        w = np.ones(arg.shape)
        pos = []
        for a in range(dim):
            if corner >> a & 1:
                w = w * frac[a]
                p = base[a] - 1
            else:
                w = w * (1.0 - frac[a])
                p = base[a]
            p = np.mod(p, shape[a]) if periodic else np.clip(p, 0, shape[a] - 1)
            pos.append(p)
        vals = orig[(b, *pos)]
        acc += np.where(w[..., None] > 0, w[..., None] * vals, 0.0)
    out[valid] = acc[valid]
    return out


# ---------------------------------------------------------------- sweep


@dataclass
class SweepResult:
    steps: np.ndarray
    values: np.ndarray  # (B, n_rec, *shape)
    flags: np.ndarray
    origins: np.ndarray | None


def _velocity_stencil(model, spec, dim):
    vel = velocity_grid(model.a_max, spec.h_v, dim)
    s = vel * spec.h_t / spec.h_x
    near = np.rint(s)
    s = np.where(np.abs(s - near) < 1e-9, near, s)
    mi = np.floor(s).astype(np.int64)
    th = s - mi
    sat = (np.linalg.norm(vel, axis=1) + spec.h_v > model.a_max + 1e-12).astype(np.bool_)
    return vel, mi, th, sat


def _cost_table(model, spec, grid, vel, tilt):
    dim = grid.dim
    period = grid.cells_per_unit if model.x_dependent else 1
    ticks = np.arange(period) * spec.h_x
    if dim == 1:
        base = ticks[:, None]
    else:
        base = np.stack(np.meshgrid(*([ticks] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    disp = vel * spec.h_t
    X = base[None, :, :]
    V = np.broadcast_to(vel[:, None, :], (len(vel), len(base), dim))
    if spec.quadrature == "midpoint":
        lag = model(X - 0.5 * disp[:, None, :], V)
    else:
        lag = 0.5 * (model(np.broadcast_to(X, V.shape), V) + model(X - disp[:, None, :], V))
    cost = spec.h_t * lag
    if tilt is not None:
        cost = cost - spec.h_t * (vel @ np.asarray(tilt, dtype=float))[:, None]
    cost = np.ascontiguousarray(cost.reshape((len(vel),) + (period,) * dim))
    red = [grid.reduced(i, period) for i in range(dim)]
    return cost, red


def dp_sweep(model: LagrangianModel, spec: DiscretizationSpec, grid: Grid, u0: np.ndarray,
             n_steps: int, tilt=None, track_origin: bool = False) -> SweepResult:
    """Run ``n_steps`` DP steps from the batch of initial slices ``u0`` (B, *shape)."""
    dim = grid.dim
    if dim not in (1, 2):
        raise InputError("grid-based potentials support dimension 1 or 2")
    spec.check(model)
    u = np.ascontiguousarray(u0, dtype=float)
    if u.shape[1:] != grid.shape:
        raise InputError("initial slice does not match the grid")
    vel, mi, th, sat = _velocity_stencil(model, spec, dim)
    cost, red = _cost_table(model, spec, grid, vel, tilt)

    flags = np.zeros(u.shape, dtype=np.uint8)
    if not grid.periodic:
        width = int(np.max(np.abs(mi))) + 1
        for a in range(dim):
            sl = [slice(None)] * (dim + 1)
            sl[a + 1] = slice(0, width)
            flags[tuple(sl)] |= EDGE
            sl[a + 1] = slice(-width, None)
            flags[tuple(sl)] |= EDGE

    nb = u.shape[0]
    values = np.empty((nb, n_steps + 1) + grid.shape)
    flagrec = np.empty(values.shape, dtype=np.uint8)
    values[:, 0] = u
    flagrec[:, 0] = flags
    origins = None
    if track_origin:
        origins = np.full(values.shape + (dim,), np.nan)
        origins[:, 0] = np.where(np.isfinite(u)[..., None], grid.coords()[None], np.nan)
    out = np.empty_like(u)
    out_flags = np.empty_like(flags)
    arg = np.empty(u.shape, dtype=np.int64)
    for step in range(1, n_steps + 1):
        if dim == 1:
            _step_1d(u, cost, red[0], mi[:, 0].copy(), th[:, 0].copy(), sat, grid.periodic,
                     flags, out, out_flags, arg)
        else:
            _step_2d(u, cost, red[0], red[1], mi[:, 0].copy(), th[:, 0].copy(), mi[:, 1].copy(),
                     th[:, 1].copy(), sat, grid.periodic, flags, out, out_flags, arg)
        u, out = out, u
        flags, out_flags = out_flags, flags
        values[:, step] = u
        flagrec[:, step] = flags
        if track_origin:
            origins[:, step] = _gather_origin(origins[:, step - 1], arg,
                                              [mi[:, a] for a in range(dim)],
                                              [th[:, a] for a in range(dim)], grid.periodic)
    return SweepResult(np.arange(n_steps + 1), values, flagrec, origins)


# ---------------------------------------------------------------- tables


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Per-time-slice values on a grid of the cover.

    ``times`` and ``values`` are in rescaled units: a table built at scale
    ``eps`` stores t = eps * s and eps * u(., s) for unscaled DP time s.
    """

    grid: Grid
    times: np.ndarray
    values: np.ndarray  # (n_t, *shape)
    flags: np.ndarray
    eps: float = 1.0
    tau_dp: float = float("nan")
    origins: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            if t > self.horizon:
                raise InputError(f"time {t} beyond table horizon {self.horizon}")
            raise InputError(f"time {t} is not a table time stamp")
        return k

    def slice(self, t: float) -> np.ndarray:
        return self.values[self.time_index(t)]

    def _corners(self, x):
        f = self.grid.fractional_index(as_points(x, self.grid.dim).reshape(self.grid.dim))
        near = np.rint(f)
        f = np.where(np.abs(f - near) < 1e-9, near, f)
        lo = np.floor(f).astype(int)
        fr = f - lo
        shape = np.asarray(self.grid.shape)
        corners = []
        for c in range(1 << self.grid.dim):
            idx, w = [], 1.0
            for a in range(self.grid.dim):
                if c >> a & 1:
                    w *= fr[a]
                    idx.append(lo[a] + 1)
                else:
                    w *= 1.0 - fr[a]
                    idx.append(lo[a])
            if w == 0.0:
                continue
            idx = np.asarray(idx)
            if np.any(idx < 0) or np.any(idx >= shape):
                raise RangeError(f"point {x} outside the simulation box")
            corners.append((tuple(int(i) for i in idx), w))
        return corners

    def at(self, x, t: float, check: bool = True) -> float:
        k = self.time_index(t)
        total = 0.0
        for idx, w in self._corners(x):
            v = self.values[(k, *idx)]
            if check:
                fl = self.flags[(k, *idx)]
                if not np.isfinite(v):
                    raise RangeError(f"point {x} unreachable at time {t}")
                if fl & SATURATED:
                    raise ResolutionError(f"velocity bound A_max saturated along the minimizer at {x}")
                if fl & EDGE:
                    raise RangeError(f"minimizer for {x} touches the simulation box boundary")
            total += w * v
        return float(total)

    def origin_at(self, x, t: float) -> np.ndarray:
        if self.origins is None:
            raise InputError("table was built without origin tracking")
        k = self.time_index(t)
        acc = np.zeros(self.grid.dim)
        for idx, w in self._corners(x):
            acc += w * self.origins[(k, *idx)]
        return acc

    def clean_mask(self, k: int) -> np.ndarray:
        return np.isfinite(self.values[k]) & (self.flags[k] == 0)

    def to_csv(self, path, every: int = 1):
        coords = self.grid.coords().reshape(-1, self.grid.dim)
        names = ["x"] if self.grid.dim == 1 else [f"x{i + 1}" for i in range(self.grid.dim)]
        buf = io.StringIO()
        buf.write(",".join(["t", *names, "value"]) + "\n")
        for k in range(0, len(self.times), every):
            vals = self.values[k].reshape(-1)
            for c, v in zip(coords, vals):
                buf.write(",".join([repr(float(self.times[k])), *(repr(float(ci)) for ci in c),
                                    repr(float(v))]) + "\n")
        Path(path).write_text(buf.getvalue())


def _table_from_sweep(res: SweepResult, b: int, grid: Grid, spec: DiscretizationSpec,
                      eps: float = 1.0, record_every: int = 1) -> ValueTable:
    sel = slice(None, None, record_every)
    times = res.steps[sel] * spec.h_t * eps
    values = res.values[b, sel] * eps
    origins = None if res.origins is None else res.origins[b, sel]
    return ValueTable(grid, times, values, res.flags[b, sel], eps=eps, origins=origins)


def _n_steps(duration: float, h_t: float) -> int:
    n = duration / h_t
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise InputError(f"duration {duration} is not a multiple of h_t={h_t}")
    return int(round(n))


def _tau_estimate(fine: ValueTable, coarse: ValueTable) -> np.ndarray:
    """Per-slice max |fine - coarse| on shared clean nodes and shared times."""
    gf, gc = fine.grid, coarse.grid
    sl = []
    for a in range(gf.dim):
        first = 2 * gc.start[a] - gf.start[a]
        sl.append((first, gc.shape[a]))
    taus = np.full(len(coarse.times), np.nan)
    for kc, t in enumerate(coarse.times):
        try:
            kf = fine.time_index(t)
        except InputError:
            continue
        fvals, cvals = fine.values[kf], coarse.values[kc]
        fmask, cmask = fine.clean_mask(kf), coarse.clean_mask(kc)
        ci = np.indices(gc.shape)
        fi = [2 * ci[a] + sl[a][0] for a in range(gf.dim)]
        inside = np.ones(gc.shape, dtype=bool)
        for a in range(gf.dim):
            inside &= (fi[a] >= 0) & (fi[a] < gf.shape[a])
        fi = [np.clip(f, 0, gf.shape[a] - 1) for a, f in enumerate(fi)]
        ok = inside & cmask & fmask[tuple(fi)]
        if np.any(ok):
            taus[kc] = float(np.max(np.abs(fvals[tuple(fi)][ok] - cvals[ok])))
    return taus


def mane_potentials(model: LagrangianModel, ys, spec: DiscretizationSpec, T: float,
                    center=None, estimate_tau: bool = True) -> list:
    """phi(y, ., t) for each source ``y`` in one batched sweep on a shared grid."""
    ys = as_points(ys, model.dim).reshape(-1, model.dim)
    if T < spec.h_t * (1 - 1e-12):
        raise InputError("T must be at least h_t")
    n_steps = _n_steps(T, spec.h_t)
    spec.check(model, T)
    if center is None:
        center = ys.mean(axis=0)
    grid = box_grid(spec, model.dim, center)
    u0 = np.full((len(ys),) + grid.shape, np.inf)
    for b, y in enumerate(ys):
        u0[(b, *grid.node_index(y))] = 0.0
    res = dp_sweep(model, spec, grid, u0, n_steps)
    tables = [_table_from_sweep(res, b, grid, spec) for b in range(len(ys))]
    if estimate_tau:
        # sources off the coarse grid keep tau_dp = nan
        csp = spec.coarsened()
        on_coarse = [b for b, y in enumerate(ys) if np.allclose(y / csp.h_x, np.rint(y / csp.h_x), atol=1e-9)]
        try:
            coarse = mane_potentials(model, ys[on_coarse], csp, T, center=center, estimate_tau=False) \
                if on_coarse else []
        except InputError:
            coarse = []
        for b, c in zip(on_coarse, coarse):
            taus = _tau_estimate(tables[b], c)
            tables[b] = replace(tables[b], tau_dp=_final_tau(taus), meta={"tau_by_time": taus})
    return tables


def _final_tau(taus: np.ndarray) -> float:
    finite = taus[np.isfinite(taus)]
    return float(finite[-1]) if finite.size else float("nan")


def mane_potential(model: LagrangianModel, y, spec: DiscretizationSpec, T: float, center=None,
                   estimate_tau: bool = True) -> ValueTable:
    """Table of phi(y, x, t) for grid nodes x and t = 0, h_t, ..., T."""
    return mane_potentials(model, [as_points(y, model.dim).reshape(model.dim)], spec, T,
                           center=center, estimate_tau=estimate_tau)[0]


def rescaled_potential(model: LagrangianModel, eps: float, y, x, T: float,
                       spec: DiscretizationSpec | None = None, table: ValueTable | None = None) -> float:
    """phi^eps(y, x, T) = eps * phi(y, x, T/eps)."""
    if not 0 < eps <= 1:
        raise InputError("eps must lie in (0, 1]")
    if table is None:
        if spec is None:
            raise InputError("need a table or a discretization")
        table = mane_potential(model, y, spec, T / eps, estimate_tau=False)
    if table.eps != 1.0:
        raise InputError("rescaled_potential reads an unscaled Mañé table")
    if T / eps > table.horizon * (1 + 1e-12):
        raise InputError(f"T/eps = {T / eps} exceeds table horizon {table.horizon}")
    return eps * table.at(x, T / eps)


def _sample_initial(initial, grid: Grid) -> np.ndarray:
    if callable(initial):
        pts = grid.coords()
        vals = np.asarray(initial(pts[..., 0] if grid.dim == 1 else pts), dtype=float)
    else:
        vals = np.asarray(initial, dtype=float)
    if vals.shape != grid.shape:
        raise InputError("initial data does not match the grid")
    if not np.all(np.isfinite(vals)):
        raise InputError("initial data must be finite on the grid")
    return vals


def initial_lipschitz(vals: np.ndarray, grid: Grid, eps: float) -> float:
    """Adjacent-node Lipschitz constant with respect to d_eps = eps * d."""
    k = 0.0
    for a in range(grid.dim):
        d = np.abs(np.diff(vals, axis=a)) / (eps * grid.h)
        if d.size:
            k = max(k, float(np.max(d)))
    return k


def lax_oleinik_solve(model: LagrangianModel, initial, eps: float, T: float, spec: DiscretizationSpec,
                      center=0.0, track_origin: bool = False, estimate_tau: bool = True,
                      record_every: int = 1) -> ValueTable:
    """v^eps(x, t) = min_y f_eps(y) + eps phi(y, x, t/eps), t up to T.

    ``initial`` is f_eps sampled on grid nodes (callable on cover coordinates,
    or an array). The sweep is seeded with f_eps/eps and run for T/eps.
    """
    if not 0 < eps <= 1:
        raise InputError("eps must lie in (0, 1]")
    horizon = T / eps
    n_steps = _n_steps(horizon, spec.h_t)
    spec.check(model, horizon)
    grid = box_grid(spec, model.dim, center)
    f = _sample_initial(initial, grid)
    res = dp_sweep(model, spec, grid, (f / eps)[None], n_steps, track_origin=track_origin)
    table = _table_from_sweep(res, 0, grid, spec, eps=eps, record_every=record_every)
    meta = {"initial_lipschitz": initial_lipschitz(f, grid, eps)}
    tau = float("nan")
    if estimate_tau and callable(initial):
        try:
            coarse = lax_oleinik_solve(model, initial, eps, T, spec.coarsened(), center=center,
                                       estimate_tau=False)
            taus = _tau_estimate(table, coarse)
            tau = _final_tau(taus)
            meta["tau_by_time"] = taus
        except InputError:
            pass
    return replace(table, tau_dp=tau, meta=meta)


def lipschitz_estimate(table: ValueTable, lam: float, window=None, stencil: int = 2) -> float:
    """Empirical Lipschitz constant over node pairs at distance < t/2, times t >= lam.

    Distances are measured with d_eps = eps * d where ``eps`` is the table's
    scale. ``window`` = (center, radius) restricts pairs to a ball of the cover.
    In one dimension the adjacent-node maximum already equals the maximum
    over all pairs, so the default stencil loses nothing.
    """
    if table.horizon < lam:
        raise InputError("table horizon below lambda")
    grid = table.grid
    coords = grid.coords()
    if window is not None:
        c, rad = window
        c = as_points(c, grid.dim).reshape(grid.dim)
        inwin = np.linalg.norm(coords - c, axis=-1) <= rad + 1e-12
    else:
        inwin = np.ones(grid.shape, dtype=bool)
    offsets = [o for o in np.ndindex(*([2 * stencil + 1] * grid.dim))]
    offsets = [np.asarray(o) - stencil for o in offsets]
    offsets = [o for o in offsets if any(o > 0) and o[np.nonzero(o)[0][0]] > 0]
    best, npairs = 0.0, 0
    for k, t in enumerate(table.times):
        if t < lam:
            continue
        ok = table.clean_mask(k) & inwin
        vals = table.values[k]
        for o in offsets:
            dist = table.eps * grid.h * float(np.linalg.norm(o))
            if dist >= t / 2:
                continue
            a_sl, b_sl = [], []
            for a in range(grid.dim):
                if o[a] >= 0:
                    a_sl.append(slice(0, grid.shape[a] - o[a]))
                    b_sl.append(slice(o[a], None))
                else:
                    a_sl.append(slice(-o[a], None))
                    b_sl.append(slice(0, grid.shape[a] + o[a]))
            a_sl, b_sl = tuple(a_sl), tuple(b_sl)
            pair_ok = ok[a_sl] & ok[b_sl]
            if not np.any(pair_ok):
                continue
            diff = np.abs(vals[a_sl][pair_ok] - vals[b_sl][pair_ok])
            npairs += diff.size
            best = max(best, float(np.max(diff)) / dist)
    if npairs == 0:
        raise InputError("no admissible grid pairs for the Lipschitz estimate")
    return best


# ---------------------------------------------------------------- exchange formats


def cache_key(model: LagrangianModel, spec: DiscretizationSpec, seeds) -> str | None:
    mk = model.cache_key()
    if mk is None:
        return None
    h = hashlib.sha256()
    h.update(mk.encode())
    h.update(repr(spec).encode())
    h.update(np.ascontiguousarray(seeds, dtype=float).tobytes())
    return h.hexdigest()


def write_table_cache(table: ValueTable, path):
    """Little-endian binary: version byte, dims, spacings, time stamps, row-major values, flags."""
    g = table.grid
    head = struct.pack("<BB", CACHE_VERSION, g.dim)
    head += struct.pack("<Q", len(table.times)) + struct.pack(f"<{g.dim}Q", *g.shape)
    head += struct.pack(f"<{g.dim}q", *g.start)
    head += struct.pack("<ddd", g.h, table.eps, table.tau_dp)
    head += np.ascontiguousarray(table.times, dtype="<f8").tobytes()
    body = np.ascontiguousarray(table.values, dtype="<f8").tobytes()
    body += np.ascontiguousarray(table.flags, dtype=np.uint8).tobytes()
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(head + body)
    tmp.replace(path)


def read_table_cache(path) -> ValueTable:
    data = Path(path).read_bytes()
    version, dim = struct.unpack_from("<BB", data, 0)
    if version != CACHE_VERSION:
        raise InputError(f"unsupported cache version {version}")
    off = 2
    (n_t,) = struct.unpack_from("<Q", data, off)
    off += 8
    shape = struct.unpack_from(f"<{dim}Q", data, off)
    off += 8 * dim
    start = struct.unpack_from(f"<{dim}q", data, off)
    off += 8 * dim
    h, eps, tau = struct.unpack_from("<ddd", data, off)
    off += 24
    times = np.frombuffer(data, dtype="<f8", count=int(n_t), offset=off).copy()
    off += 8 * int(n_t)
    count = int(n_t) * int(np.prod(shape))
    values = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape((n_t,) + tuple(shape))
    off += 8 * count
    flags = np.frombuffer(data, dtype=np.uint8, count=count, offset=off).reshape(values.shape)
    grid = Grid(h, tuple(start), tuple(int(s) for s in shape))
    return ValueTable(grid, times, values.copy(), flags.copy(), eps=eps, tau_dp=tau)
