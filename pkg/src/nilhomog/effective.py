"""Mather's beta function, its conjugate alpha, and the generalized beta on G_inf.

beta(h) is the large-time average action of curves on the cover with
displacement T h in time T. On the Heisenberg limit group the effective
Lagrangian is the inf over horizontal curves of the integrated beta of the
V1 velocity, computed with the optimizer of ``carnot``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .carnot import CarnotGroup, dilate, rescale_map_h, solve_horizontal
from .errors import InputError, NonconvergenceError, RangeError
from .group import ABELIAN, GroupPresentation
from .lagrangian import LagrangianModel, as_points, potential_max
from .mane import DiscretizationSpec, ValueTable, mane_potential

TAU_BETA = 1e-3
TAU_OPT = 1e-3


# ---------------------------------------------------------------- beta tables


@dataclass(frozen=True, eq=False)
class BetaFunction:
    """Sampled (or analytic) beta on a box of homology directions.

    ``raw`` holds the unnormalized averages; ``offset`` = raw beta(0) is
    subtracted by every normalized accessor so that beta(0) = 0.
    """

    axes: tuple  # one sorted 1-D array per V1 direction
    raw: np.ndarray | None
    errors: np.ndarray | None = None
    offset: float = 0.0
    convexified: bool = False
    model_offset: float = 0.0  # model.offset of the model that was sampled
    analytic: Callable | None = None  # u -> (value, grad) for exact forms

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def values(self) -> np.ndarray:
        return self.raw - self.offset

    @classmethod
    def quadratic(cls, dim: int = 2, radius: float = 8.0, n: int = 65) -> "BetaFunction":
        """beta(u) = |u|^2 / 2, evaluated in closed form."""
        axes = tuple(np.linspace(-radius, radius, n) for _ in range(dim))
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        raw = 0.5 * np.sum(mesh * mesh, axis=-1)

        def exact(u):
            u = np.asarray(u, dtype=float)
            return 0.5 * np.sum(u * u, axis=-1), u

        return cls(axes, raw, np.zeros_like(raw), 0.0, True, 0.0, exact)

    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1).reshape(-1, self.dim)

    def bounds(self) -> list:
        return [(float(a[0]), float(a[-1])) for a in self.axes]

    def value_and_grad(self, u) -> tuple:
        """Normalized beta and gradient at rows u (..., dim), multilinear between samples."""
        u = np.asarray(u, dtype=float)
        if self.analytic is not None:
            v, g = self.analytic(u)
            return v - self.offset, g
        pts = u.reshape(-1, self.dim)
        lo_idx, frac = [], []
        for a, ax in enumerate(self.axes):
            x = pts[:, a]
            if np.any(x < ax[0] - 1e-12) or np.any(x > ax[-1] + 1e-12):
                raise RangeError("beta queried outside its sampled box")
            i = np.clip(np.searchsorted(ax, x, side="right") - 1, 0, len(ax) - 2)
            lo_idx.append(i)
            frac.append((x - ax[i]) / (ax[i + 1] - ax[i]))
        vals = self.values
        val = np.zeros(len(pts))
        grad = np.zeros_like(pts)
        for c in range(1 << self.dim):
            bits = [(c >> a) & 1 for a in range(self.dim)]
            idx = tuple(lo_idx[a] + bits[a] for a in range(self.dim))
            w = [frac[a] if bits[a] else 1.0 - frac[a] for a in range(self.dim)]
            corner = vals[idx]
            val += np.prod(w, axis=0) * corner
            for a in range(self.dim):
                dw = 1.0 if bits[a] else -1.0
                step = self.axes[a][lo_idx[a] + 1] - self.axes[a][lo_idx[a]]
                others = np.prod([w[b] for b in range(self.dim) if b != a], axis=0) if self.dim > 1 else 1.0
                grad[:, a] += dw / step * others * corner
        return val.reshape(u.shape[:-1]), grad.reshape(u.shape)

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.dim == 1 and (u.ndim == 0 or u.shape[-1] != 1):
            u = u[..., None]
        return self.value_and_grad(u)[0]

    def to_csv(self) -> str:
        names = ["h"] if self.dim == 1 else [f"h{i + 1}" for i in range(self.dim)]
        lines = [",".join([*names, "beta", "error"])]
        errs = np.zeros_like(self.raw) if self.errors is None else self.errors
        for p, v, e in zip(self.points(), self.values.reshape(-1), errs.reshape(-1)):
            lines.append(",".join([*(repr(float(c)) for c in p), repr(float(v)), repr(float(e))]))
        return "\n".join(lines) + "\n"


def normalize_model(model: LagrangianModel) -> LagrangianModel:
    """L + c with c = max V so that beta(0) = 0 (mechanical); kinetic is already normalized."""
    if model.kind == "kinetic":
        return model
    if model.kind == "mechanical":
        return model.shifted(potential_max(model.potential, model.dim))
    raise InputError("normalize custom models through a sampled beta offset")


def _richardson(ts: np.ndarray, bs: np.ndarray) -> tuple:
    """Two-level Richardson in 1/T over consecutive pairs; (value, error bar)."""
    ext = (ts[1:] * bs[1:] - ts[:-1] * bs[:-1]) / (ts[1:] - ts[:-1])
    if len(ext) == 1:
        return float(ext[-1]), float(abs(ext[-1] - bs[-1]))
    return float(ext[-1]), float(abs(ext[-1] - ext[-2]))


def _check_tail(bs: np.ndarray, err: float, tol: float):
    if len(bs) < 3:
        return
    d1, d2 = bs[-2] - bs[-3], bs[-1] - bs[-2]
    if d1 * d2 < 0 and min(abs(d1), abs(d2)) > err + tol:
        raise NonconvergenceError(f"non-monotone tail of T-averages ({d1:.3g}, {d2:.3g})", best_residual=abs(d2))


def sample_beta(model: LagrangianModel, h_axes, T_list, spec: DiscretizationSpec, x0=None,
                tol: float = TAU_BETA) -> BetaFunction:
    """beta on the product grid of ``h_axes`` from a single Mañé table rooted at x0.

    For each T, the average (1/T) phi(x0, x0 + round(T h), T) is read at the
    lattice translate of x0 nearest to x0 + T h and extrapolated in 1/T.
    """
    dim = model.dim
    if isinstance(h_axes, np.ndarray) and h_axes.ndim == 1 and dim == 1:
        h_axes = (h_axes,)
    axes = tuple(np.sort(np.asarray(a, dtype=float)) for a in h_axes)
    if len(axes) != dim:
        raise InputError("need one h-axis per dimension")
    if not any(np.any(a == 0.0) for a in axes) or not all(np.any(a == 0.0) for a in axes):
        raise InputError("the h-grid must contain h = 0 for normalization")
    ts = np.asarray(T_list, dtype=float)
    if len(ts) < 2 or np.any(np.diff(ts) <= 0):
        raise InputError("T_list must be increasing with at least two entries")
    x0 = np.zeros(dim) if x0 is None else as_points(x0, dim).reshape(dim)
    reach = max(float(np.max(np.abs(a))) for a in axes) * ts[-1]
    need = reach + model.a_max * spec.h_t * 4 + 2.0
    if spec.r_box < need:
        spec = replace(spec, r_box=float(np.ceil(need)))
    table = mane_potential(model, x0, spec, float(ts[-1]), center=x0, estimate_tau=False)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    raw = np.empty(mesh.shape[:-1])
    err = np.empty_like(raw)
    for idx in np.ndindex(*raw.shape):
        h = mesh[idx]
        bs = np.array([table.at(x0 + np.round(t * h), t) / t for t in ts])
        val, e = _richardson(ts, bs)
        _check_tail(bs, e, tol)
        raw[idx], err[idx] = val, e
    zero = tuple(int(np.nonzero(a == 0.0)[0][0]) for a in axes)
    return BetaFunction(axes, raw, err, float(raw[zero]), False, model.offset)


def mather_beta(model: LagrangianModel, h, T_list, spec: DiscretizationSpec, normalize: bool = True,
                x0=None) -> tuple:
    """(beta(h), error bar); ``normalize`` subtracts the sampled beta(0)."""
    h = as_points(h, model.dim).reshape(model.dim)
    axes = tuple(np.unique([0.0, c]) for c in h)
    b = sample_beta(model, axes, T_list, spec, x0)
    idx = tuple(int(np.nonzero(a == c)[0][0]) for a, c in zip(axes, h))
    val = b.values[idx] if normalize else b.raw[idx]
    return float(val), float(b.errors[idx])


def midpoint_violation(beta: BetaFunction) -> float:
    """Largest beta((a+b)/2) - (beta(a)+beta(b))/2 over symmetric grid triples along axes and diagonals."""
    v = beta.raw
    worst = -np.inf
    dirs = [d for d in np.ndindex(*([3] * beta.dim)) if any(c != 1 for c in d)]
    for d in dirs:
        o = np.asarray(d) - 1
        if o[np.nonzero(o)[0][0]] < 0:
            continue
        for step in range(1, max(v.shape)):
            lo = [slice(None)] * beta.dim
            mid = [slice(None)] * beta.dim
            hi = [slice(None)] * beta.dim
            ok = True
            for a in range(beta.dim):
                s = o[a] * step
                n = v.shape[a]
                if abs(s) * 2 >= n and s != 0:
                    ok = False
                    break
                span = 2 * abs(s)
                if s >= 0:
                    lo[a], mid[a], hi[a] = slice(0, n - span), slice(s, n - s), slice(span, n)
                else:
                    lo[a], mid[a], hi[a] = slice(span, n), slice(-s, n + s), slice(0, n - span)
            if not ok:
                break
            diff = v[tuple(mid)] - 0.5 * (v[tuple(lo)] + v[tuple(hi)])
            if diff.size:
                worst = max(worst, float(np.max(diff)))
    return worst


def convexify(beta: BetaFunction, tol: float = 1e-14, max_iter: int = 10_000) -> BetaFunction:
    """Iterated midpoint fix-ups (lower every midpoint to its chord) until no violation remains."""
    v = beta.raw.copy()
    b = replace(beta, raw=v)
    for _ in range(max_iter):
        changed = False
        dirs = [d for d in np.ndindex(*([3] * beta.dim)) if any(c != 1 for c in d)]
        for d in dirs:
            o = np.asarray(d) - 1
            if o[np.nonzero(o)[0][0]] < 0:
                continue
            core = [slice(1, n - 1) if o[a] != 0 else slice(None) for a, n in enumerate(v.shape)]
            lo = [slice(0, n - 2) if o[a] > 0 else (slice(2, n) if o[a] < 0 else slice(None))
                  for a, n in enumerate(v.shape)]
            hi = [slice(2, n) if o[a] > 0 else (slice(0, n - 2) if o[a] < 0 else slice(None))
                  for a, n in enumerate(v.shape)]
            chord = 0.5 * (v[tuple(lo)] + v[tuple(hi)])
            mid = v[tuple(core)]
            bad = mid > chord + tol
            if np.any(bad):
                mid[bad] = chord[bad]
                changed = True
        if not changed:
            break
    zero = tuple(int(np.argmin(np.abs(a))) for a in beta.axes)
    return replace(b, raw=v, offset=float(v[zero]), convexified=True)


def superlinearity(beta: BetaFunction, slopes=(1.0, 2.0), norm: Callable | None = None) -> dict:
    """B(A) = max over samples of A |h| - beta(h); finite by construction on a bounded grid."""
    pts = beta.points()
    nh = np.linalg.norm(pts, axis=1) if norm is None else norm(pts)
    vals = beta.values.reshape(-1)
    return {float(a): float(np.max(a * nh - vals)) for a in slopes}


# ---------------------------------------------------------------- alpha


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    slopes: np.ndarray  # (M, dim)
    values: np.ndarray  # alpha at the slopes

    def to_csv(self) -> str:
        dim = self.slopes.shape[1]
        names = ["p"] if dim == 1 else [f"p{i + 1}" for i in range(dim)]
        lines = [",".join([*names, "alpha"])]
        for p, a in zip(self.slopes, self.values):
            lines.append(",".join([*(repr(float(c)) for c in p), repr(float(a))]))
        return "\n".join(lines) + "\n"


def _parabola_max(p: float, h: np.ndarray, b: np.ndarray) -> float:
    """max over [h0, h2] of p h - q(h), q the parabola through three samples."""
    coef = np.polyfit(h, b, 2)
    cand = [h[0], h[2]]
    if coef[0] > 0:
        hs = (p - coef[1]) / (2 * coef[0])
        if h[0] < hs < h[2]:
            cand.append(hs)
    return max(p * x - np.polyval(coef, x) for x in cand)


def mather_alpha(beta: BetaFunction, p, raw: bool = False) -> float:
    """alpha(p) = max_h <p, h> - beta(h) over the samples.

    In one dimension, where the samples look smooth around the discrete
    maximizer, it is refined by the conjugate of the parabola through it and
    its two neighbours; this is exact for quadratic beta. Near a kink (as at
    h = 0 for mechanical models) the plain discrete maximum is kept.
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != beta.dim:
        raise InputError("slope has the wrong dimension")
    vals = (beta.raw if raw else beta.values)
    pts = beta.points()
    obj = pts @ p - vals.reshape(-1)
    k = int(np.argmax(obj))
    idx = np.unravel_index(k, vals.shape)
    for a, i in enumerate(idx):
        if i == 0 or i == vals.shape[a] - 1:
            raise RangeError(f"alpha({p.tolist()}) maximizer on the boundary of the sampled h-box")
    if beta.dim == 1 and _locally_smooth(vals, idx[0]):
        i = idx[0]
        ax = beta.axes[0]
        return float(max(obj[k], _parabola_max(float(p[0]), ax[i - 1:i + 2], vals[i - 1:i + 2])))
    return float(obj[k])


def _locally_smooth(vals: np.ndarray, i: int) -> bool:
    """Second differences at i-1, i, i+1 agree within a factor 2 (no kink near i)."""
    if i < 2 or i > len(vals) - 3:
        return False
    d2 = vals[i - 2:i + 1] - 2 * vals[i - 1:i + 2] + vals[i:i + 3]
    return bool(np.min(d2) > 0 and np.max(d2) <= 2 * np.min(d2))


def effective_hamiltonian(beta: BetaFunction, slopes, raw: bool = False) -> EffectiveHamiltonian:
    s = np.asarray(slopes, dtype=float).reshape(-1, beta.dim)
    return EffectiveHamiltonian(s, np.array([mather_alpha(beta, p, raw) for p in s]))


def conjugate_back(ham: EffectiveHamiltonian, h) -> float:
    """beta**(h) = max over the sampled slopes of <p, h> - alpha(p)."""
    h = np.asarray(h, dtype=float).reshape(-1)
    return float(np.max(ham.slopes @ h - ham.values))


# ---------------------------------------------------------------- generalized beta


def generalized_beta(beta: BetaFunction, g: CarnotGroup, xbar, n_pieces: int = 32, restarts: int = 4,
                     seed: int = 0, tol: float = 1e-4) -> float:
    """L_bar(xbar): inf over N-piece horizontal controls of (1/N) sum beta(u_k)."""
    x = np.asarray(xbar, dtype=float).reshape(-1)
    if x.size != g.dim or not np.all(np.isfinite(x)):
        raise InputError("xbar does not belong to the Carnot group")
    if beta.dim != g.v1_dim:
        raise InputError("beta must live on the first stratum")
    if g.tag == ABELIAN:
        return float(beta(x))
    if not beta.convexified:
        raise InputError("convexify beta before the horizontal optimization")

    def obj(U):
        v, gr = beta.value_and_grad(U)
        n = len(U)
        return float(np.sum(v) / n), gr / n

    bounds = None
    if beta.analytic is None:
        bounds = [b for _ in range(n_pieces) for b in beta.bounds()]
    scale = max(1e-3, float(np.max(np.abs(x[:2]))), float(np.sqrt(abs(x[2]))))
    sol = solve_horizontal(g, x, obj, n_pieces, restarts, seed, tol, init_scale=scale, bounds=bounds)
    return sol.value


def time_beta(beta: BetaFunction, g: CarnotGroup, xbar, T: float, **kw) -> float:
    """beta_bar(xbar, T) = T L_bar(delta_{1/T} xbar)."""
    if not T > 0:
        raise InputError("T must be positive")
    return T * generalized_beta(beta, g, dilate(g, 1.0 / T, xbar), **kw)


def finite_scale_action(model: LagrangianModel, xbar, T: float, eps: float, spec: DiscretizationSpec,
                        x0=None, table: ValueTable | None = None) -> float:
    """F_eps(xbar, T) = eps phi(x0, h_eps(xbar) x0, T / eps) on the abelian cover."""
    dim = model.dim
    x0 = np.zeros(dim) if x0 is None else as_points(x0, dim).reshape(dim)
    g = CarnotGroup.abelian(dim)
    gamma = rescale_map_h(g, GroupPresentation.abelian(dim), eps, xbar)
    end = x0 + np.asarray(gamma.coords, dtype=float)
    if table is None:
        table = mane_potential(model, x0, spec, T / eps, center=x0, estimate_tau=False)
    return eps * table.at(end, T / eps)


@dataclass
class ConsistencyReport:
    eps: list
    actions: list
    limit: float
    gaps: list
    tau_dp: float
    nonincreasing: bool


def limit_consistency(model: LagrangianModel, beta: BetaFunction, xbar, T: float, eps_list,
                      spec: DiscretizationSpec, x0=None) -> ConsistencyReport:
    """Gaps |F_eps(xbar, T) - beta_bar(xbar, T)| along a decreasing eps list (abelian covers)."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InputError("eps_list must be strictly decreasing")
    g = CarnotGroup.abelian(model.dim)
    x = np.asarray(xbar, dtype=float).reshape(model.dim)
    # beta is normalized; shift back to the action level of ``model``
    limit = time_beta(beta, g, x, T) + T * (beta.offset - beta.model_offset + model.offset)
    horizon = T / eps_list[-1]
    reach = float(np.max(np.abs(x))) / eps_list[-1]
    need = reach + 2.0 + model.a_max * spec.h_t * 4
    if spec.r_box < need:
        raise InputError(f"r_box {spec.r_box} too small for reach {reach:.3g}")
    x0v = np.zeros(model.dim) if x0 is None else as_points(x0, model.dim).reshape(model.dim)
    table = mane_potential(model, x0v, spec, horizon, center=x0v)
    tau = table.tau_dp if np.isfinite(table.tau_dp) else 0.0
    acts = [finite_scale_action(model, x, T, e, spec, x0v, table) for e in eps_list]
    gaps = [abs(a - limit) for a in acts]
    mono = all(b <= a + tau for a, b in zip(gaps, gaps[1:]))
    return ConsistencyReport(eps_list, acts, limit, gaps, tau, mono)
