"""End-to-end homogenization experiments.

The rescaled side solves the Lax-Oleinik problem on the abelian cover at
scale eps and reads it at the lattice point h_eps(xbar) x0. The limit side
evaluates the Hopf-Lax formula

    vbar(xbar, T) = inf_y fbar(y) + T Lbar(delta_{1/T}(y^-1 xbar))

by a zooming grid search over w = y^-1 xbar.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .carnot import (CarnotGroup, carnot_multiply, cc_distance, dilate, heisenberg_l2_distance,
                     rescale_map_h)
from .effective import BetaFunction, mather_alpha, normalize_model, sample_beta, superlinearity
from .errors import HomogError, InputError, NonconvergenceError, RangeError
from .group import ABELIAN, HEISENBERG, GroupPresentation
from .lagrangian import LagrangianModel, as_points
from .mane import (DiscretizationSpec, ValueTable, dp_sweep, lax_oleinik_solve, lipschitz_estimate,
                   periodic_grid, _n_steps)

TAU_OPT = 1e-3


# ---------------------------------------------------------------- limit-side helpers


def limit_norm(g: CarnotGroup, pts) -> np.ndarray:
    """d_inf(e, x) for rows of ``pts``; closed form where available."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if g.tag == ABELIAN:
        return g.v1_norm(pts)
    if g.norm == "l2":
        return np.array([heisenberg_l2_distance(p) for p in pts])
    return np.array([cc_distance(g, np.zeros(3), p, restarts=2) for p in pts])


def lbar_from_beta(beta: BetaFunction, g: CarnotGroup) -> Callable:
    """Vectorized Lbar on G_inf rows. Abelian: beta itself. H3: beta must be the quadratic form."""
    if g.tag == ABELIAN:
        return lambda w: beta(np.asarray(w, dtype=float).reshape(-1, g.dim))
    if beta.analytic is None or g.norm != "l2":
        from .effective import generalized_beta

        return lambda w: np.array([generalized_beta(beta, g, p) for p in np.atleast_2d(w)])
    # quadratic beta: Lbar = d_cc^2 / 2 (constant-speed geodesics)
    return lambda w: 0.5 * limit_norm(g, w) ** 2


@dataclass(frozen=True, eq=False)
class InitialData:
    """Limit datum fbar on G_inf and its pullbacks f_eps(x) = fbar(eps x) to the cover."""

    group: CarnotGroup
    fbar: Callable  # rows (M, dim) -> values (M,)
    lipschitz: float
    kind: str = "custom"

    @classmethod
    def cone(cls, g: CarnotGroup, c: float = 1.0) -> "InitialData":
        return cls(g, lambda x: c * limit_norm(g, x), abs(c), "cone")

    @classmethod
    def linear(cls, g: CarnotGroup, coef) -> "InitialData":
        coef = np.asarray(coef, dtype=float).reshape(g.v1_dim)
        dual = float(np.max([abs(coef @ e) for e in np.vstack([np.eye(g.v1_dim), -np.eye(g.v1_dim)])])) \
            if g.norm in ("l1",) else float(np.linalg.norm(coef))
        return cls(g, lambda x: np.atleast_2d(np.asarray(x, dtype=float))[:, :g.v1_dim] @ coef, dual, "linear")

    @classmethod
    def zero(cls, g: CarnotGroup) -> "InitialData":
        return cls(g, lambda x: np.zeros(len(np.atleast_2d(x))), 0.0, "zero")

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fbar(np.atleast_2d(np.asarray(x, dtype=float))), dtype=float)

    def pullback(self, eps: float) -> Callable:
        """f_eps on cover coordinates (abelian covers only)."""
        if self.group.tag != ABELIAN:
            raise InputError("pullbacks are only defined on abelian covers")
        n = self.group.dim

        def f(x):
            x = np.asarray(x, dtype=float)
            pts = x.reshape(-1, n) if n > 1 else x.reshape(-1, 1)
            return self(eps * pts).reshape(x.shape[:-1] if n > 1 else x.shape)

        return f


@dataclass
class HopfLaxResult:
    value: float
    argmin: np.ndarray


def search_radius(lbar_pair: tuple, lam: float, T: float, slack: float = 0.25) -> float:
    """Radius confining the Hopf-Lax minimizer: (A - Lambda) d <= T B(A)."""
    a, b = lbar_pair
    if a <= lam:
        raise InputError("superlinearity slope must exceed the Lipschitz constant")
    return T * b / (a - lam) + slack


def hopf_lax_operator(lbar: Callable, g: CarnotGroup, f: Callable, xbar, T: float, radius: float,
                      n: int = 41, levels: int = 6) -> HopfLaxResult:
    """min over a zoomed w-grid of f(xbar w^-1) + T Lbar(delta_{1/T} w), w in the graded box."""
    if not T > 0:
        raise InputError("T must be positive")
    x = np.asarray(xbar, dtype=float).reshape(g.dim)
    deg = g.degrees
    half = radius ** deg
    center = np.zeros(g.dim)
    best_w, best_v = None, np.inf
    for level in range(levels):
        axes = [np.linspace(c - h, c + h, n) for c, h in zip(center, half)]
        W = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, g.dim)
        if g.tag == ABELIAN:
            Y = x - W
        else:
            Y = np.array([carnot_multiply(g, x, -w) for w in W])
        vals = np.asarray(f(Y), dtype=float).reshape(-1) + T * np.asarray(
            lbar(W / T ** deg), dtype=float).reshape(-1)
        k = int(np.argmin(vals))
        if level == 0:
            idx = np.unravel_index(k, (n,) * g.dim)
            if any(i in (0, n - 1) for i in idx):
                raise RangeError("Hopf-Lax minimizer on the search-box boundary")
        if vals[k] < best_v:
            best_v, best_w = float(vals[k]), W[k]
        center = best_w
        half = 2.0 * half / (n - 1)
    y = x - best_w if g.tag == ABELIAN else carnot_multiply(g, x, -best_w)
    return HopfLaxResult(best_v, y)


def hopf_lax_limit(lbar: Callable, data: InitialData, xbar, T: float, radius: float | None = None,
                   lbar_pair: tuple | None = None, **kw) -> HopfLaxResult:
    """vbar(xbar, T) for datum ``data``; the search radius follows from (A, B(A)) when not given."""
    if radius is None:
        if lbar_pair is None:
            raise InputError("need a search radius or a superlinearity pair")
        radius = search_radius(lbar_pair, data.lipschitz, T)
    return hopf_lax_operator(lbar, data.group, data, xbar, T, radius, **kw)


def sample_net(g: CarnotGroup, R: float, n: int) -> np.ndarray:
    """Kronecker points of the graded box [-R, R]^dim kept when d_inf(e, x) <= R; includes e."""
    if n < 1:
        raise InputError("need at least one net point")
    dim = g.dim
    alpha = np.sqrt(np.array([2.0, 3.0, 5.0, 7.0])[:dim]) % 1.0
    if dim == 1:
        alpha = np.array([(np.sqrt(5.0) - 1) / 2])
    pts = [np.zeros(dim)]
    k = 1
    while len(pts) < n and k < 100 * n:
        u = (0.5 + k * alpha) % 1.0
        p = (2 * u - 1) * R ** g.degrees
        if float(limit_norm(g, p)[0]) <= R + 1e-12:
            pts.append(p)
        k += 1
    return np.array(pts)


# ---------------------------------------------------------------- rescaled side


def _lo_spec(spec: DiscretizationSpec, model: LagrangianModel, reach: float) -> DiscretizationSpec:
    need = reach + model.a_max * spec.h_t * 4 + 2.0
    return spec if spec.r_box >= need else replace(spec, r_box=float(np.ceil(need)))


def default_reach(data: InitialData, R: float, T: float, eps: float, lbar_pair=(2.0, 2.0)) -> float:
    """Cover half-width covering B(R) under h_eps and the minimizer excursion."""
    lam = max(data.lipschitz, 1.0)
    a, b = lbar_pair
    a = max(a, 2 * lam)
    excursion = T * b / (a - lam) + T
    return (R + excursion) / eps + 2.0


def solve_rescaled(model: LagrangianModel, data: InitialData, eps: float, T: float, spec: DiscretizationSpec,
                   reach: float, x0=None, track_origin: bool = False) -> ValueTable:
    x0 = np.zeros(model.dim) if x0 is None else as_points(x0, model.dim).reshape(model.dim)
    sp = _lo_spec(spec, model, reach)
    return lax_oleinik_solve(model, data.pullback(eps), eps, T, sp, center=x0, track_origin=track_origin)


def lattice_node(eps: float, xbar, x0, dim: int) -> np.ndarray:
    g = CarnotGroup.abelian(dim)
    gamma = rescale_map_h(g, GroupPresentation.abelian(dim), eps, xbar)
    return as_points(x0, dim).reshape(dim) + np.asarray(gamma.coords, dtype=float)


def rescaled_solution_at(model: LagrangianModel, data: InitialData, eps: float, xbar, T: float,
                         spec: DiscretizationSpec, x0=None, table: ValueTable | None = None,
                         reach: float | None = None) -> float:
    """v^eps(h_eps(xbar) x0, T) from a Lax-Oleinik table (built unless given)."""
    if data.group.tag != ABELIAN:
        raise InputError("the rescaled PDE side is implemented on abelian covers only")
    dim = model.dim
    x0 = np.zeros(dim) if x0 is None else as_points(x0, dim).reshape(dim)
    node = lattice_node(eps, xbar, x0, dim)
    if table is None:
        if reach is None:
            reach = float(np.max(np.abs(node - x0))) + default_reach(data, 0.0, T, eps)
        table = solve_rescaled(model, data, eps, T, spec, reach, x0)
    return table.at(node, T)


# ---------------------------------------------------------------- sweeps


@dataclass
class ConvergenceReport:
    R: float
    T_grid: list
    eps: list
    sup_errors: dict  # "eps,T" -> sup error
    runtimes: dict  # eps -> seconds
    tau_dp: dict
    lipschitz: dict  # eps -> empirical constant of v^eps on the B(R) image
    confinement: dict  # eps -> max d_eps(node, argmin base point)
    net_size: int
    monotone: bool = True
    complete: bool = True
    failure: str = ""
    meta: dict = field(default_factory=dict)

    def error_rows(self) -> list:
        rows = []
        for e in self.eps:
            for t in self.T_grid:
                key = f"{e!r},{t!r}"
                if key in self.sup_errors:
                    rows.append((e, t, self.sup_errors[key]))
        return rows

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=float)


def convergence_sweep(model: LagrangianModel, data: InitialData, eps_list, R: float, T_grid,
                      spec: DiscretizationSpec, beta: BetaFunction, x0=None, n_net: int = 33,
                      tol: float | None = None) -> ConvergenceReport:
    """sup over a net of B(R) of |v^eps(h_eps(xbar) x0, T) - vbar(xbar, T)| for each (eps, T).

    Sub-operation failures stop the sweep; the report then carries the
    finished cells with ``complete = False`` and the failure message.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InputError("eps_list must be strictly decreasing")
    T_grid = [float(t) for t in T_grid]
    g = data.group
    if g.tag != ABELIAN or g.dim != model.dim:
        raise InputError("convergence sweeps run on abelian covers of matching dimension")
    dim = model.dim
    x0 = np.zeros(dim) if x0 is None else as_points(x0, dim).reshape(dim)
    lbar = lbar_from_beta(beta, g)
    pair = _pair(beta, data.lipschitz)
    net = sample_net(g, R, n_net)
    report = ConvergenceReport(R, T_grid, eps_list, {}, {}, {}, {}, {}, len(net))
    # beta is normalized; shift the limit to the action level of ``model``
    shift = beta.offset - beta.model_offset + model.offset
    limits = {}
    try:
        for t in T_grid:
            for i, xb in enumerate(net):
                limits[(i, t)] = hopf_lax_limit(lbar, data, xb, t, lbar_pair=pair).value + t * shift
        for e in eps_list:
            t0 = time.perf_counter()
            reach = default_reach(data, R, max(T_grid), e, pair)
            table = solve_rescaled(model, data, e, max(T_grid), spec, reach, x0, track_origin=True)
            conf = 0.0
            for t in T_grid:
                err = 0.0
                for i, xb in enumerate(net):
                    node = lattice_node(e, xb, x0, dim)
                    v = table.at(node, t)
                    err = max(err, abs(v - limits[(i, t)]))
                    y = table.origin_at(node, t)
                    conf = max(conf, e * float(np.linalg.norm(node - y)))
                report.sup_errors[f"{e!r},{t!r}"] = err
            lam = min(T_grid)
            report.lipschitz[repr(e)] = lipschitz_estimate(table, lam, window=(x0, R / e))
            report.confinement[repr(e)] = conf
            report.tau_dp[repr(e)] = float(table.tau_dp) if np.isfinite(table.tau_dp) else 0.0
            report.runtimes[repr(e)] = time.perf_counter() - t0
    except HomogError as exc:
        report.complete = False
        report.failure = f"{type(exc).__name__}: {exc}"
        report.meta["exception"] = type(exc).__name__
    tolerance = tol if tol is not None else TAU_OPT + max(report.tau_dp.values(), default=0.0)
    for t in T_grid:
        seq = [report.sup_errors[f"{e!r},{t!r}"] for e in eps_list if f"{e!r},{t!r}" in report.sup_errors]
        if any(b > a + tolerance for a, b in zip(seq, seq[1:])):
            report.monotone = False
    report.meta["tolerance"] = tolerance
    return report


def _pair(beta: BetaFunction, lam: float) -> tuple:
    a = max(2.0 * lam, 1.0)
    b = superlinearity(beta, (a,))[a]
    return a, max(b, 1e-9)


# ---------------------------------------------------------------- further checks


@dataclass
class BasePointReport:
    discrepancy: float
    bound: float
    lipschitz: float


def base_point_independence(model: LagrangianModel, data: InitialData, eps: float, xbars, x0_list, T: float,
                            spec: DiscretizationSpec) -> BasePointReport:
    """max |v^eps(h_eps(x) x0 , T) - v^eps(h_eps(x) x1, T)| and the bound K eps d(x0, x1) + tau_dp."""
    dim = model.dim
    x0s = [as_points(p, dim).reshape(dim) for p in x0_list]
    xbars = np.atleast_2d(np.asarray(xbars, dtype=float).reshape(-1, dim))
    R = float(np.max(np.abs(xbars))) if xbars.size else 0.0
    reach = default_reach(data, R, T, eps) + 1.0
    vals, k_emp, tau = [], 0.0, 0.0
    for x0 in x0s:
        table = solve_rescaled(model, data, eps, T, spec, reach, x0)
        vals.append([table.at(lattice_node(eps, xb, x0, dim), T) for xb in xbars])
        k_emp = max(k_emp, lipschitz_estimate(table, T, window=(x0, R / eps + 1.0)))
        if np.isfinite(table.tau_dp):
            tau = max(tau, float(table.tau_dp))
    vals = np.asarray(vals)
    disc = float(np.max(vals.max(axis=0) - vals.min(axis=0))) if len(x0s) > 1 else 0.0
    diam = max((float(np.linalg.norm(a - b)) for a in x0s for b in x0s), default=0.0)
    k = max(data.lipschitz, k_emp)
    return BasePointReport(disc, k * eps * diam + tau, k)


@dataclass
class CellReport:
    p: float
    hbar_evolution: float
    hbar_alpha: float
    residual: float
    slopes: list


def cell_problem_check(model: LagrangianModel, p, T_list, spec: DiscretizationSpec,
                       beta: BetaFunction | None = None, rel_tol: float = 0.02) -> CellReport:
    """Compare alpha(p) with -lim u(., T)/T for the p-twisted periodic evolution from u = 0."""
    if model.dim != 1:
        raise InputError("the cell-problem check uses one-dimensional models")
    p = float(np.asarray(p, dtype=float).reshape(-1)[0])
    ts = np.asarray(T_list, dtype=float)
    if len(ts) < 2 or np.any(np.diff(ts) <= 0):
        raise InputError("T_list must be increasing with at least two entries")
    grid = periodic_grid(spec, 1)
    n = _n_steps(float(ts[-1]), spec.h_t)
    res = dp_sweep(model, spec, grid, np.zeros((1,) + grid.shape), n, tilt=[p])
    means = np.array([res.values[0, _n_steps(float(t), spec.h_t)].mean() for t in ts])
    slopes = list(-(means[1:] - means[:-1]) / (ts[1:] - ts[:-1]))
    hbar = float(slopes[-1])
    if len(slopes) > 1 and abs(slopes[-1] - slopes[-2]) > rel_tol * max(1.0, abs(hbar)):
        raise NonconvergenceError("twisted evolution slope not settled", best_residual=abs(slopes[-1] - slopes[-2]))
    if beta is None:
        beta = default_beta(model, spec)
    alpha = mather_alpha(beta, [p], raw=True) - (model.offset - beta.model_offset)
    return CellReport(p, hbar, float(alpha), abs(hbar - alpha), [float(s) for s in slopes])


def default_beta(model: LagrangianModel, spec: DiscretizationSpec, h_max: float = 2.0,
                 dh: float = 0.25, T_list=(4.0, 8.0, 16.0)) -> BetaFunction:
    """Closed form for kinetic models; DP-sampled and midpoint-convexified otherwise.

    Sampling raises the velocity bound to 4 h_max so fast minimizers are not truncated.
    """
    if model.kind == "kinetic":
        return BetaFunction.quadratic(model.dim, radius=max(8.0, h_max), n=int(2 * max(8.0, h_max) / dh) + 1)
    from .effective import convexify

    m = int(round(h_max / dh))
    axes = tuple(dh * np.arange(-m, m + 1) for _ in range(model.dim))
    sampler = model.with_a_max(max(model.a_max, 4.0 * h_max))
    return convexify(sample_beta(sampler, axes, list(T_list), spec))
