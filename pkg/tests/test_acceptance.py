"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
(visible with ``pytest -s`` or in the -v summary of a failure) before it
asserts. Run alone with ``pytest tests/test_acceptance.py -s``.
"""

import math
import time

import numpy as np
import pytest

from nilhomog import cli
from nilhomog.carnot import CarnotGroup, cc_distance, dilate, heisenberg_l2_distance, rescale_map_h
from nilhomog.effective import (TAU_BETA, BetaFunction, finite_scale_action, mather_alpha, midpoint_violation,
                                sample_beta, superlinearity, generalized_beta)
from nilhomog.group import GroupElement, GroupPresentation, ball, ball_growth, word_norms, HEISENBERG
from nilhomog.homogenize import InitialData, cell_problem_check, convergence_sweep, default_beta
from nilhomog.lagrangian import FourierPotential, kinetic, mechanical
from nilhomog.mane import DiscretizationSpec, mane_potential, mane_potentials

SPEC = DiscretizationSpec(h_x=0.05, h_t=0.1, h_v=0.01, r_box=10.0)
H = CarnotGroup.heisenberg()


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def cos_model():
    return mechanical(FourierPotential.cosine(1), 1, a_max=4.0)


def test_criterion_01_kinetic_pipeline(capsys):
    t0 = time.perf_counter()
    model = kinetic(1)
    data = InitialData.cone(CarnotGroup.abelian(1))
    beta = default_beta(model, SPEC)
    rep = convergence_sweep(model, data, [1 / 4, 1 / 8, 1 / 16], 2.0, [1.0], SPEC, beta)
    elapsed = time.perf_counter() - t0
    errs = [e for _, _, e in rep.error_rows()]
    ok = (rep.complete and len(errs) == 3 and all(b < a for a, b in zip(errs, errs[1:]))
          and errs[-1] <= 0.08 and elapsed <= 120.0)
    report(capsys, 1, ok, f"sup errors {[round(e, 5) for e in errs]}, runtime {elapsed:.1f}s")


def test_criterion_02_mechanical_hbar(capsys, cos_model):
    beta = default_beta(cos_model, SPEC)
    via_alpha = mather_alpha(beta, [0.0], raw=True)
    cell = cell_problem_check(cos_model, 0.0, (4.0, 8.0, 16.0), SPEC, beta=beta)
    via_cell = cell.hbar_evolution
    agree = abs(via_alpha - via_cell) / max(abs(via_alpha), abs(via_cell))
    ok = abs(via_alpha - 1.0) <= 0.03 and abs(via_cell - 1.0) <= 0.03 and agree <= 0.02
    report(capsys, 2, ok, f"alpha {via_alpha:.5f}, twisted evolution {via_cell:.5f}, relative gap {agree:.2e}")


def test_criterion_03_rescaling_identity(capsys, cos_model):
    S_vals, T_vals = (0.5, 1.0, 1.5), (0.5, 1.0, 2.0)
    xbars = (0.3, -0.55, 1.1)
    worst, tau = 0.0, 0.0
    for model in (kinetic(1), cos_model):
        tau = max(tau, mane_potential(model, [0.0], SPEC, 12.0).tau_dp)
        for eps in (1 / 4, 1 / 8):
            for S in S_vals:
                for T in T_vals:
                    lam = T / S
                    eps2 = eps * lam
                    if eps2 > 1:
                        continue
                    for x in xbars:
                        lhs = finite_scale_action(model, [x], S, eps, SPEC)
                        rhs = (1 / lam) * finite_scale_action(model, dilate(CarnotGroup.abelian(1), lam, [x]),
                                                              T, eps2, SPEC)
                        worst = max(worst, abs(lhs - rhs))
    ok = worst <= 3 * tau
    report(capsys, 3, ok, f"max |lhs - rhs| = {worst:.3e}, 3 tau_dp = {3 * tau:.3e}")


def test_criterion_04_beta_properties(capsys, cos_model):
    axes = np.arange(-8, 9) * 0.25
    lines, ok = [], True
    for name, model in (("kinetic", kinetic(1)), ("mechanical", cos_model.with_a_max(8.0))):
        b = sample_beta(model, axes, (4.0, 8.0, 16.0), SPEC)
        viol = midpoint_violation(b)
        zero = float(b(0.0))
        bs = superlinearity(b)
        good = viol <= TAU_BETA and zero == 0.0 and all(np.isfinite(v) for v in bs.values())
        ok &= good
        lines.append(f"{name}: midpoint {viol:.1e}, beta(0) {zero}, B(1) {bs[1.0]:.4f}, B(2) {bs[2.0]:.4f}")
    report(capsys, 4, ok, "; ".join(lines))


def test_criterion_05_carnot_geometry(capsys, rng):
    p, q = rng.normal(size=(2, 3))
    base = cc_distance(H, p, q, n_pieces=64)
    worst = max(abs(cc_distance(H, dilate(H, lam, p), dilate(H, lam, q), n_pieces=64) / (lam * base) - 1)
                for lam in (0.5, 2.0, 3.0))
    d1 = cc_distance(H, np.zeros(3), [1, 0, 0], n_pieces=64)
    dt = cc_distance(H, np.zeros(3), [0, 0, 1], n_pieces=64)
    ok = worst <= 1e-3 and abs(d1 - 1) <= 1e-3 and abs(dt - 2 * math.sqrt(math.pi)) <= 5e-3
    report(capsys, 5, ok, f"homogeneity rel err {worst:.1e}, d(e,a) {d1:.6f}, d(e,t) {dt:.6f} "
                          f"(2 sqrt(pi) = {2 * math.sqrt(math.pi):.6f})")


def test_criterion_06_quadratic_beta_identity(capsys):
    q2 = BetaFunction.quadratic(2)
    worst, parts = 0.0, []
    for x in ([1, 0, 0], [0, 0, 1], [1, 1, 0.5]):
        lbar = generalized_beta(q2, H, x, n_pieces=64)
        d = cc_distance(H, np.zeros(3), x, n_pieces=64)
        rel = abs(lbar / (d * d / 2) - 1)
        worst = max(worst, rel)
        parts.append(f"{x}: {lbar:.5f} vs {d * d / 2:.5f} (closed form {heisenberg_l2_distance(x) ** 2 / 2:.5f})")
    report(capsys, 6, worst <= 5e-3, f"max rel err {worst:.1e}; " + "; ".join(parts))


def test_criterion_07_pansu(capsys):
    rng = np.random.default_rng(7)
    # sample points away from the origin, where a relative error is meaningful
    pts = []
    while len(pts) < 10:
        x = rng.uniform(-2, 2, size=2)
        if np.abs(x).sum() >= 1.25:
            pts.append(x)
    z2 = GroupPresentation.abelian(2)
    a2 = CarnotGroup.abelian(2, "l1")
    eps = 1 / 32
    gam = [rescale_map_h(a2, z2, eps, x) for x in pts]
    norms = word_norms(z2, gam, 200)
    errs = [abs(eps * norms[g.coords] / np.abs(x).sum() - 1) for g, x in zip(gam, pts)]
    h3 = GroupPresentation.heisenberg()
    trend = []
    for k, env in ((4, 0.25), (8, 0.15), (16, 0.08)):
        g = rescale_map_h(H, h3, 1 / k, [1.0, 0.0, 0.0])
        trend.append((k, abs(word_norms(h3, [g], 40)[g.coords] / k - 1), env))
    ok = max(errs) <= 0.05 and all(e <= env for _, e, env in trend)
    report(capsys, 7, ok, f"Z2 max rel err {max(errs):.4f}; H3 "
                          + ", ".join(f"k={k}: {e:.3f} (<= {env})" for k, e, env in trend))


def test_criterion_08_growth(capsys):
    z2 = ball_growth(GroupPresentation.abelian(2), 10)
    h3 = ball_growth(GroupPresentation.heisenberg(), 40)
    b4 = ball(GroupPresentation.heisenberg(), 4)
    center = b4.get((0, 0, 1))
    ok = z2.bass_dimension == 2 and h3.bass_dimension == 4 and 3.5 <= h3.fitted_exponent <= 4.5 and center == 4
    report(capsys, 8, ok, f"K(Z2) {z2.bass_dimension}, K(H3) {h3.bass_dimension}, "
                          f"fitted H3 exponent {h3.fitted_exponent:.4f}, |t| in B(4) = {center}")


def test_criterion_09_lipschitz_and_triangle(capsys, cos_model):
    # uniform Lipschitz bound over the eps sweep
    data = InitialData.cone(CarnotGroup.abelian(1))
    ks = {}
    for name, model in (("kinetic", kinetic(1)), ("mechanical", cos_model.shifted(1.0))):
        beta = default_beta(model, SPEC)
        rep = convergence_sweep(model, data, [1 / 4, 1 / 8, 1 / 16], 1.0, [1.0], SPEC, beta, n_net=9)
        ks[name] = [rep.lipschitz[repr(e)] for e in rep.eps]
    uniform = all(np.all(np.isfinite(v)) and max(v) <= 1.25 * v[0] for v in ks.values())
    # triangle inequality phi(x, z, t + s) <= phi(x, y, t) + phi(y, z, s) on grid triples
    rng = np.random.default_rng(11)
    sp = DiscretizationSpec(h_x=0.05, h_t=0.1, h_v=0.01, r_box=4.0)
    sources = np.round(np.linspace(-1.5, 1.5, 13) / sp.h_x) * sp.h_x
    tables = mane_potentials(cos_model, sources, sp, 2.0, center=0.0)
    tau = max(t.tau_dp for t in tables if np.isfinite(t.tau_dp))
    grid = tables[0].grid
    n_t = len(tables[0].times)
    worst, count = -np.inf, 0
    while count < 10_000:
        i, j = rng.integers(len(sources), size=2)
        a, b = rng.integers(1, n_t, size=2)
        if a + b >= n_t:
            continue
        z = tuple(rng.integers(s) for s in grid.shape)
        jy = grid.node_index([sources[j]])
        lhs = tables[i].values[(a + b, *z)]
        rhs = tables[i].values[(a, *jy)] + tables[j].values[(b, *z)]
        count += 1
        if np.isfinite(rhs):
            worst = max(worst, lhs - rhs)
    ok = uniform and worst <= 2 * tau
    k_text = ", ".join(f"{n} {[round(k, 3) for k in v]}" for n, v in ks.items())
    report(capsys, 9, ok, f"Lipschitz by eps: {k_text}; worst triangle excess {worst:.2e} <= 2 tau_dp {2 * tau:.2e}")


def test_criterion_10_determinism(capsys, tmp_path):
    cfg = tmp_path / "kin.cfg"
    cfg.write_text("model.kind = kinetic\nexperiment.datum = cone\nexperiment.eps_list = 1/4, 1/8, 1/16\n"
                   "experiment.R = 2\nexperiment.T_grid = 1\nexperiment.seed = 42\n")
    codes = [cli.run("homogenize", cfg, tmp_path / d, seed=42) for d in ("a", "b")]
    a, b = ((tmp_path / d / "errors.csv").read_bytes() for d in ("a", "b"))
    ok = codes == [0, 0] and a == b
    report(capsys, 10, ok, f"exit codes {codes}, errors.csv identical: {a == b} ({len(a)} bytes)")
