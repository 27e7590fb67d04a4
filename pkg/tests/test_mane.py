import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nilhomog.errors import InputError, RangeError, ResolutionError
from nilhomog.lagrangian import kinetic
from nilhomog.mane import (EDGE, SATURATED, DiscretizationSpec, box_grid, cache_key, lax_oleinik_solve,
                           lipschitz_estimate, mane_potential, mane_potentials, read_table_cache,
                           rescaled_potential, write_table_cache)

# 64-segment direct transcription of the action from 0 to 1 in time 1 for
# L = v^2/2 - cos(2 pi x), minimized with L-BFGS-B from several initial curves.
MECH_PHI_011 = 0.28290244960336025


def test_kinetic_potential_values(kin, spec):
    t = mane_potential(kin, 0.0, spec, 2.0)
    assert t.at(1.0, 1.0) == pytest.approx(0.5, abs=1e-9)
    assert t.at(1.0, 2.0) == pytest.approx(0.25, abs=1e-9)
    assert np.isfinite(t.tau_dp)


def test_mechanical_potential_direct_transcription(mech, fine_spec):
    t = mane_potential(mech, 0.0, fine_spec, 1.0)
    assert abs(t.at(1.0, 1.0) - MECH_PHI_011) <= 0.01 * abs(MECH_PHI_011)


def test_horizon_errors(kin, spec):
    with pytest.raises(InputError):
        mane_potential(kin, 0.0, spec, 0.05)
    with pytest.raises(InputError):
        mane_potential(kin, 0.0, spec, 1.05)
    t = mane_potential(kin, 0.0, spec, 1.0)
    with pytest.raises(InputError):
        t.at(0.0, 1.5)


def test_saturated_velocity_is_a_resolution_error(spec):
    slow = kinetic(1, a_max=1.0)
    t = mane_potential(slow, 0.0, spec, 1.0, estimate_tau=False)
    with pytest.raises(ResolutionError):
        t.at(1.0, 1.0)
    assert t.at(0.5, 1.0) == pytest.approx(0.125, abs=1e-9)


def test_box_edge_is_a_range_error(kin):
    small = DiscretizationSpec(h_x=0.05, h_t=0.1, h_v=0.01, r_box=1.0)
    # with f(y) = -y the minimizer for x sits at y = x + 1, outside the box
    t = lax_oleinik_solve(kin, lambda x: -x, 1.0, 1.0, small, estimate_tau=False)
    with pytest.raises(RangeError):
        t.at(0.5, 1.0)
    wide = DiscretizationSpec(h_x=0.05, h_t=0.1, h_v=0.01, r_box=4.0)
    t = lax_oleinik_solve(kin, lambda x: -x, 1.0, 1.0, wide, estimate_tau=False)
    assert t.at(0.5, 1.0) == pytest.approx(-1.0, abs=1e-9)
    with pytest.raises(RangeError):
        t.at(5.0, 1.0)


def test_spec_validation(kin):
    with pytest.raises(InputError):
        DiscretizationSpec(h_x=0.03)
    with pytest.raises(InputError):
        DiscretizationSpec(h_x=0.05, h_t=0.01).check(kin)
    with pytest.raises(InputError):
        DiscretizationSpec(quadrature="simpson")


def test_rescaled_potential_examples(kin, mech, spec):
    assert rescaled_potential(kin, 0.5, 0.0, 1.0, 1.0, spec) == pytest.approx(0.125, abs=1e-9)
    assert rescaled_potential(kin, 0.25, 0.0, 4.0, 1.0, spec) == pytest.approx(0.5, rel=0.05)
    t = mane_potential(mech, 0.0, spec, 2.0, estimate_tau=False)
    assert rescaled_potential(mech, 1.0, 0.0, 1.0, 2.0, table=t) == t.at(1.0, 2.0)
    with pytest.raises(InputError):
        rescaled_potential(mech, 0.5, 0.0, 1.0, 2.0, table=t)


def test_lax_oleinik_examples(kin, spec):
    t = lax_oleinik_solve(kin, lambda x: np.zeros_like(x), 0.25, 1.0, spec)
    assert np.allclose(t.slice(1.0)[t.clean_mask(-1)], 0.0)
    eps = 0.125
    wide = DiscretizationSpec(h_x=0.05, h_t=0.1, h_v=0.01, r_box=40.0)
    t = lax_oleinik_solve(kin, lambda x: np.abs(eps * x), eps, 1.0, wide)
    assert t.at(2.0 / eps, 1.0) == pytest.approx(1.5, rel=0.05)
    c = 0.37
    t = lax_oleinik_solve(kin, lambda x: np.full_like(x, c), 0.5, 1.0, spec)
    assert np.allclose(t.slice(1.0)[t.clean_mask(-1)], c)


def test_lax_oleinik_time_stamps_are_rescaled(kin, spec):
    t = lax_oleinik_solve(kin, lambda x: np.zeros_like(x), 0.25, 1.0, spec, record_every=5)
    assert t.times[-1] == pytest.approx(1.0)
    assert t.eps == 0.25
    assert np.allclose(np.diff(t.times), 0.25 * 0.5)


def test_lipschitz_examples(kin, spec):
    t = mane_potential(kin, 0.0, spec, 1.0, estimate_tau=False)
    k = lipschitz_estimate(t, 1.0, window=(0.0, 0.5))
    assert 0.4 <= k <= 1.0 + 1e-6
    z = lax_oleinik_solve(kin, lambda x: np.zeros_like(x), 1.0, 1.0, spec, estimate_tau=False)
    assert lipschitz_estimate(z, 0.5) == 0.0
    with pytest.raises(InputError):
        lipschitz_estimate(t, 2.0)


def test_lipschitz_nonincreasing_in_lambda(mech, spec):
    t = lax_oleinik_solve(mech, lambda x: np.abs(0.25 * x), 0.25, 2.0, spec, estimate_tau=False)
    ks = [lipschitz_estimate(t, lam, window=(0.0, 12.0)) for lam in (0.5, 1.0, 1.5, 2.0)]
    assert all(b <= a + 1e-12 for a, b in zip(ks, ks[1:]))


def test_lattice_translation_is_exact(mech, spec):
    a = mane_potential(mech, 0.3, spec, 1.0, center=0.3, estimate_tau=False)
    b = mane_potential(mech, 2.3, spec, 1.0, center=2.3, estimate_tau=False)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.flags, b.flags)


def test_dp_consistency_against_integer_steps(mech, spec):
    t = mane_potential(mech, 0.0, spec, 1.0, estimate_tau=False)
    h_t, h_x = spec.h_t, spec.h_x
    x = t.grid.axis(0)
    for k in range(len(t.times) - 1):
        for m in (-4, -1, 0, 2, 5):
            v = m * h_x / h_t
            cost = h_t * mech(((x - 0.5 * m * h_x))[:, None], np.full((len(x), 1), v))
            src = np.roll(t.values[k], m)
            ok = np.isfinite(src) & np.isfinite(t.values[k + 1])
            ok[:abs(m)] = False
            ok[len(x) - abs(m):] = False
            assert np.all(t.values[k + 1][ok] <= src[ok] + cost[ok] + 1e-12)


def test_triangle_inequality_small(mech, spec, rng):
    srcs = np.arange(-10, 11) * spec.h_x * 4
    tabs = mane_potentials(mech, srcs, spec, 2.0, center=0.0)
    tau = max(t.tau_dp for t in tabs)
    for _ in range(500):
        i, j = rng.integers(len(srcs), size=2)
        z = rng.integers(-40, 41) * spec.h_x
        try:
            lhs = tabs[i].at(z, 2.0)
            rhs = tabs[i].at(srcs[j], 1.0) + tabs[j].at(z, 1.0)
        except (RangeError, ResolutionError):
            continue
        assert lhs <= rhs + 2 * tau + 1e-12


def test_refinement_monotone(mech, spec):
    coarse = mane_potential(mech, 0.0, spec, 1.0)
    fine = mane_potential(mech, 0.0, spec.refined(), 1.0)
    tau = fine.tau_dp
    for x in np.arange(-2, 2.01, 0.25):
        assert fine.at(x, 1.0) <= coarse.at(x, 1.0) + tau


@given(y=st.integers(-20, 20), shift=st.integers(-5, 5))
def test_translation_property(y, shift):
    model = kinetic(1)
    spec = DiscretizationSpec(h_x=0.1, h_t=0.1, h_v=0.05, r_box=3.0)
    a = mane_potential(model, y * 0.1, spec, 0.5, center=y * 0.1, estimate_tau=False)
    b = mane_potential(model, y * 0.1 + shift, spec, 0.5, center=y * 0.1 + shift, estimate_tau=False)
    assert np.array_equal(a.values, b.values)


def test_two_dimensional_kinetic():
    spec = DiscretizationSpec(h_x=0.05, h_t=0.1, h_v=0.05, r_box=2.0)
    t = mane_potential(kinetic(2, a_max=3.0), [0.0, 0.0], spec, 1.0, estimate_tau=False)
    assert t.at([1.0, 0.0], 1.0) == pytest.approx(0.5, abs=1e-9)
    assert t.at([0.5, 0.5], 1.0) == pytest.approx(0.25, abs=1e-9)
    # off-stencil velocities pay for interpolation near the point source
    assert 0.125 <= t.at([0.3, 0.4], 1.0) <= 0.125 * 1.1


def test_cache_round_trip(mech, spec, tmp_path):
    t = mane_potential(mech, 0.0, spec, 0.4)
    assert np.isfinite(t.tau_dp)
    key = cache_key(mech, spec, [0.0])
    assert key == cache_key(mech, spec, [0.0])
    assert key != cache_key(mech, spec, [0.5])
    path = tmp_path / f"{key}.bin"
    write_table_cache(t, path)
    raw = path.read_bytes()
    assert raw[0] == 1 and raw[1] == 1
    back = read_table_cache(path)
    assert np.array_equal(back.values, t.values)
    assert np.array_equal(back.times, t.times)
    assert np.array_equal(back.flags, t.flags)
    assert back.grid == t.grid
    assert back.tau_dp == t.tau_dp


def test_csv_export(kin, spec, tmp_path):
    t = mane_potential(kin, 0.0, spec, 0.2, estimate_tau=False)
    path = tmp_path / "phi.csv"
    t.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,value"
    assert len(lines) == 1 + len(t.times) * t.grid.shape[0]


def test_flags_mark_box_border(kin, spec):
    g = box_grid(spec, 1, 0.0)
    t = mane_potential(kin, 0.0, spec, 0.1, estimate_tau=False)
    assert t.flags[0, 0] & EDGE and t.flags[0, -1] & EDGE
    assert not t.flags[0, g.shape[0] // 2] & SATURATED
