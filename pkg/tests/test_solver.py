import math
from dataclasses import replace

import numpy as np
import pytest

from bltrick import energy as en
from bltrick import solver as so
from bltrick.grid import Profile, integrate_radial, make_grid, rescale_grid
from bltrick.model import NoPositiveGError, builtin, from_expressions
from bltrick.verify import el_residual


def test_plateau_seed(pos_spec):
    g = make_grid(3, 30.0, 2048)
    seed = so.build_plateau_seed(pos_spec, g, 2.0, 5.0, 1.0)
    assert en.psi(seed, pos_spec) > 0
    assert seed.values[0] == 2.0 and seed.values[-1] == 0.0
    with pytest.raises(so.HypothesisError):
        so.build_plateau_seed(pos_spec, g, 1.0, 5.0, 1.0)


def test_plateau_doubling_scales_bulk_by_eight(pos_spec):
    g = make_grid(3, 60.0, 8192)

    def bulk(t):
        seed = so.build_plateau_seed(pos_spec, g, 2.0, t, 1.0)
        inside = g.radii <= t
        return integrate_radial(g, np.where(inside, pos_spec.G(seed.values), 0.0))

    ratio = bulk(10.0) / bulk(5.0)
    assert 7.0 < ratio < 9.0


def test_plateau_that_cannot_fit(pos_spec):
    with pytest.raises(so.NoNegativeLevelError):
        so.find_negative_seed(pos_spec, make_grid(3, 1.5, 64), 4)


def test_negative_seed_follows_scaling_formula(pos_spec, pos_grid):
    seed = so.build_plateau_seed(pos_spec, pos_grid, 2.0, 5.0, 1.0)
    Phi, Psi = en.phi(seed), en.psi(seed, pos_spec)
    half = rescale_grid(seed, 0.25)
    # t^{k(N-2)} Phi^k / k - t^N Psi with t = 1/2, k = 4, N = 3
    expected = 2.0**-4 * Phi**4 / 4 - 2.0**-3 * Psi
    assert en.Jh(half, pos_spec, 4) == pytest.approx(expected, rel=1e-12)
    small = so.build_plateau_seed(pos_spec, pos_grid, 2.0, 1.0, 1.0)
    found = so.find_negative_seed(pos_spec, pos_grid, 4, seed=small)
    assert en.Jh(found, pos_spec, 4) < 0


def test_lambda_and_absorb():
    g = make_grid(3, 4.0, 64)
    u = Profile(g, 4.0 - g.radii)
    unit = Profile(g, u.values / math.sqrt(en.phi(u)))
    assert so.lambda_of(unit, 7) == pytest.approx(1.0, rel=1e-14)
    two = Profile(g, unit.values * math.sqrt(2.0))
    assert so.lambda_of(two, 2) == pytest.approx(0.5, rel=1e-14)
    assert so.lambda_of(two, 3) == pytest.approx(0.25, rel=1e-14)
    assert np.array_equal(so.absorb(u, 1.0).grid.radii, g.radii)
    assert en.phi(so.absorb(u, 0.25)) == pytest.approx(0.5 * en.phi(u), rel=1e-14)
    with pytest.raises(so.ZeroMinimizerError):
        so.lambda_of(Profile(g, np.zeros(65)), 4)


def test_ground_state_contract(pos_solution, pos_spec):
    rep = pos_solution
    assert rep.converged and rep.Jh_star < 0 and rep.lam > 0
    assert rep.trace_monotone
    assert all(b <= a for a, b in zip(rep.trace, rep.trace[1:]))
    L2, Linf = el_residual(rep.solution, pos_spec)
    assert Linf <= (1 + 1 / rep.lam) * rep.stationarity * 1e3 + 1e-8
    d = rep.to_dict()
    assert "solution" not in d and "wall_time" not in d and d["trace_length"] == len(rep.trace)


def test_critical_seed_returns_immediately(pos_solution, pos_spec):
    cfg = en.TrickConfig(k=4)
    res = so.minimize_Jh(pos_solution.minimizer, pos_spec, cfg)
    assert res.iterations == 0 and res.converged


def test_unconverged_report_is_flagged(pos_spec, pos_grid):
    rep = so.solve_ground(pos_spec, en.TrickConfig(max_iters=3, max_rounds=1), pos_grid)
    assert not rep.converged
    full = so.solve_ground(pos_spec, en.TrickConfig(), pos_grid)
    assert rep.residual_rel > full.residual_rel


def test_solve_rejects_g3_failure(pos_grid):
    spec = from_expressions("-s", case="positive-mass", m=1.0)
    with pytest.raises(NoPositiveGError):
        so.solve_ground(spec, en.TrickConfig(), pos_grid)


def test_zero_mass_contract(zero_solution):
    assert zero_solution.converged and zero_solution.Jh_star < 0
    assert zero_solution.pohozaev_normalized < 5e-3


def test_multi_count_one_is_ground(pos_spec, pos_grid, pos_solution):
    reps = so.solve_multi(pos_spec, en.TrickConfig(), pos_grid, 1)
    assert len(reps) == 1
    assert np.array_equal(reps[0].solution.values, pos_solution.solution.values)


def test_multi_solutions_have_distinct_node_counts(multi_solutions):
    assert sorted(r.nodes for r in multi_solutions) == [1, 2, 3]
    for rep in multi_solutions:
        assert len(so._lobes(rep.solution.values)) == rep.nodes


def test_multi_filters_duplicates(monkeypatch, multi_spec, graded_grid, zero_solution):
    calls = []

    def fake(spec, config, grid, j, width=1.0):
        calls.append(j)
        return replace(zero_solution, flags=[])

    monkeypatch.setattr(so, "solve_nodal", fake)
    reps = so.solve_multi(multi_spec, en.TrickConfig(), graded_grid, 3)
    assert calls == [1, 2, 3]
    assert len(reps) == 1
    assert any("duplicate" in f for f in reps[0].flags)
    assert any("fewer-than-requested" in f for f in reps[0].flags)


def test_sphere_probe_contract(multi_spec, graded_grid):
    res = so.sphere_probe(multi_spec, graded_grid, 4, 1)
    r, sup = res
    assert r > 0 and sup < 0
    pts = so.sphere_points(3, 40)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)


def test_system_symmetry(pos_grid):
    from bltrick.model import SystemSpec

    cpl = SystemSpec.from_expressions("u^2*v^2 - (u^2+v^2)/2", "2*u*v^2 - u", "2*u^2*v - v")
    rep = so.solve_system(cpl, en.TrickConfig(), pos_grid)
    vals = np.atleast_2d(rep.solution.values)
    assert rep.converged
    assert np.max(np.abs(vals[0] - vals[1])) <= 1e-10 * np.max(np.abs(vals))


def test_nodal_solution_is_a_critical_point_of_Jh(multi_spec, graded_grid):
    rep = so.solve_nodal(multi_spec, en.TrickConfig(), graded_grid, 2)
    assert rep.converged and rep.nodes == 2 and rep.Jh_star < 0
    assert rep.stationarity < 1e-6
