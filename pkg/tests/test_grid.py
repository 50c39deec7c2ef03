import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bltrick.grid import (
    GridError,
    Profile,
    TruncationLossError,
    dirichlet_energy,
    grid_from_radii,
    integrate_radial,
    make_grid,
    profile_from_csv,
    profile_to_csv,
    rearrange_radial,
    rescale_grid,
    resample,
)


def test_sphere_area():
    assert make_grid(3, 1.0, 16).omega == pytest.approx(4 * math.pi, rel=1e-15)
    assert make_grid(4, 1.0, 16).omega == pytest.approx(2 * math.pi**2, rel=1e-15)


def test_uniform_spacing():
    g = make_grid(3, 30.0, 2048)
    assert np.allclose(g.dr, 30.0 / 2048, rtol=0, atol=1e-13)


@pytest.mark.parametrize("grading", ["uniform", ("geometric", 1.01), "equal-measure"])
@pytest.mark.parametrize("N", [3, 4, 5])
def test_weights_partition_ball(grading, N):
    g = make_grid(N, 7.0, 300, grading)
    assert g.omega * g.weights.sum() == pytest.approx(g.omega * 7.0**N / N, rel=1e-12)
    assert np.all(np.diff(g.radii) > 0)


def test_integrate_examples():
    g = make_grid(3, 1.0, 512)
    assert integrate_radial(g, np.ones(g.M + 1)) == pytest.approx(4 * math.pi / 3, rel=1e-10)
    assert integrate_radial(g, np.zeros(g.M + 1)) == 0.0
    assert integrate_radial(g, g.radii) == pytest.approx(math.pi, rel=1e-4)


def test_second_order_quadrature():
    errs = []
    for M in (64, 128, 256):
        g = make_grid(3, 2.0, M)
        errs.append(abs(integrate_radial(g, np.cos(g.radii)) - _exact_cos()))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.9


def _exact_cos():
    # 4 pi int_0^2 r^2 cos r dr
    r = 2.0
    return 4 * math.pi * ((r * r - 2) * math.sin(r) + 2 * r * math.cos(r))


def test_dirichlet_examples():
    g = make_grid(3, 1.0, 1024)
    assert dirichlet_energy(Profile(g, np.zeros(g.M + 1))) == 0.0
    assert dirichlet_energy(Profile(g, 1 - g.radii)) == pytest.approx(2 * math.pi / 3, abs=1e-3)
    assert dirichlet_energy(Profile(g, 1 - g.radii**2)) == pytest.approx(8 * math.pi / 5, abs=1e-3)


def test_rescale_examples():
    g = make_grid(3, 16.0, 16)
    p = Profile(g, 16.0 - g.radii)
    q = rescale_grid(p, 4.0)
    assert np.array_equal(q.grid.radii, 2 * g.radii)
    assert np.array_equal(q.values, p.values)
    assert np.array_equal(rescale_grid(p, 1.0).grid.radii, g.radii)
    assert dirichlet_energy(q) == pytest.approx(2 * dirichlet_energy(p), rel=1e-12)
    with pytest.raises(GridError):
        rescale_grid(p, 0.0)


def test_resample_examples():
    g = make_grid(3, 1.0, 64)
    tent = Profile(g, 1 - g.radii)
    same = resample(tent, g)
    assert np.array_equal(same.values, tent.values)
    fine = make_grid(3, 1.0, 128)
    up = resample(tent, fine)
    assert dirichlet_energy(up) == pytest.approx(dirichlet_energy(tent), abs=1e-3)
    plateau = np.ones(g.M + 1)
    plateau[-1] = 0.0
    moved = resample(Profile(g, plateau), fine)
    shared = np.isin(fine.radii[:-1], g.radii[:-1])
    assert np.all(moved.values[:-1][shared] == 1.0)


def test_resample_truncation_guard():
    g = make_grid(3, 10.0, 100)
    vals = np.cos(g.radii * math.pi / 20)
    vals[-1] = 0.0
    p = Profile(g, vals)
    with pytest.raises(TruncationLossError):
        resample(p, make_grid(3, 5.0, 100))
    assert resample(p, make_grid(3, 5.0, 100), strict=False).values[-1] == 0.0


def test_rearrange_examples():
    g = make_grid(3, 1.0, 16, "equal-measure")
    vals = np.zeros(17)
    vals[:3] = [0.2, 0.5, 0.1]
    out = rearrange_radial(Profile(g, vals)).values
    assert list(out[:3]) == [0.5, 0.2, 0.1]
    dec = Profile(g, np.linspace(1, 0, 17))
    assert np.array_equal(rearrange_radial(dec).values, dec.values)


def test_profile_validation():
    g = make_grid(3, 1.0, 16)
    with pytest.raises(GridError):
        Profile(g, np.ones(17))
    with pytest.raises(GridError):
        Profile(g, np.zeros(10))
    with pytest.raises(GridError):
        make_grid(3, 1.0, 8)
    with pytest.raises(GridError):
        make_grid(2, 1.0, 16)


def test_csv_roundtrip():
    g = make_grid(3, 2.0, 32, ("geometric", 1.05))
    vals = np.cos(g.radii * math.pi / 4)
    vals[-1] = 0.0
    p = Profile(g, vals)
    text = profile_to_csv(p)
    assert text.splitlines()[0] == "r,u"
    back = profile_from_csv(text, 3)
    assert np.array_equal(back.values, p.values)
    assert np.array_equal(back.grid.radii, g.radii)
    two = Profile(g, np.stack([p.values, 2 * p.values]))
    assert profile_to_csv(two).splitlines()[0] == "r,u,v"


# -- properties -------------------------------------------------------------

lams = st.floats(min_value=1e-3, max_value=1e3)


@settings(max_examples=60, deadline=None)
@given(lams, lams)
def test_rescale_is_a_group_action(a, b):
    g = make_grid(3, 5.0, 32)
    p = Profile(g, 5.0 - g.radii)
    left = rescale_grid(rescale_grid(p, a), b)
    right = rescale_grid(p, a * b)
    # sqrt(a) sqrt(b) and sqrt(ab) differ by a few units in the last place
    assert np.allclose(left.grid.radii, right.grid.radii, rtol=1e-15, atol=0)
    assert np.array_equal(left.values, p.values)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=16, max_size=16))
def test_rearrange_idempotent_and_measure_preserving(vals):
    g = make_grid(3, 3.0, 16, "equal-measure")
    v = np.array(vals + [0.0])
    once = rearrange_radial(Profile(g, v))
    twice = rearrange_radial(once)
    assert np.array_equal(once.values, twice.values)
    assert sorted(once.values) == sorted(np.abs(v))
    G = once.values**4 / 4 - once.values**2 / 2
    G0 = np.abs(v) ** 4 / 4 - v**2 / 2
    psi0 = integrate_radial(g, G0)
    assert abs(integrate_radial(g, G) - psi0) <= 1e-8 * (1 + abs(psi0))


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=16, max_value=400), st.floats(min_value=0.1, max_value=100),
       st.sampled_from(["uniform", "equal-measure", ("geometric", 1.02)]))
def test_grid_invariants(M, R, grading):
    g = make_grid(3, R, M, grading)
    assert g.M == M and g.R == pytest.approx(R, rel=1e-15)
    assert np.all(np.diff(g.radii) > 0)
    assert g.omega * g.weights.sum() == pytest.approx(g.omega * R**3 / 3, rel=1e-12)


def test_custom_grid_needs_zero_origin():
    with pytest.raises(GridError):
        grid_from_radii(3, np.linspace(0.1, 1, 20))
