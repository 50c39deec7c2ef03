import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bltrick.model import (
    ModelError,
    NoPositiveGError,
    SystemSpec,
    builtin,
    check_conditions,
    critical_exponent,
    find_xi,
    from_expressions,
    primitive_G,
)


@pytest.fixture(scope="module")
def pmm():
    return builtin("power_minus_mass", p=3, m=1)


@pytest.fixture(scope="module")
def dp():
    return builtin("double_power", a=7, b=3)


@pytest.fixture(scope="module")
def tabulated():
    # same g as power_minus_mass(3, 1) but G built by quadrature
    return from_expressions("s^3 - s", case="positive-mass", m=1.0)


def test_builtin_values(pmm, dp):
    assert primitive_G(pmm, 2.0) == 2.0
    assert primitive_G(pmm, 1.0) == -0.25
    assert primitive_G(pmm, math.sqrt(2.0)) == pytest.approx(0.0, abs=1e-15)
    assert primitive_G(pmm, 0.0) == 0.0
    assert primitive_G(dp, 1.0) == 0.125
    assert primitive_G(dp, 2.0) == 3.875
    assert primitive_G(dp, 0.0) == 0.0
    assert critical_exponent(3) == 6.0


def test_builtin_parameter_checks():
    with pytest.raises(ModelError):
        builtin("power_minus_mass", p=6, m=1)
    with pytest.raises(ModelError):
        builtin("power_minus_mass", p=3, m=0)
    with pytest.raises(ModelError):
        builtin("double_power", a=4, b=3)
    with pytest.raises(ModelError):
        builtin("nonsense")


def test_find_xi(pmm, dp):
    xi = find_xi(pmm)
    assert xi > math.sqrt(2.0) and primitive_G(pmm, xi) > 0
    assert primitive_G(pmm, 1.5) == 0.140625
    assert find_xi(dp) <= 1.1
    with pytest.raises(NoPositiveGError):
        find_xi(from_expressions("-s", case="positive-mass", m=1.0))


def test_condition_reports(pmm):
    rep = check_conditions(pmm, 3)
    assert rep.verdicts["g1"].status == "sampled-pass"
    assert rep.verdicts["g2"].status == "sampled-pass"
    assert rep.ok
    multi = builtin("double_power", a=7, b=3, case="zero-mass-multi")
    rep = check_conditions(multi, 3)
    assert rep.verdicts["g7"].status == "sampled-pass"
    assert rep.verdicts["g8"].status == "sampled-pass"
    relabeled = from_expressions("s^3 - s", G="s^4/4 - s^2/2", case="zero-mass")
    rep = check_conditions(relabeled, 3)
    assert "g4" in rep.failed
    assert rep.verdicts["g4"].witness == (1e-6,)
    bad = check_conditions(from_expressions("-s", case="positive-mass", m=1.0), 3)
    assert "g3" in bad.failed
    assert all(rep.verdicts[h].witness for h in rep.failed)


def test_case_mass_consistency():
    with pytest.raises(ModelError):
        from_expressions("s^7", case="zero-mass", m=1.0)
    with pytest.raises(ModelError):
        from_expressions("s^3 - s", case="positive-mass", m=0.0)


def test_tabulated_primitive_accuracy(tabulated, pmm):
    s = np.linspace(0.0, tabulated.table_range, 2001)
    err = np.abs(tabulated.G(s) - pmm.G(s))
    assert np.all(err <= 1e-10 * (1 + s))


def test_system_spec():
    sys_ = SystemSpec.from_expressions("u^2*v^2 - (u^2+v^2)/2", "2*u*v^2 - u", "2*u^2*v - v")
    assert sys_.potential(np.array(2.0), np.array(2.0)) == 12.0
    t0, s0 = sys_.find_witness()
    assert sys_.potential(np.array(t0), np.array(s0)) > 0
    assert check_conditions(sys_, 3).ok
    numeric = SystemSpec.from_expressions("u^2*v^2 - (u^2+v^2)/2")
    assert numeric.grad_u(np.array(2.0), np.array(2.0)) == pytest.approx(14.0, rel=1e-6)
    with pytest.raises(ModelError):
        SystemSpec.from_expressions("u^2*v^2 - (u^2+v^2)/2", "u*v^2", "2*u^2*v - v")
    with pytest.raises(ModelError):
        SystemSpec.from_expressions("1 + u^2")
    with pytest.raises(NoPositiveGError):
        SystemSpec.from_expressions("-(u^2+v^2)").find_witness()


# -- properties -------------------------------------------------------------

amps = st.floats(min_value=1e-6, max_value=20.0)


@settings(max_examples=80, deadline=None)
@given(amps)
def test_odd_extension_builtins(s):
    for spec in (builtin("power_minus_mass", p=3, m=1), builtin("double_power", a=7, b=3)):
        x = np.array([s])
        assert spec.g(-x)[0] == -spec.g(x)[0]
        assert spec.G(-x)[0] == spec.G(x)[0]


@settings(max_examples=80, deadline=None)
@given(st.floats(min_value=1e-6, max_value=9.0))
def test_odd_extension_expressions(s):
    spec = from_expressions("s^3 - s", case="positive-mass", m=1.0)
    x = np.array([s])
    assert abs(spec.g(-x)[0] + spec.g(x)[0]) <= 1e-12 * (1 + abs(spec.g(x)[0]))
    assert abs(spec.G(-x)[0] - spec.G(x)[0]) <= 1e-12 * (1 + abs(spec.G(x)[0]))


@settings(max_examples=80, deadline=None)
@given(st.floats(min_value=0.05, max_value=5.0))
def test_primitive_is_differentiable(s):
    h = 1e-5
    for spec in (builtin("power_minus_mass", p=3, m=1), builtin("double_power", a=7, b=3)):
        if spec.name == "double_power" and abs(s - 1.0) < 2 * h:
            continue
        d = (primitive_G(spec, s + h) - primitive_G(spec, s - h)) / (2 * h)
        g = float(spec.g(np.array([s]))[0])
        assert abs(d - g) <= 1e-6 * max(abs(g), 1.0)


@settings(max_examples=80, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0))
def test_power_minus_mass_small_amplitude_bound(s):
    spec = builtin("power_minus_mass", p=3, m=1)
    C = 1.0
    assert primitive_G(spec, s) <= -(spec.m / 4) * s * s + C * s**6 + 1e-15
