import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picertify import compfn as cf
from picertify.errors import ClassViolationError, DomainError, NotContractiveError, UnreachableError

pos = st.floats(0.05, 20.0)
expo = st.floats(0.3, 3.0)


def random_kinf(draw):
    kind = draw(st.sampled_from(["linear", "power", "sum", "composed", "scaled"]))
    if kind == "linear":
        return cf.linear(draw(pos))
    if kind == "power":
        return cf.power(draw(expo), draw(pos))
    if kind == "sum":
        return cf.add(cf.power(draw(expo), draw(pos)), cf.linear(draw(pos)))
    if kind == "scaled":
        return cf.scaled(draw(pos), cf.power(draw(expo)))
    return cf.compose(cf.power(draw(expo), draw(pos)), cf.add(cf.linear(draw(pos)), cf.power(draw(expo))))


kinf = st.composite(random_kinf)()


def test_linear_algebra_collapses():
    f = cf.compose(cf.linear(2.0), cf.linear(3.0))
    assert f.kind == "linear" and f.gain == 6.0
    assert cf.add(cf.linear(1.0), cf.linear(2.5)).gain == 3.5
    assert cf.compose(cf.identity(), cf.power(2.0)).kind == "power"
    assert cf.inverse(cf.linear(4.0)).gain == 0.25


def test_evaluate_rejects_bad_arguments():
    f = cf.power(2.0)
    with pytest.raises(DomainError):
        f(-1.0)
    with pytest.raises(DomainError):
        f(float("nan"))
    g = cf.from_callable(np.sqrt, s_max=4.0)
    with pytest.raises(DomainError):
        g(5.0)


def test_invert_bounded_function_unreachable():
    f = cf.from_callable(lambda s: 1 - np.exp(-s))
    with pytest.raises(UnreachableError):
        cf.invert(f, 2.0)


def test_invert_zero_function():
    assert cf.invert(cf.zero(), 0.0) == 0.0
    with pytest.raises(UnreachableError):
        cf.invert(cf.zero(), 1.0)


@pytest.mark.parametrize("f", [cf.power(0.5, 3.0), cf.add(cf.power(2.0), cf.linear(1.0)),
                               cf.from_callable(lambda s: s + np.sin(s) / 2)])
def test_inverse_roundtrip_examples(f):
    for y in [1e-6, 0.3, 1.0, 7.0, 1e4]:
        s = cf.invert(f, y)
        assert abs(f(s) - y) <= 1e-10 * max(1.0, y)


@settings(max_examples=200, deadline=None)
@given(kinf, st.lists(st.floats(1e-6, 1e3), min_size=1, max_size=10))
def test_inverse_roundtrip_property(f, ss):
    for s0 in ss:
        y = f(s0)
        s = cf.invert(f, y)
        assert abs(f(s) - y) <= 1e-10 * max(1.0, y)


@settings(max_examples=100, deadline=None)
@given(kinf)
def test_random_compositions_are_kinf(f):
    cf.require_kinf(f, 50.0)


def test_require_kinf_detects_violations():
    with pytest.raises(ClassViolationError):
        cf.require_kinf(cf.from_callable(lambda s: s + 1.0))
    with pytest.raises(ClassViolationError):
        cf.require_kinf(cf.from_callable(lambda s: np.minimum(s, 1.0)), 10.0)


def test_contraction_map_and_iteration():
    m = cf.contraction(cf.linear(0.5), 1.0)
    assert m.gain == 0.5
    assert cf.iterate_contraction(m, 8.0, 3) == pytest.approx(1.0)
    assert cf.contraction(cf.linear(3.0), 1.0)(1.0) == 0.0
    grow = cf.from_callable(lambda s: 1.1 * s)
    with pytest.raises(NotContractiveError):
        cf.iterate_contraction(grow, 1.0, 2)


def test_kl_bound_scans_nonmonotone_maps():
    bump = cf.from_callable(lambda s: s * np.exp(-s))
    assert cf.kl_bound(bump, 5.0, 1) == pytest.approx(math.exp(-1), rel=1e-10)
    assert cf.kl_bound(bump, 0.5, 1) == pytest.approx(0.5 * math.exp(-0.5), rel=1e-12)


def test_klbound_closed_form_matches_iteration():
    b = cf.KLBound.iterated(cf.contraction(cf.linear(0.2)), outer=cf.linear(2.0), inner=cf.linear(3.0))
    e = b.closed_form()
    for s in [0.1, 1.0, 5.0]:
        for k in [0, 1, 7, 30]:
            assert b.value(s, k) == pytest.approx(e.value(s, k), rel=1e-12)
    np.testing.assert_allclose(b.values(2.0, 30), e.values(2.0, 30), rtol=1e-12)


@pytest.mark.parametrize("beta", [
    cf.KLBound.exponential(3.0, 0.1),
    cf.KLBound.iterated(cf.contraction(cf.power(1.5), 0.5)),
    cf.KLBound.iterated(cf.contraction(cf.linear(0.01))),
])
def test_kl_lattice_passes_for_valid_bounds(beta):
    assert cf.check_kl_lattice(beta, 1.5, k_probe=20000).passed


def test_kl_lattice_rejects_nondecaying_bound():
    assert not cf.check_kl_lattice(cf.KLBound.exponential(1.0, 0.0), 1.0).passed
