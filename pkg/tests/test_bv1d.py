import numpy as np
import pytest

from relaxkit.bv1d import BV1D, derivative, theta_mass, total_variation, trace
from relaxkit.errors import DomainError, RepresentationError
from relaxkit.measure1d import Measure1D, pair
from relaxkit.textio import dumps_toml, loads_toml

I = (0.0, 1.0)


def test_derivative_examples():
    assert derivative(BV1D.constant(I, 3.0)).total_variation == 0
    d = derivative(BV1D.step(I, 0.5, 2.5))
    assert d.atom_x.tolist() == [0.5] and d.atom_w.tolist() == [[2.5]]
    st = BV1D.staircase(I, depth=8)
    d = derivative(st)
    assert d.sing_m.sum() == pytest.approx(1.0) and d.total_variation == pytest.approx(1.0)
    assert not np.any(st.slope)


def test_trace_examples():
    u = BV1D.step(I, 0.5, 2.0)
    assert trace(u, 0.5, "left")[0] == 0.0 and trace(u, 0.5, "right")[0] == 2.0
    lin = BV1D(I, 0.0, np.ones(16))
    assert trace(lin, 0.3, "left")[0] == pytest.approx(0.3)
    assert trace(lin, 0.3, "right")[0] == pytest.approx(0.3)
    two = BV1D.build(I, 0.0, jumps=[(0.25, 1.0), (0.75, -1.0)])
    assert trace(two, 0.9, "left")[0] == 0.0
    with pytest.raises(DomainError):
        trace(u, 0.0, "left")
    with pytest.raises(DomainError):
        trace(u, 1.5, "right")


def test_total_variation_examples():
    assert total_variation(BV1D.constant(I, 1.0)) == 0
    assert total_variation(BV1D.step(I, 0.5, -3.0)) == 3.0
    assert total_variation(BV1D.staircase(I, depth=8)) == pytest.approx(1.0)


def test_invariants():
    with pytest.raises(RepresentationError):
        BV1D(I, 0.0, jumps=[(0.5, 1.0, 1.0)])
    with pytest.raises(RepresentationError):
        BV1D(I, 0.0, jumps=[(0.0, 0.0, 1.0)])
    with pytest.raises(RepresentationError):
        # left trace inconsistent with the anchor
        BV1D(I, 0.0, jumps=[(0.5, 1.0, 2.0)])


def test_pairing_with_constant_gives_increment():
    rng = np.random.default_rng(3)
    u = BV1D.build(I, 0.7, rng.normal(size=32), jumps=[(0.3, 1.0), (0.6, -0.4)])
    d = derivative(u)
    assert pair(d, lambda x: 1.0) == pytest.approx(trace(u, 1.0, "left")[0] - u.anchor[0])
    assert total_variation(u) == pytest.approx(d.total_variation)


def test_value_is_precise_representative():
    u = BV1D.step(I, 0.5, 2.0)
    assert u.scalar_value(np.array([0.25, 0.5, 0.75])).tolist() == [0.0, 1.0, 2.0]
    for x in (0.2, 0.7):
        assert trace(u, x, "left")[0] == trace(u, x, "right")[0]


def test_round_trip_and_theta():
    u = BV1D.build(I, [0.0, 1.0], np.ones((8, 2)), jumps=[(0.5, [1.0, 0.0])])
    back = BV1D.from_document(loads_toml(dumps_toml(u.to_document())))
    assert back == u
    s = BV1D.staircase(I, depth=4)
    assert BV1D.from_document(loads_toml(dumps_toml(s.to_document()))) == s
    assert theta_mass(BV1D.step(I, 0.5, 2.0), Measure1D.dirac(I, 0.5, 3.0)) == pytest.approx(6.0)
