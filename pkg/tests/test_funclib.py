import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relaxkit.errors import HypothesisViolation, RecessionEstimationError, UnsupportedDimension
from relaxkit.funclib import (FunctionModel, check_growth, convex_envelope, get_preset,
                              list_presets, recession, sigma_at)


def test_abs_envelope_is_itself():
    e = convex_envelope(get_preset("abs"), box=(-4, 4))
    x = e.nodes()[..., 0]
    assert np.allclose(e.values, np.abs(x))
    assert e.residual < 1e-12


def test_doublewell_envelope_matches_max_abs_one():
    f = get_preset("doublewell_shifted")
    # drop the closed form so the numeric hull is what gets evaluated
    bare = FunctionModel("dw", "f2", 1, f.func, f.growth)
    e = convex_envelope(bare, box=(-4, 4), resolution=801)
    x = np.linspace(-6, 6, 241)
    assert np.allclose(e(x), np.maximum(np.abs(x), 1.0), atol=1e-12)


def test_doublewell_envelope_brute_force_chords():
    # lower hull as the minimum over all chords of the sampled graph
    f = get_preset("doublewell_shifted")
    bare = FunctionModel("dw", "f2", 1, f.func, f.growth)
    x = np.linspace(-4, 4, 81)
    y = bare(x)
    brute = y.copy()
    for i in range(x.size):
        for j in range(i + 1, x.size):
            t = (x[i:j + 1] - x[i]) / (x[j] - x[i])
            brute[i:j + 1] = np.minimum(brute[i:j + 1], (1 - t) * y[i] + t * y[j])
    e = convex_envelope(bare, box=(-4, 4), resolution=81)
    assert np.allclose(e.values, brute, atol=1e-12)


def test_area_recession_is_norm():
    e = convex_envelope(get_preset("area", 2))
    b = np.array([[3.0, 4.0], [0.0, 0.0], [-1.0, 0.5]])
    assert np.allclose(recession(e, b), np.linalg.norm(b, axis=1))


def test_numeric_recession_of_max_abs_one():
    f = get_preset("max_abs_one")
    bare = FunctionModel("m1", "f2", 1, f.func, f.growth)
    e = convex_envelope(bare)
    assert np.allclose(recession(e, np.array([2.0, -3.0, 0.0])), [2.0, 3.0, 0.0], atol=1e-6)


def test_wiggly_recession_uses_tail_slope():
    e = convex_envelope(get_preset("wiggly_doublewell"))
    assert abs(float(recession(e, 1.0)) - 1.0) < 1e-6
    assert abs(float(recession(e, -1.0)) - 1.0) < 1e-6


def test_recession_estimation_error_on_slow_ratio():
    # convex, but h(T)/T approaches its limit like log(T)/T
    f = FunctionModel("slow", "f2", 1,
                      lambda p: np.abs(p[..., 0]) - 0.95 * np.log1p(np.abs(p[..., 0])),
                      (0.05, 1.0))
    with pytest.raises(RecessionEstimationError):
        convex_envelope(f)


def test_sigma_table_non_increasing_and_bounds():
    e = convex_envelope(get_preset("area", 1))
    assert np.all(np.diff(e.sigma) <= 0)
    b = np.linspace(-1, 1, 21)
    for t in (1.0, 4.0, 64.0):
        gap = np.abs(e(t * b) / t - np.abs(b))
        assert np.all(gap <= sigma_at(e, t) * (np.abs(b) + 1) + 1e-12)


def test_high_dimension_needs_closed_form():
    f = get_preset("abs", 3)
    assert convex_envelope(f).dim == 3
    bare = FunctionModel("abs3", "f2", 3, f.func, f.growth)
    with pytest.raises(UnsupportedDimension):
        convex_envelope(bare)


def test_growth_violation_in_samples_raises():
    bad = FunctionModel("neg", "f2", 1, lambda p: -np.abs(p[..., 0]), (1.0, 1.0))
    with pytest.raises(HypothesisViolation):
        convex_envelope(bad)


@pytest.mark.parametrize("name,role,ok", [("example3_f1", "f1", True), ("abs", "f2", True),
                                          ("square", "f2", False), ("area", "W", True)])
def test_check_growth(name, role, ok):
    rep = check_growth(get_preset(name), role)
    assert rep.passed is ok
    if name == "example3_f1":
        assert rep.lower == pytest.approx(1.0) and rep.upper == pytest.approx(2.0, abs=1e-12)
    if name == "abs":
        assert rep.upper == pytest.approx(1.0)
    if not ok:
        assert "(H2)" in rep.message


def test_presets_listed_and_unknown():
    names = list_presets()
    for n in ("abs", "area", "example3_f1", "doublewell_shifted"):
        assert n in names
    with pytest.raises(KeyError):
        get_preset("nope")


def test_user_preset_directory(tmp_path, monkeypatch):
    x = np.linspace(-8, 8, 33)
    (tmp_path / "mine.toml").write_text(
        'role = "f2"\nlower = 1.0\nupper = 2.0\n[grid]\n'
        f"nodes = {list(map(float, x))}\nvalues = {list(map(float, np.abs(x) + 0.5))}\n")
    monkeypatch.setenv("RELAXKIT_PRESET_PATH", str(tmp_path))
    assert "mine" in list_presets()
    f = get_preset("mine")
    assert f(np.array([2.0]))[0] == pytest.approx(2.5)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["doublewell_shifted", "wiggly_doublewell", "max_abs_one", "area"]))
def test_envelope_dominance_and_idempotence(name):
    f = get_preset(name)
    e = convex_envelope(f, resolution=257)
    x = e.nodes()
    assert np.all(e.values <= f.func(x) + 1e-12)
    again = convex_envelope(FunctionModel("again", "f2", 1, e._eval_points, f.growth),
                            resolution=257)
    assert np.allclose(again.values, e.values, atol=1e-9)
    # midpoint convexity along the grid
    v = e.values
    assert np.all(v[1:-1] <= 0.5 * (v[2:] + v[:-2]) + 1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(0.01, 100))
def test_recession_homogeneity(b, lam):
    e = convex_envelope(get_preset("wiggly_doublewell"))
    assert float(recession(e, lam * b)) == pytest.approx(lam * float(recession(e, b)), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20))
def test_subadditivity_against_recession(y, z):
    e = convex_envelope(get_preset("wiggly_doublewell"))
    assert float(e(y + z)) <= float(e(y)) + float(recession(e, z)) + 1e-9
