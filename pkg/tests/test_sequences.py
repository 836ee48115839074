import numpy as np
import pytest

from relaxkit import sequences as seq
from relaxkit.bv1d import BV1D
from relaxkit.errors import PreconditionError, RepresentationError
from relaxkit.measure1d import Measure1D, pair
from relaxkit.meshfield import NdMeasure, NodalField, RectMesh
from relaxkit.relax import Integrands, evaluate_relaxed_1d, evaluate_relaxed_nd, solve_cell_fw0

I = (0.0, 1.0)


def relaxed_1d(ints, u, v):
    return evaluate_relaxed_1d(ints.f1, ints.f2env, ints.Wenv, ints.f1min, u, v).total


# -- concentration, projection and splitting ----------------------------------


def test_concentrate_lebesgue_two_blocks():
    w = seq.concentrate_measure(Measure1D.from_density(I, np.ones(4)), 1e-2, 2)
    assert w.total_variation == pytest.approx(1.0, abs=1e-14)
    x = w.cell_edges
    assert pair(w, lambda t: (t < 0.5).astype(float)) == pytest.approx(0.5, abs=1e-12)
    left = np.flatnonzero(w.ac[:, 0] * (x[:-1] < 0.5))
    assert abs(0.5 * (x[left[0]] + x[left[-1] + 1]) - 0.25) <= w.cell_width
    support = np.count_nonzero(w.ac[:, 0]) * w.cell_width
    assert 0.5e-2 <= support <= 2e-2


def test_concentrate_zero_and_errors():
    assert seq.concentrate_measure(Measure1D.zero(I), 0.1, 4).total_variation == 0
    with pytest.raises(PreconditionError):
        seq.concentrate_measure(Measure1D.dirac(I, 0.5), 0.1, 4)
    with pytest.raises(PreconditionError):
        seq.concentrate_measure(Measure1D.from_density(I, np.ones(4)), 10.0, 4)


def test_concentrate_pairing_error_bound():
    sigma = Measure1D.from_function(I, lambda x: 1.0 + x, cells=64)
    phi = lambda x: np.cos(3.0 * x)
    exact = pair(sigma, phi)
    for ell in (8, 32):
        w = seq.concentrate_measure(sigma, 1e-3, ell)
        assert w.total_variation == pytest.approx(sigma.total_variation, rel=1e-13)
        assert abs(pair(w, phi) - exact) <= 3.0 / ell * sigma.total_variation


def test_interpolate_examples():
    d = seq.interpolate_Ij(Measure1D.dirac(I, 0.3), 3)
    assert d.ac[:, 0].tolist() == [0, 0, 8, 0, 0, 0, 0, 0]
    flat = Measure1D.from_density(I, np.arange(8.0))
    assert seq.interpolate_Ij(flat, 3) == flat
    edge = seq.interpolate_Ij(Measure1D(I, [(1.0, 2.0), (0.0, 1.0)]), 2)
    assert edge.ac[:, 0].tolist() == [4, 0, 0, 8]
    mixed = Measure1D(I, [(0.5, -1.0)], np.linspace(-1, 1, 16), singular=([0.2], [0.3], [1.0]))
    once = seq.interpolate_Ij(mixed, 2)
    assert seq.interpolate_Ij(once, 2) == once
    assert once.total_variation <= mixed.total_variation + 1e-15


def test_interpolate_nd_keeps_boundary_mass():
    mesh = RectMesh.unit(2, 8)
    v = NdMeasure(mesh, np.ones(mesh.shape), atoms=[([1.0, 1.0], 2.0), ([0.0, 0.5], 1.0)])
    vj = seq.interpolate_Ij(v, 2)
    assert vj.total_mass()[0] == pytest.approx(4.0)
    assert np.array_equal(seq.interpolate_Ij(vj, 2).ac, vj.ac)


def test_decompose_examples():
    x = (np.arange(256) + 0.5) / 256
    bounded = [Measure1D.from_density(I, 0.7 * np.ones(256))] * 6
    assert all(m == 0 for m in seq.decompose_osc_conc(bounded).conc_mass)
    waves = [Measure1D.from_density(I, np.sin(k * x)) for k in range(1, 7)]
    assert all(m == 0 for m in seq.decompose_osc_conc(waves).conc_mass)
    peaks = []
    for k in (2, 4, 8, 16, 32, 64):
        dens = np.zeros(256)
        dens[: 256 // k] = k
        peaks.append(Measure1D.from_density(I, dens))
    split = seq.decompose_osc_conc(peaks, lipschitz_f=lambda z: np.abs(z[:, 0]))
    assert split.conc_mass[-1] == pytest.approx(63 / 64)
    assert split.conc_support[-1] == pytest.approx(1 / 64)
    assert np.all(np.diff(split.conc_support) < 0)
    assert max(split.lipschitz_defect) <= 1e-12
    with pytest.raises(PreconditionError):
        seq.decompose_osc_conc(peaks, mass_bound=0.5)


def test_cutoff_scale():
    s = seq.choose_s(0.01)
    assert seq.cutoff_phi(0.01) >= 2.0 / s and seq.cutoff_phi(0.01) < 4.0 / s
    assert seq.cutoff_value(0.01, s) == 1.0
    assert seq.cutoff_value(seq.support_radius(s) * 1.01, s) == 0.0
    assert seq.plateau_radius(s) >= 0.01


# -- recovery sequences --------------------------------------------------------


@pytest.fixture(scope="module")
def jump_fixture(ex3):
    u, v = BV1D.constant(I, 1.0), Measure1D.dirac(I, 0.5, 10.0)
    cell = solve_cell_fw0(ex3.f1, ex3.f2env, ex3.Wenv, 1.0, 1.0, 10.0, N=256)
    return u, v, cell


def test_jump_recovery_converges(ex3, jump_fixture):
    u, v, cell = jump_fixture
    target = relaxed_1d(ex3, u, v)
    energies = [seq.build_recovery_1d_jump(ex3, u, v, 0.5, p["eps"], cell).energy
                for p in seq.JUMP_SCHEDULE]
    gaps = np.abs(np.array(energies) - target)
    # ramps of width eps/2 undercut the limit by about eps, so the trace rises to it
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] <= 0.05 * target


def test_jump_recovery_trivial_cell(ex3):
    slope = np.ones(16)
    slope[6:10] = 0.0
    u = BV1D(I, 0.5 - 6 / 16, slope)
    v = Measure1D.from_density(I, np.ones(16))
    cell = solve_cell_fw0(ex3.f1, ex3.f2env, ex3.Wenv, 0.5, 0.5, 0.0, N=64)
    p = seq.build_recovery_1d_jump(ex3, u, v, 0.5, 1 / 8, cell)
    assert p.energy == pytest.approx(seq.original_energy_1d(ex3, u, v), abs=1e-9)


def test_jump_recovery_rejects_wide_cells(ex3, jump_fixture):
    u, v, cell = jump_fixture
    with pytest.raises(PreconditionError):
        seq.build_recovery_1d_jump(ex3, u, v, 0.5, 0.6, cell)


def test_pure_jump_recovery(ex3):
    u, v = BV1D.step(I, 0.5, 2.0), Measure1D.zero(I)
    cell = solve_cell_fw0(ex3.f1, ex3.f2env, ex3.Wenv, 2.0, 0.0, 0.0, N=256)
    p = seq.build_recovery_1d_jump(ex3, u, v, 0.5, 2.0 ** -8, cell)
    assert p.energy == pytest.approx(relaxed_1d(ex3, u, v), rel=0.01)


def test_sequence_pair_invariants():
    with pytest.raises(RepresentationError):
        seq.SequencePair(0, BV1D.step(I, 0.5, 1.0), Measure1D.zero(I), 0.0, 0.0)
    with pytest.raises(RepresentationError):
        seq.SequencePair(0, BV1D.constant(I, 1.0), Measure1D.dirac(I, 0.5), 0.0, 0.0)


def _mesh_pair(u_value=1.0, cells=8, v=None):
    mesh = RectMesh.unit(2, cells)
    u = NodalField.constant(mesh, u_value)
    return mesh, u, (NdMeasure(mesh, np.ones(mesh.shape)) if v is None else v(mesh))


def test_nd_recovery_without_measure(ex3_2d):
    mesh, u, v = _mesh_pair(v=lambda m: NdMeasure(m))
    p = seq.build_recovery_nd(ex3_2d, u, v, 0.5, 0.5, 1e-3)
    assert not p.v.spikes and p.energy == pytest.approx(1.0, abs=1e-12)


def test_nd_recovery_delta(ex3_2d):
    mesh, u, v = _mesh_pair(v=lambda m: NdMeasure(m, atoms=[([0.4375, 0.4375], 1.0)]))
    target = evaluate_relaxed_nd(ex3_2d.f1, ex3_2d.f2env, ex3_2d.Wenv, ex3_2d.f1min, u, v).total
    p = seq.build_recovery_nd(ex3_2d, u, v, **seq.SPIKE_SCHEDULE[-1])
    assert target == pytest.approx(2.0)
    assert target - 1e-9 <= p.energy <= 1.05 * target
    assert p.mass == pytest.approx(1.0) and p.support_measure < 1e-12


def test_nd_recovery_lipschitz_bound(ex3_2d):
    c = 0.05
    mesh, u, v = _mesh_pair(u_value=c)
    target = evaluate_relaxed_nd(ex3_2d.f1, ex3_2d.f2env, ex3_2d.Wenv, ex3_2d.f1min, u, v).total
    p = seq.build_recovery_nd(ex3_2d, u, v, **seq.SPIKE_SCHEDULE[3])
    kappa = 1.0
    assert p.energy - target <= kappa * p.params["grad_h_l1"] * c + 1e-6
    assert p.energy >= p.envelope_energy - 1e-12


def test_nd_recovery_retries_when_spikes_are_wide(ex3_2d):
    mesh, u, v = _mesh_pair()
    p = seq.build_recovery_nd(ex3_2d, u, v, 0.5, 0.5, 0.5)
    assert p.params["retries"] >= 1 and p.params["eps"] < 0.5


# -- probes ----------------------------------------------------------------------


def test_constant_pair_probe_has_zero_gap(ex3):
    u = BV1D(I, 0.0, np.linspace(-1, 1, 32))
    v = Measure1D.from_function(I, lambda x: 1 + x, cells=32)
    rep = seq.gamma_probe(u, v, lambda k, p: seq.constant_pair(ex3, u, v, k),
                          [{}, {}], relaxed_1d(ex3, u, v))
    assert rep.status == "PASS" and abs(rep.gap) <= 1e-6


def test_probe_invalid_when_not_converging(ex3):
    u, v = BV1D.constant(I, 1.0), Measure1D.from_density(I, np.ones(4))
    other = Measure1D.from_density(I, np.array([4.0, 0, 0, 0]))
    rep = seq.gamma_probe(u, v, lambda k, p: seq.constant_pair(ex3, u, other, k), [{}],
                          relaxed_1d(ex3, u, v))
    assert rep.status == "INVALID"


def test_mollification_probe_fails_on_jump_fixture(ex3, jump_fixture):
    u, v, _ = jump_fixture
    sched = [{"width": w} for w in seq.MOLLIFIER_BATTERY]
    rep = seq.gamma_probe(u, v, lambda k, p: seq.mollify_1d(ex3, u, v, p["width"], k=k), sched,
                          relaxed_1d(ex3, u, v), jobs=2)
    assert rep.valid and rep.status == "FAIL" and rep.gap > 1.0
    assert [r["k"] for r in rep.rows] == list(range(len(sched)))
    assert rep.csv().splitlines()[0] == ",".join(seq.PROBE_COLUMNS)
    assert rep.svg("t") == rep.svg("t")


def test_envelope_energy_below_energy():
    ints = Integrands.from_presets("f1_tilted", "doublewell_shifted", "area")
    u = BV1D.step(I, 0.3, 1.0)
    v = Measure1D(I, [(0.6, 0.5)], 0.5 * np.ones(8))
    for w in (0.25, 0.0625):
        p = seq.mollify_1d(ints, u, v, w, cells=512)
        assert p.energy >= p.envelope_energy - 1e-12


def test_detector_examples():
    sigma = Measure1D.from_density(I, np.ones(8))
    spikes = [seq.SequencePair(k, BV1D.constant(I, 0.0), seq.concentrate_measure(sigma, e, 4), 0, 0,
                               support_measure=seq._support_1d(seq.concentrate_measure(sigma, e, 4)),
                               mass=1.0)
              for k, e in enumerate((1e-1, 1e-2, 1e-3))]
    assert seq.concentration_detector(spikes).purely_concentrating
    fixed = [seq.SequencePair(k, BV1D.constant(I, 0.0), sigma, 0, 0, support_measure=1.0, mass=1.0)
             for k in range(3)]
    assert not seq.concentration_detector(fixed).purely_concentrating
    ints = Integrands.from_presets("example3_f1", "abs", "area")
    moll = [seq.mollify_1d(ints, BV1D.constant(I, 1.0), Measure1D.dirac(I, 0.5), 1.0 / k, k=k)
            for k in (4, 16, 64)]
    rep = seq.concentration_detector(moll)
    assert rep.purely_concentrating and rep.rows[-1]["mass_above_1"] > 0.9
