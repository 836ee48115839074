"""Recovery sequences, concentration constructions and Gamma-limit probes.

Sequence elements are :class:`SequencePair` objects whose ``u`` is Sobolev
(no jumps, no Cantor part) and whose ``v`` is an ``L^1`` density.  Their
``energy`` is always computed with the original integrands.

Two-dimensional recoveries are semi-analytic: the spike supports shrink
like ``sqrt(eps)`` while the logarithmic cut-off shrinks only like
``exp(1 - e^{1/s})``, so a mesh cannot resolve them.  Spikes are therefore
stored analytically and integrated with polar quadrature on top of a
mesh background.
"""

from __future__ import annotations

import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bv1d import BV1D, derivative
from .errors import NumericalError, PreconditionError, RepresentationError, UnsupportedDimension
from .funclib import norm
from .measure1d import Measure1D, _is_pow2, pair as pair_1d
from .meshfield import NdMeasure, NodalField, RectMesh
from .relax import CellSolution, Integrands, _g_core, _Rec
from .textio import atomic_write, csv_text

logger = logging.getLogger(__name__)

_G3X, _G3W = np.polynomial.legendre.leggauss(3)
_G2X = np.array([-1.0, 1.0]) / np.sqrt(3.0)

#: Dyadic truncation ladder of the oscillation/concentration splitter.
LEVEL_LADDER = 2.0 ** np.arange(0, 31)
#: Mollification-only comparison generators (kernel half-widths).
MOLLIFIER_BATTERY = tuple(2.0 ** -k for k in range(2, 9))
#: Concentration parameters used by the two-dimensional spike recovery.
SPIKE_SCHEDULE = tuple({"eps": 2.0 ** -e, "delta": 2.0 ** -k, "eta": 2.0 ** -k}
                       for k, e in enumerate((8, 20, 40, 80, 160, 240, 320), start=1))
#: Cell half-widths used by the one-dimensional jump recovery.
JUMP_SCHEDULE = tuple({"eps": 2.0 ** -k} for k in range(3, 9))


@dataclass(frozen=True, eq=False)
class SequencePair:
    """One element ``(u_k, v_k)`` of a generated sequence."""

    k: int
    u: object
    v: object
    energy: float
    envelope_energy: float
    params: dict = field(default_factory=dict)
    support_measure: float = 0.0
    mass: float = 0.0

    def __post_init__(self):
        if isinstance(self.u, BV1D) and not self.u.is_sobolev:
            raise RepresentationError("sequence elements need u without jumps or Cantor part")
        if isinstance(self.u, NodalField) and self.u.face_jumps:
            raise RepresentationError("sequence elements need u without face jumps")
        if isinstance(self.v, (Measure1D, NdMeasure)) and not self.v.is_absolutely_continuous:
            raise RepresentationError("sequence elements need v without atoms or singular part")


# ---------------------------------------------------------------------------
# helpers


def _pow2_at_least(n: float) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(float(n), 1.0)))))


def _refine(values: np.ndarray, cells: int, dim: int) -> np.ndarray:
    if values.shape[0] == 0:
        return np.zeros((cells, dim))
    return np.repeat(values, cells // values.shape[0], axis=0)


def _support_1d(v: Measure1D) -> float:
    if not v.cells:
        return 0.0
    return float(np.count_nonzero(np.any(v.ac != 0, axis=1)) * v.cell_width)


def original_energy_1d(ints: Integrands, u: BV1D, v: Measure1D,
                       use_envelopes: bool = False) -> float:
    """``int f1(u) f2(v) + W(u')`` on the common refinement of the meshes.

    ``f1(u)`` is integrated with 3-point Gauss per cell (exact up to the
    smoothness of ``f1``; ``u`` is linear on every cell).  With
    ``use_envelopes`` the envelopes ``f2**`` and ``W**`` replace ``f2``, ``W``.
    """
    if not u.is_sobolev or not v.is_absolutely_continuous:
        raise PreconditionError("original energy needs a Sobolev u and an L1 density v")
    if u.interval != v.interval:
        raise PreconditionError("u and v must share the interval")
    cells = _pow2_at_least(max(u.cells, v.cells, 1))
    h = u.length / cells
    slope = _refine(np.asarray(u.slope), cells, u.dim)
    dens = _refine(np.asarray(v.ac), cells, v.dim)
    Wf = ints.Wenv._eval_points if use_envelopes else ints.W.func
    f2f = ints.f2env._eval_points if use_envelopes else ints.f2.func
    w_term = float(np.sum(Wf(slope)) * h)
    edges = np.linspace(u.alpha, u.beta, cells + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    f1avg = sum(w * ints.f1.func(u.value(np.clip(mid + 0.5 * h * g, u.alpha, u.beta)))
                for g, w in zip(_G3X, _G3W)) / 2.0
    return w_term + float(np.sum(f2f(dens) * f1avg) * h)


def weak_battery(domain, count: int = 16, seed: int = 0) -> list[Callable]:
    """Fixed family of smooth test functions for weak-* checks.

    ``domain`` is an interval ``(alpha, beta)`` or a box (one pair per
    axis).  Functions are cosines with integer frequencies and seeded
    phases in normalized coordinates.
    """
    box = np.atleast_2d(np.asarray(domain, dtype=float))
    n = box.shape[0]
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=count)
    if n == 1:
        freqs = [np.array([float(j)]) for j in range(count)]
    else:
        side = int(np.ceil(count ** (1.0 / n)))
        grid = np.stack(np.meshgrid(*[np.arange(side)] * n, indexing="ij"), -1).reshape(-1, n)
        freqs = [g.astype(float) for g in grid[:count]]
    lo, width = box[:, 0], box[:, 1] - box[:, 0]
    out = []
    for f, p in zip(freqs, phases):
        if n == 1:
            out.append(lambda x, f=f[0], p=p: np.cos(np.pi * f * (np.asarray(x) - lo[0]) / width[0] + p))
        else:
            out.append(lambda x, f=f, p=p: np.cos(np.pi * np.sum(f * (np.asarray(x) - lo) / width,
                                                                axis=-1) + p))
    return out


def pair_field(u, phi: Callable, cells: int = 4096):
    """``int u phi dx`` for the field types used in sequences."""
    if isinstance(u, BV1D):
        edges = np.linspace(u.alpha, u.beta, cells + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1] - edges[0])
        acc = 0.0
        for g, w in zip(_G3X, _G3W):
            x = mid + half * g
            acc = acc + w * half * (np.asarray(phi(x))[:, None] * u.value(x)).sum(axis=0)
        return acc
    if isinstance(u, NodalField):
        x, w = _gauss_cells(u.mesh)
        return (w[:, None] * np.asarray(phi(x))[:, None] * u.evaluate(x)).sum(axis=0)
    if isinstance(u, SpikeField):
        return u.pair(phi)
    raise TypeError(f"cannot pair {type(u).__name__}")


def pair_measure(v, phi: Callable):
    """``int phi dv`` for the measure and density types used in sequences."""
    if isinstance(v, Measure1D):
        return np.atleast_1d(pair_1d(v, phi))
    if isinstance(v, NdMeasure):
        x, w = _gauss_cells(v.mesh)
        dens = np.repeat(v.ac.reshape(-1, v.dim), 4, axis=0)
        out = (w[:, None] * np.asarray(phi(x))[:, None] * dens).sum(axis=0)
        for xa, wa in v.atoms:
            out = out + float(phi(xa[None])[0]) * wa
        for xs, m, d in v.singular:
            out = out + float(phi(xs[None])[0]) * m * d
        return out
    if isinstance(v, SpikeDensity):
        return v.pair(phi)
    raise TypeError(f"cannot pair {type(v).__name__}")


def _gauss_cells(mesh: RectMesh):
    """2-point Gauss nodes per axis in every cell; points (C*2^n, n), weights."""
    centers = mesh.centers().reshape(-1, mesh.n)
    offs = np.stack(np.meshgrid(*[_G2X] * mesh.n, indexing="ij"), -1).reshape(-1, mesh.n)
    pts = centers[:, None, :] + 0.5 * mesh.h * offs[None]
    w = np.full(pts.shape[:2], mesh.cell_volume / offs.shape[0])
    return pts.reshape(-1, mesh.n), w.reshape(-1)


# ---------------------------------------------------------------------------
# concentration, projection and splitting


def _cumulative(nu: Measure1D, x: np.ndarray) -> np.ndarray:
    """``int_alpha^x`` of the density of ``nu``; rows are components."""
    if not nu.cells:
        return np.zeros((x.size, nu.dim))
    h = nu.cell_width
    cum = np.vstack([np.zeros((1, nu.dim)), np.cumsum(nu.ac, axis=0) * h])
    pos = np.clip((x - nu.alpha) / h, 0.0, nu.cells)
    k = np.minimum(np.floor(pos).astype(int), nu.cells - 1)
    return cum[k] + (pos - k)[:, None] * nu.ac[k] * h


def _block_tv(nu: Measure1D, edges: np.ndarray) -> np.ndarray:
    # |nu|(block) for a piecewise-constant density
    absnu = Measure1D(nu.interval, ac=np.linalg.norm(nu.ac, axis=1)) if nu.cells else None
    if absnu is None:
        return np.zeros(edges.size - 1)
    return np.diff(_cumulative(absnu, edges)[:, 0])


def concentrate_measure(sigma, eps: float, ell: int, max_cells: int = 1 << 22):
    """Purely concentrating approximation of an absolutely continuous measure.

    The domain is split into ``ell`` blocks (``ell x ell`` for a box).  Block
    ``j`` with ``|sigma|(block) > 0`` carries the constant value
    ``z = sigma(block) / (|sigma|(block) eps)`` on a ball around the block
    center of measure ``|sigma|(block) / |z|``, so ``int |w| = |sigma|``
    exactly.

    In one dimension the result is a :class:`Measure1D` density on a
    power-of-two mesh fine enough to resolve every ball; the ball is
    rounded to whole cells and the value rescaled so the mass stays exact.
    For an :class:`NdMeasure` the result is a :class:`SpikeDensity`.

    Raises
    ------
    PreconditionError
        If ``sigma`` has atoms or a singular part, or if a ball would not
        fit in its block.
    """
    if eps <= 0 or ell < 1:
        raise PreconditionError("eps and ell must be positive")
    if isinstance(sigma, NdMeasure):
        return _concentrate_nd(sigma, eps, ell)
    if not sigma.is_absolutely_continuous:
        raise PreconditionError("concentrate_measure needs an absolutely continuous measure")
    if not sigma.cells:
        return Measure1D.zero(sigma.interval, sigma.dim)
    edges = np.linspace(sigma.alpha, sigma.beta, ell + 1)
    mass = np.diff(_cumulative(sigma, edges), axis=0)
    tv = _block_tv(sigma, edges)
    centers = 0.5 * (edges[1:] + edges[:-1])
    block = sigma.length / ell
    live = (tv > 0) & (norm(mass) > 0)
    zabs = np.where(live, norm(mass) / np.where(tv > 0, tv, 1.0) / eps, 0.0)
    lengths = np.where(live, tv / np.where(zabs > 0, zabs, 1.0), 0.0)
    if np.any(lengths > block):
        raise PreconditionError("eps too large: a concentration ball exceeds its block")
    target = 8.0 * sigma.length / lengths[live].min() if np.any(live) else 1.0
    cells = min(max(_pow2_at_least(target), _pow2_at_least(2 * ell), sigma.cells), max_cells)
    h = sigma.length / cells
    dens = np.zeros((cells, sigma.dim))
    for j in np.flatnonzero(live):
        count = max(1, int(round(lengths[j] / h)))
        start = int(round((centers[j] - sigma.alpha) / h - count / 2.0))
        start = min(max(start, 0), cells - count)
        z = mass[j] / tv[j] / eps
        dens[start:start + count] += z * lengths[j] / (count * h)
    return Measure1D(sigma.interval, ac=dens)


def interpolate_Ij(v, j: int):
    """Piecewise-constant projection on the dyadic grid with ``2^j`` cells per axis.

    Each cell gets ``v(closed cell) / volume``; points on the upper
    boundary of the domain go to the last cell, so no mass is lost.  The
    operator is linear and idempotent.
    """
    if j < 0:
        raise ValueError("grid exponent must be nonnegative")
    if isinstance(v, NdMeasure):
        return _interpolate_nd(v, j)
    n = 1 << j
    h = v.length / n
    if v.cells >= n:
        ac = np.asarray(v.ac).reshape(n, v.cells // n, v.dim).mean(axis=1)
    elif v.cells:
        ac = np.repeat(v.ac, n // v.cells, axis=0)
    else:
        ac = np.zeros((n, v.dim))
    ac = np.array(ac)
    pts = np.concatenate([v.atom_x, v.sing_x])
    if pts.size:
        w = np.vstack([v.atom_w, v.sing_m[:, None] * v.sing_dir])
        idx = np.clip(np.floor((pts - v.alpha) / h).astype(int), 0, n - 1)
        np.add.at(ac, idx, w / h)
    return Measure1D(v.interval, ac=ac, dim=v.dim)


def _interpolate_nd(v: NdMeasure, j: int) -> NdMeasure:
    n = 1 << j
    mesh = RectMesh(v.mesh.bounds, (n,) * v.mesh.n)
    ac = v.ac
    for axis, s in enumerate(v.mesh.shape):
        if s >= n:
            if s % n:
                raise RepresentationError("mesh must be a power-of-two refinement of the grid")
            shape = ac.shape[:axis] + (n, s // n) + ac.shape[axis + 1:]
            ac = ac.reshape(shape).mean(axis=axis + 1)
        else:
            if n % s:
                raise RepresentationError("grid must be a power-of-two refinement of the mesh")
            ac = np.repeat(ac, n // s, axis=axis)
    ac = np.array(ac)
    vol = mesh.cell_volume
    for x, w in v.atoms:
        ac[mesh.locate(x)] += w / vol
    for x, m, d in v.singular:
        ac[mesh.locate(x)] += m * d / vol
    return NdMeasure(mesh, ac, dim=v.dim)


@dataclass
class OscConcSplit:
    """Output of :func:`decompose_osc_conc` (lists follow the input order)."""

    osc: list
    conc: list
    levels: list
    conc_support: list
    conc_mass: list
    osc_mass: list
    lipschitz_defect: list


def decompose_osc_conc(zs: Sequence[Measure1D], mass_bound: float = np.inf,
                       lipschitz_f: Optional[Callable] = None) -> OscConcSplit:
    """Split ``z_k = z_k^osc + z_k^conc`` by truncation at a dyadic level.

    ``t_k`` is the smallest level in ``2^0 .. 2^30`` with
    ``L({|z_k| > t_k}) <= 1/k`` (``k`` counts from 1).  The oscillating part
    is the radial truncation of ``z_k`` at ``t_k``; the concentrating part is
    the remainder and lives on ``{|z_k| > t_k}``.

    ``lipschitz_f`` (vectorized over rows) enables the diagnostic
    ``|| f(z) - f(z^osc) - f(z^conc) + f(0) ||_{L^1}``.

    Raises
    ------
    PreconditionError
        If an input has atoms or a singular part, or if a mass exceeds
        ``mass_bound`` or is not finite.
    """
    out = OscConcSplit([], [], [], [], [], [], [])
    for k, z in enumerate(zs, start=1):
        if not z.is_absolutely_continuous:
            raise PreconditionError("decompose_osc_conc needs L1 densities")
        mass = z.total_variation
        if not np.isfinite(mass) or mass > mass_bound:
            raise PreconditionError(f"input {k} has mass {mass:g} beyond the bound {mass_bound:g}")
        if not z.cells:
            zero = Measure1D.zero(z.interval, z.dim)
            for lst, val in ((out.osc, zero), (out.conc, zero), (out.levels, 1.0),
                             (out.conc_support, 0.0), (out.conc_mass, 0.0), (out.osc_mass, 0.0),
                             (out.lipschitz_defect, 0.0)):
                lst.append(val)
            continue
        h = z.cell_width
        mag = norm(z.ac)
        t = LEVEL_LADDER[-1]
        for level in LEVEL_LADDER:
            if np.count_nonzero(mag > level) * h <= 1.0 / k:
                t = level
                break
        scale = np.where(mag > t, t / np.where(mag > 0, mag, 1.0), 1.0)
        osc = z.ac * scale[:, None]
        conc = z.ac - osc
        out.osc.append(Measure1D(z.interval, ac=osc))
        out.conc.append(Measure1D(z.interval, ac=conc))
        out.levels.append(float(t))
        out.conc_support.append(float(np.count_nonzero(mag > t) * h))
        out.conc_mass.append(float(np.sum(norm(conc)) * h))
        out.osc_mass.append(float(np.sum(norm(osc)) * h))
        if lipschitz_f is not None:
            zero = np.zeros_like(z.ac)
            defect = (lipschitz_f(z.ac) - lipschitz_f(osc) - lipschitz_f(conc) + lipschitz_f(zero))
            out.lipschitz_defect.append(float(np.sum(np.abs(defect)) * h))
        else:
            out.lipschitz_defect.append(float("nan"))
    return out


# ---------------------------------------------------------------------------
# logarithmic cut-off


def cutoff_phi(t):
    """``phi(t) = log(1 - log t)`` for ``0 < t <= 1`` (radius relative to rho)."""
    t = np.asarray(t, dtype=float)
    return np.log(1.0 - np.log(t))


def cutoff_dphi(t):
    t = np.asarray(t, dtype=float)
    return -1.0 / (t * (1.0 - np.log(t)))


def choose_s(r_rel: float) -> float:
    """Smallest dyadic ``s`` with ``phi(r_rel) >= 2/s``, so ``phi_s = 1`` on the spike."""
    if not 0 < r_rel < 1:
        raise PreconditionError("spike radius must be smaller than the cut-off scale")
    q = float(cutoff_phi(r_rel))
    return float(2.0 ** np.ceil(np.log2(2.0 / q)))


def plateau_radius(s: float) -> float:
    """Relative radius below which ``phi_s = 1``."""
    return float(np.exp(1.0 - np.exp(2.0 / s)))


def support_radius(s: float) -> float:
    """Relative radius beyond which ``phi_s = 0``."""
    return float(np.exp(1.0 - np.exp(1.0 / s)))


def cutoff_value(t, s):
    return np.clip(s * cutoff_phi(np.clip(t, 1e-300, 1.0)) - 1.0, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Spike:
    """Constant density ``value`` on the disk ``B(center, radius)`` with cut-off ``phi_s``."""

    center: np.ndarray
    radius: float
    value: np.ndarray
    rho: float
    s: float

    @property
    def plateau(self) -> float:
        return self.rho * plateau_radius(self.s)

    @property
    def outer(self) -> float:
        return self.rho * support_radius(self.s)

    @property
    def area(self) -> float:
        return np.pi * self.radius ** 2


_ANGLES = 16
_LIN_X, _LIN_W = np.polynomial.legendre.leggauss(8)
_LOG_X, _LOG_W = np.polynomial.legendre.leggauss(24)


def _radial_nodes(r0, r1, log: bool):
    """Radial nodes and weights (Jacobian ``r`` included) on ``[r0, r1]`` per spike."""
    r0, r1 = np.asarray(r0, dtype=float)[:, None], np.asarray(r1, dtype=float)[:, None]
    if log:
        a, b = np.log(r0), np.log(np.maximum(r1, r0))
        r = np.exp(0.5 * (b - a) * _LOG_X + 0.5 * (a + b))
        return r, 0.5 * (b - a) * _LOG_W * r * r
    r = 0.5 * (r1 - r0) * _LIN_X + 0.5 * (r0 + r1)
    return r, 0.5 * (r1 - r0) * _LIN_W * r


def _spike_rules(spikes: Sequence[Spike]):
    """Polar quadrature on every cut-off disk.

    Returns points ``(S, Q, 2)``, weights ``(S, Q)``, radii ``(S, Q)`` and the
    segment id ``(Q,)``: 0 on the spike, 1 on the plateau of ``phi_s``, 2 on
    the transition annulus.
    """
    c = np.array([sp.center for sp in spikes], dtype=float).reshape(-1, 2)
    r = np.array([sp.radius for sp in spikes])
    rp = np.array([sp.plateau for sp in spikes])
    ro = np.array([sp.outer for sp in spikes])
    parts = [_radial_nodes(np.zeros_like(r), r, False), _radial_nodes(r, rp, True),
             _radial_nodes(rp, ro, True)]
    rr = np.concatenate([p[0] for p in parts], axis=1)
    ww = np.concatenate([p[1] for p in parts], axis=1) * (2 * np.pi / _ANGLES)
    seg = np.concatenate([np.full(p[0].shape[1], k) for k, p in enumerate(parts)])
    theta = 2 * np.pi * np.arange(_ANGLES) / _ANGLES
    rad = np.repeat(rr, _ANGLES, axis=1)
    w = np.repeat(ww, _ANGLES, axis=1)
    th = np.tile(theta, rr.shape[1])
    pts = c[:, None, :] + rad[..., None] * np.stack([np.cos(th), np.sin(th)], axis=-1)
    return pts, w, rad, np.repeat(seg, _ANGLES)


def _cutoff_fields(spikes, rad):
    """``h`` and ``|grad h|`` on the quadrature radii (shape ``(S, Q)``)."""
    rho = np.array([sp.rho for sp in spikes])[:, None]
    s = np.array([sp.s for sp in spikes])[:, None]
    t = rad / rho
    h = cutoff_value(t, s)
    active = (h > 0) & (h < 1)
    dh = np.where(active, s * cutoff_dphi(np.clip(t, 1e-300, 1.0)) / rho, 0.0)
    return h, dh


def cutoff_norms(spikes: Sequence[Spike]) -> tuple[float, float]:
    """``(||h||_{L^1}, ||grad h||_{L^1})`` summed over the spikes."""
    if not spikes:
        return 0.0, 0.0
    _, w, rad, _ = _spike_rules(spikes)
    h, dh = _cutoff_fields(spikes, rad)
    return float(np.sum(w * h)), float(np.sum(w * np.abs(dh)))


class SpikeDensity:
    """``L^1`` density: cellwise background plus disjoint analytic spikes."""

    def __init__(self, mesh: RectMesh, background, spikes: Sequence[Spike]):
        self.mesh = mesh
        self.background = np.asarray(background, dtype=float)
        self.spikes = list(spikes)
        self.dim = self.background.shape[-1]

    @property
    def is_absolutely_continuous(self) -> bool:
        return True

    @property
    def total_variation(self) -> float:
        tv = float(np.sum(norm(self.background)) * self.mesh.cell_volume)
        return tv + sum(float(norm(sp.value)) * sp.area for sp in self.spikes)

    def total_mass(self) -> np.ndarray:
        total = self.background.reshape(-1, self.dim).sum(axis=0) * self.mesh.cell_volume
        for sp in self.spikes:
            total = total + sp.value * sp.area
        return total

    def support_measure(self) -> float:
        bg = np.count_nonzero(np.any(self.background != 0, axis=-1)) * self.mesh.cell_volume
        return float(bg + sum(sp.area for sp in self.spikes))

    def level_stats(self, t: float) -> tuple[float, float]:
        """``(L({|v| > t}), int_{|v| > t} |v|)``, spikes taken on top of a zero background."""
        mag = norm(self.background)
        meas = float(np.count_nonzero(mag > t) * self.mesh.cell_volume)
        mass = float(np.sum(mag[mag > t]) * self.mesh.cell_volume)
        for sp in self.spikes:
            zv = float(norm(sp.value))
            if zv > t:
                meas += sp.area
                mass += zv * sp.area
        return meas, mass

    def pair(self, phi: Callable) -> np.ndarray:
        x, w = _gauss_cells(self.mesh)
        dens = np.repeat(self.background.reshape(-1, self.dim), 2 ** self.mesh.n, axis=0)
        out = (w[:, None] * np.asarray(phi(x))[:, None] * dens).sum(axis=0)
        if self.spikes:
            pts, wts, _, seg = _spike_rules(self.spikes)
            inner = seg == 0
            per = np.sum(wts[:, inner] * phi(pts[:, inner]), axis=1)
            out = out + per @ np.array([sp.value for sp in self.spikes])
        return out


class SpikeField:
    """``u_eps = (1 - h) clip(u, 1/delta) + h u_min`` with ``h = sum phi_s(x - x_j)``."""

    def __init__(self, base: NodalField, delta: float, u_min, spikes: Sequence[Spike]):
        self.base = base
        self.delta = float(delta)
        self.u_min = np.atleast_1d(np.asarray(u_min, dtype=float))
        self.spikes = list(spikes)

    def truncated(self, x):
        """Component-wise truncation at ``1/delta`` and its gradient."""
        val = self.base.evaluate(x)
        grad = self.base.gradient(x)
        cap = 1.0 / self.delta
        inside = np.abs(val) <= cap
        return np.clip(val, -cap, cap), grad * inside[..., None]

    def pair(self, phi: Callable) -> np.ndarray:
        x, w = _gauss_cells(self.base.mesh)
        val, _ = self.truncated(x)
        out = (w[:, None] * np.asarray(phi(x))[:, None] * val).sum(axis=0)
        if self.spikes:
            pts, wts, rad, _ = _spike_rules(self.spikes)
            h, _ = _cutoff_fields(self.spikes, rad)
            val, _ = self.truncated(pts)
            out = out + ((wts * h * phi(pts))[..., None] * (self.u_min - val)).sum(axis=(0, 1))
        return out


# ---------------------------------------------------------------------------
# n = 2 recovery


def _concentrate_nd(sigma: NdMeasure, eps: float, ell: int) -> SpikeDensity:
    if not sigma.is_absolutely_continuous:
        raise PreconditionError("concentrate_measure needs an absolutely continuous measure")
    if sigma.mesh.n != 2:
        raise UnsupportedDimension("spike concentration is implemented for n = 2")
    blocks = _interpolate_nd(sigma, int(np.log2(ell))) if _is_pow2(ell) else None
    if blocks is None:
        raise PreconditionError("ell must be a power of two")
    spikes = _spikes_from_cells(blocks.mesh, blocks.ac, eps)
    return SpikeDensity(blocks.mesh, np.zeros_like(blocks.ac), spikes)


def _spikes_from_cells(mesh: RectMesh, dens: np.ndarray, eps: float) -> list[Spike]:
    vol = mesh.cell_volume
    rho = 0.5 * float(np.min(mesh.h))
    centers = mesh.centers().reshape(-1, 2)
    flat = dens.reshape(-1, dens.shape[-1])
    spikes = []
    for c, b in zip(centers, flat):
        tv = float(norm(b)) * vol
        if tv == 0.0:
            continue
        z = b / (float(norm(b)) * eps)
        r = float(np.sqrt(tv * eps / np.pi))
        if r >= 0.5 * rho:
            raise _SpikeTooWide(r, rho)
        spikes.append(Spike(c, r, z, rho, choose_s(r / rho)))
    return spikes


class _SpikeTooWide(Exception):
    def __init__(self, r, rho):
        super().__init__(f"spike radius {r:.3g} does not fit the cut-off scale {rho:.3g}")


def _nd_density(ints: Integrands, grad, val, vdens, use_envelopes):
    Wf = ints.Wenv._eval_points if use_envelopes else ints.W.func
    f2f = ints.f2env._eval_points if use_envelopes else ints.f2.func
    g = grad.reshape(grad.shape[:-2] + (-1,))
    return Wf(g) + ints.f1.func(val) * f2f(vdens)


def build_recovery_nd(ints: Integrands, u: NodalField, v: NdMeasure, eta: float, delta: float,
                      eps: float, j: Optional[int] = None, k: int = 0,
                      max_retries: int = 8) -> SequencePair:
    """Upper-bound construction for ``n = 2``.

    1. ``v`` is projected by ``I_j`` on a ``2^j x 2^j`` grid (``j`` defaults
       to the mesh resolution) and each cell value ``b`` is split into
       ``b1 + b2`` by the minimizer of ``g(u_cell, b)``.
    2. ``v_conc = b2`` is concentrated into one spike per cell
       (:func:`concentrate_measure` with ``ell = 2^j``).
    3. ``u_eps = (1 - h)u^[1/delta] + h u_min`` with the logarithmic cut-off
       ``h``; ``phi_s = 1`` on every spike.
    4. The energy uses the original integrands: a 2x2 Gauss background on
       the grid plus polar-quadrature corrections on every cut-off disk.

    If a spike is too wide for its cell, ``eps`` is halved, at most
    ``max_retries`` times.  ``eta`` is recorded; the split is computed to
    grid precision, well below any practical ``eta``.
    """
    mesh = u.mesh
    if mesh.n != 2:
        raise UnsupportedDimension("the spike recovery is implemented for n = 2")
    if v.mesh != mesh:
        raise PreconditionError("u and v must share the mesh")
    if u.face_jumps:
        raise PreconditionError("the recovery needs u without face jumps")
    if u.m != ints.f1.dim or v.dim != ints.f2env.dim:
        raise PreconditionError("integrand dimensions do not match the data")
    if j is None:
        if len(set(mesh.shape)) != 1 or not _is_pow2(mesh.shape[0]):
            raise PreconditionError("give j explicitly for non-dyadic meshes")
        j = int(np.log2(mesh.shape[0]))
    vj = _interpolate_nd(v, j)
    grid = vj.mesh
    u_min = np.asarray(ints.u_min, dtype=float)
    base = SpikeField(u, delta, u_min, [])
    centers = grid.centers().reshape(-1, 2)
    uc, _ = base.truncated(centers)
    b = vj.ac.reshape(-1, v.dim)
    _, b1 = _g_core(ints.f1.func(uc), ints.f2env, ints.f1min, b)
    b2 = b - b1
    b2[norm(b2) <= 1e-14 * (1.0 + norm(b))] = 0.0
    b1 = b - b2

    used, retries = float(eps), 0
    while True:
        try:
            spikes = _spikes_from_cells(grid, b2.reshape(grid.shape + (v.dim,)), used)
            break
        except _SpikeTooWide as exc:
            retries += 1
            if retries > max_retries:
                raise NumericalError(f"spike construction failed after {max_retries} retries: {exc}")
            used /= 2.0

    field_ = SpikeField(u, delta, u_min, spikes)
    vk = SpikeDensity(grid, b1.reshape(grid.shape + (v.dim,)), spikes)
    energies = []
    for env in (False, True):
        x, w = _gauss_cells(grid)
        val, grad = field_.truncated(x)
        osc_pts = np.repeat(b1, 4, axis=0)
        total = float(np.sum(w * _nd_density(ints, grad, val, osc_pts, env)))
        for lo in range(0, len(spikes), 256):
            chunk = spikes[lo:lo + 256]
            centers = np.array([sp.center for sp in chunk])
            cells = np.minimum(((centers - grid.bounds[:, 0]) / grid.h).astype(int),
                               np.array(grid.shape) - 1)
            osc = b1[np.ravel_multi_index(tuple(cells.T), grid.shape)][:, None, :]
            pts, wts, rad, seg = _spike_rules(chunk)
            val, grad = field_.truncated(pts)
            h, dh = _cutoff_fields(chunk, rad)
            radial = (pts - centers[:, None, :]) / np.maximum(rad, 1e-300)[..., None]
            grad_h = dh[..., None] * radial
            ue = (1.0 - h)[..., None] * val + h[..., None] * u_min
            ge = (1.0 - h)[..., None, None] * grad + (u_min - val)[..., None] * grad_h[..., None, :]
            values = np.array([sp.value for sp in chunk])[:, None, :]
            vd = np.where((seg == 0)[None, :, None], osc + values, osc)
            act = _nd_density(ints, ge, ue, vd, env)
            bg = _nd_density(ints, grad, val, np.broadcast_to(osc, vd.shape), env)
            total += float(np.sum(wts * (act - bg)))
        energies.append(total)

    h_l1, gh_l1 = cutoff_norms(spikes)
    params = {"eps": used, "delta": float(delta), "eta": float(eta), "j": j,
              "retries": retries, "s": min((sp.s for sp in spikes), default=float("nan")),
              "h_l1": h_l1, "grad_h_l1": gh_l1}
    return SequencePair(k=k, u=field_, v=vk, energy=energies[0], envelope_energy=energies[1],
                        params=params, support_measure=vk.support_measure(),
                        mass=vk.total_variation)


def mollify_nd(ints: Integrands, u: NodalField, v: NdMeasure, width: float, j: int,
               k: int = 0) -> SequencePair:
    """Comparison generator without concentration: ``v`` smoothed by a tensor triangular kernel.

    ``u`` is kept (it is already Sobolev).  The kernel is renormalized per
    source so that no mass leaves the box.
    """
    if u.face_jumps:
        raise PreconditionError("mollify_nd needs u without face jumps")
    n = u.mesh.n
    grid = RectMesh(u.mesh.bounds, (1 << j,) * n)
    ac = _interpolate_nd(NdMeasure(v.mesh, v.ac, dim=v.dim), j).ac
    axes = grid.axes()
    mats = [_kernel_matrix(ax, 0.5 * (ax[1:] + ax[:-1]), width) for ax in axes]
    out = ac
    for axis, mat in enumerate(mats):
        out = np.moveaxis(np.tensordot(mat, np.moveaxis(out, axis, 0), axes=(1, 0)), 0, axis)
    vol = grid.cell_volume
    for pts_list in (v.atoms, [(x, m * d) for x, m, d in v.singular]):
        for x, w in pts_list:
            prof = np.ones(())
            for axis in range(n):
                col = _kernel_matrix(axes[axis], np.array([x[axis]]), width)[:, 0]
                prof = np.multiply.outer(prof, col) if prof.ndim else col
            out = out + prof[..., None] * (w / vol)
    vk = NdMeasure(grid, out, dim=v.dim)
    x, wq = _gauss_cells(grid)
    dens = np.repeat(out.reshape(-1, v.dim), 2 ** n, axis=0)
    val, grad = u.evaluate(x), u.gradient(x)
    energy = float(np.sum(wq * _nd_density(ints, grad, val, dens, False)))
    env = float(np.sum(wq * _nd_density(ints, grad, val, dens, True)))
    support = float(np.count_nonzero(np.any(out != 0, axis=-1)) * vol)
    return SequencePair(k=k, u=u, v=vk, energy=energy, envelope_energy=env,
                        params={"width": float(width), "j": j}, support_measure=support,
                        mass=vk.total_variation)


def _tri_cdf(t, w):
    t = np.clip(t, -w, w)
    return np.where(t <= 0, (t + w) ** 2 / (2 * w * w), 1.0 - (w - t) ** 2 / (2 * w * w))


def _kernel_matrix(edges: np.ndarray, sources: np.ndarray, width: float) -> np.ndarray:
    """Share of each source's triangular bump falling in each cell, columns summing to 1.

    Returned as cell averages times the cell width, i.e. masses.
    """
    cdf = _tri_cdf(edges[:, None] - sources[None, :], width)
    mass = np.diff(cdf, axis=0)
    total = mass.sum(axis=0, keepdims=True)
    mass = mass / np.where(total > 0, total, 1.0)
    return mass / np.diff(edges)[:, None] * (edges[1] - edges[0])


# ---------------------------------------------------------------------------
# n = 1 recovery


def build_recovery_1d_jump(ints: Integrands, u: BV1D, v: Measure1D, x0: float, eps: float,
                           cell: CellSolution, k: int = 0,
                           cells: Optional[int] = None) -> SequencePair:
    """Paste the rescaled cell profile into ``(x0 - eps, x0 + eps)``.

    Outside the cell interval ``u`` keeps its slope and is shifted so that
    it meets the profile, with ``u_eps((x0 - eps)+) = u(x0-)`` and
    ``u_eps((x0 + eps)-) = u(x0+)``; ``v`` keeps its density and gains the
    profile density ``v_cell((x - x0)/eps) / eps``.  The mesh width is
    ``2 eps / N`` for a cell of ``N`` intervals unless ``cells`` is given.

    Raises
    ------
    PreconditionError
        If ``u`` or ``v`` carry singular parts away from ``x0``, if the cell
        interval leaves the domain or if ``cell`` does not match the traces.
    """
    alpha, beta = u.interval
    if u.interval != v.interval:
        raise PreconditionError("u and v must share the interval")
    others = [x for x in np.concatenate([u.jump_x, v.atom_x]) if x != x0]
    if u.cantor_x.size or v.sing_x.size:
        raise PreconditionError("Cantor or singular-continuous parts cannot be pasted")
    if others:
        raise PreconditionError(f"other jumps or atoms at {sorted(set(others))}; only x0 is resolved")
    if not (alpha < x0 - eps and x0 + eps < beta):
        raise PreconditionError("eps exceeds the distance from x0 to the boundary")
    a_minus, a_plus = u.trace(x0, "left"), u.trace(x0, "right")
    b = np.zeros(v.dim)
    if v.atom_x.size:
        b = v.atom_w[0]
    prof_u = np.asarray(cell.u_profile, dtype=float)
    prof_v = np.asarray(cell.v_profile, dtype=float).reshape(cell.nodes, -1)
    xi = cell.x
    if (abs(prof_u[0] - a_minus[0]) > 1e-8 or abs(prof_u[-1] - a_plus[0]) > 1e-8
            or np.any(np.abs(prof_v.sum(axis=0) * (2.0 / cell.nodes) - b) > 1e-8)):
        raise PreconditionError("cell solution does not match the traces and the atom at x0")

    if cells is None:
        cells = _pow2_at_least(max(u.cells, v.cells, cell.nodes * u.length / (2.0 * eps)))
    h = u.length / cells
    x = np.linspace(alpha, beta, cells + 1)
    U = np.empty(cells + 1)
    left, right = x <= x0 - eps, x >= x0 + eps
    inner = ~(left | right)
    cont = u.scalar_value(np.clip(x, alpha, beta)) if u.dim == 1 else None
    if u.dim != 1:
        raise UnsupportedDimension("jump pasting is implemented for scalar u")
    U[left] = cont[left] + (a_minus[0] - u.scalar_value(x0 - eps))
    U[right] = cont[right] + (a_plus[0] - u.scalar_value(x0 + eps))
    U[inner] = np.interp((x[inner] - x0) / eps, xi, prof_u)
    uk = BV1D(u.interval, U[0], np.diff(U) / h)

    vac = _refine(np.asarray(v.ac), cells, v.dim)
    cum = np.vstack([np.zeros((1, prof_v.shape[1])),
                     np.cumsum(prof_v, axis=0) * (2.0 / cell.nodes)])
    pos = np.clip((x - x0) / eps, -1.0, 1.0)
    prof_mass = np.column_stack([np.interp(pos, xi, cum[:, c]) for c in range(cum.shape[1])])
    vk = Measure1D(v.interval, ac=vac + np.diff(prof_mass, axis=0) / h, dim=v.dim)
    energy = original_energy_1d(ints, uk, vk)
    env = original_energy_1d(ints, uk, vk, use_envelopes=True)
    return SequencePair(k=k, u=uk, v=vk, energy=energy, envelope_energy=env,
                        params={"eps": float(eps), "cells": cells},
                        support_measure=_support_1d(vk), mass=vk.total_variation)


def _mollify_measure_1d(mu: Measure1D, width: float, cells: int) -> np.ndarray:
    """Cell densities of ``K_width * mu`` on ``cells`` cells, mass kept in the interval."""
    edges = np.linspace(mu.alpha, mu.beta, cells + 1)
    xs = [mu.atom_x, mu.sing_x]
    ws = [mu.atom_w, mu.sing_m[:, None] * mu.sing_dir]
    if mu.cells:
        e = mu.cell_edges
        mid, half = 0.5 * (e[1:] + e[:-1]), 0.5 * mu.cell_width
        for g, w in zip(_G3X, _G3W):
            xs.append(mid + half * g)
            ws.append(mu.ac * w * half)
    src = np.concatenate(xs)
    wts = np.vstack(ws) if src.size else np.zeros((0, mu.dim))
    out = np.zeros((cells, mu.dim))
    h = edges[1] - edges[0]
    for s in range(0, src.size, 256):
        mat = _kernel_matrix(edges, src[s:s + 256], width)
        out += mat @ wts[s:s + 256] / h
    return out


def mollify_1d(ints: Integrands, u: BV1D, v: Measure1D, width: float,
               cells: int = 4096, k: int = 0) -> SequencePair:
    """Comparison pair: ``Du`` and ``v`` smoothed by a triangular kernel of half-width ``width``."""
    du = derivative(u)
    uk = BV1D(u.interval, u.anchor, _mollify_measure_1d(du, width, cells))
    vk = Measure1D(v.interval, ac=_mollify_measure_1d(v, width, cells), dim=v.dim)
    return SequencePair(k=k, u=uk, v=vk, energy=original_energy_1d(ints, uk, vk),
                        envelope_energy=original_energy_1d(ints, uk, vk, use_envelopes=True),
                        params={"width": float(width), "cells": cells},
                        support_measure=_support_1d(vk), mass=vk.total_variation)


def constant_pair(ints: Integrands, u, v, k: int = 0) -> SequencePair:
    """The pair itself as a constant sequence (``u`` Sobolev, ``v`` a density)."""
    return SequencePair(k=k, u=u, v=v, energy=original_energy_1d(ints, u, v),
                        envelope_energy=original_energy_1d(ints, u, v, use_envelopes=True),
                        support_measure=_support_1d(v), mass=v.total_variation)


# ---------------------------------------------------------------------------
# probes


PROBE_COLUMNS = ("k", "eps", "delta", "eta", "energy", "relaxed_value", "gap",
                 "support_measure", "mass")


@dataclass
class ProbeReport:
    """Energy trace of a generator against the relaxed value."""

    rows: list
    relaxed_value: float
    liminf: float
    gap: float
    last_gap: float
    tol: float
    weak_errors: list
    weak_tol: float
    valid: bool
    passed: bool

    @property
    def energies(self) -> np.ndarray:
        return np.array([r["energy"] for r in self.rows])

    @property
    def status(self) -> str:
        if not self.valid:
            return "INVALID"
        return "PASS" if self.passed else "FAIL"

    def csv(self) -> str:
        return csv_text(list(PROBE_COLUMNS), self.rows)

    def write_csv(self, path) -> None:
        atomic_write(path, self.csv())

    def svg(self, title: str = "") -> str:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        with matplotlib.rc_context({"svg.hashsalt": "relaxkit", "svg.fonttype": "none"}):
            fig, ax = plt.subplots(figsize=(5, 3.2))
            ks = [r["k"] for r in self.rows]
            ax.plot(ks, self.energies, "o-", label="sequence energy")
            ax.axhline(self.relaxed_value, color="k", ls="--", label="relaxed value")
            ax.set_xlabel("k")
            ax.set_ylabel("energy")
            if title:
                ax.set_title(title)
            ax.legend()
            buf = io.StringIO()
            fig.savefig(buf, format="svg", metadata={"Date": None})
            plt.close(fig)
        return buf.getvalue()

    def write_svg(self, path, title: str = "") -> None:
        atomic_write(path, self.svg(title))


def _weak_error(pair: SequencePair, u, v, battery) -> float:
    err = 0.0
    for phi in battery:
        ev = np.max(np.abs(np.atleast_1d(pair_measure(pair.v, phi)) - np.atleast_1d(pair_measure(v, phi))))
        eu = np.max(np.abs(np.atleast_1d(pair_field(pair.u, phi)) - np.atleast_1d(pair_field(u, phi))))
        err = max(err, float(ev), float(eu))
    return err


def _domain(v):
    if isinstance(v, Measure1D):
        return v.interval
    return v.mesh.bounds


def _mass_of(v) -> float:
    return float(v.total_variation)


def gamma_probe(u, v, generator: Callable[[int, dict], SequencePair], schedule: Sequence[dict],
                relaxed_value: float, tol: Optional[float] = None,
                weak_tol: Optional[float] = None, seed: int = 0, jobs: int = 1) -> ProbeReport:
    """Run ``generator(k, params)`` over ``schedule`` and compare with ``relaxed_value``.

    * The liminf is estimated by the minimum over the second half of the
      trace; ``gap = liminf - relaxed_value``.
    * PASS iff the pairs pass the weak-* check, ``gap >= -tol`` and the
      last energy is within ``tol`` of the relaxed value.
    * ``tol`` defaults to ``0.05 max(1, |relaxed|)``.
    * The weak-* check pairs the last element against 16 seeded cosines;
      ``weak_tol`` defaults to ``0.05 (1 + |v|)``.

    ``jobs > 1`` builds the pairs in a thread pool; rows keep schedule order.
    """
    if not schedule:
        raise ValueError("empty schedule")
    tol = 0.05 * max(1.0, abs(relaxed_value)) if tol is None else tol
    weak_tol = 0.05 * (1.0 + _mass_of(v)) if weak_tol is None else weak_tol
    items = list(enumerate(schedule))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(lambda kp: generator(kp[0], kp[1]), items))
    else:
        pairs = [generator(k, p) for k, p in items]
    battery = weak_battery(_domain(v), 16, seed)
    weak = [_weak_error(pairs[-1], u, v, battery)]
    rows = []
    for (k, params), pair in zip(items, pairs):
        merged = {**params, **pair.params}
        rows.append({"k": k, "eps": float(merged.get("eps", merged.get("width", float("nan")))),
                     "delta": float(merged.get("delta", float("nan"))),
                     "eta": float(merged.get("eta", float("nan"))),
                     "energy": float(pair.energy), "relaxed_value": float(relaxed_value),
                     "gap": float(pair.energy - relaxed_value),
                     "support_measure": float(pair.support_measure), "mass": float(pair.mass)})
    energies = np.array([r["energy"] for r in rows])
    liminf = float(np.min(energies[len(energies) // 2:]))
    gap = liminf - relaxed_value
    last_gap = float(energies[-1] - relaxed_value)
    valid = weak[-1] <= weak_tol
    passed = bool(valid and gap >= -tol and abs(last_gap) <= tol)
    return ProbeReport(rows=rows, relaxed_value=float(relaxed_value), liminf=liminf, gap=gap,
                       last_gap=last_gap, tol=tol, weak_errors=weak, weak_tol=weak_tol,
                       valid=bool(valid), passed=passed)


@dataclass
class ConcentrationReport:
    rows: list
    thresholds: tuple
    purely_concentrating: bool


def _level_stats(v, t: float) -> tuple[float, float]:
    if isinstance(v, SpikeDensity):
        return v.level_stats(t)
    if isinstance(v, Measure1D):
        mag, vol = (norm(v.ac), v.cell_width) if v.cells else (np.zeros(0), 0.0)
    else:
        mag, vol = norm(v.ac).reshape(-1), v.mesh.cell_volume
    return float(np.count_nonzero(mag > t) * vol), float(np.sum(mag[mag > t]) * vol)


def concentration_detector(pairs: Sequence[SequencePair],
                           thresholds=tuple(2.0 ** np.arange(0, 11)),
                           decay: float = 0.25, keep: float = 0.5) -> ConcentrationReport:
    """Classify the ``v`` sequence as purely concentrating or not.

    Purely concentrating means the support measure of ``v_k`` drops to at
    most ``decay`` times its first value and never increases, while the
    total mass stays at least ``keep`` times its first (positive) value.
    """
    rows = []
    for p in pairs:
        row = {"k": p.k, "support_measure": float(p.support_measure), "mass": float(p.mass)}
        for t in thresholds:
            meas, mass = _level_stats(p.v, float(t))
            row[f"measure_above_{t:g}"] = meas
            row[f"mass_above_{t:g}"] = mass
        rows.append(row)
    sup = np.array([r["support_measure"] for r in rows])
    mass = np.array([r["mass"] for r in rows])
    conc = bool(len(rows) >= 2 and mass[0] > 0 and sup[-1] <= decay * sup[0]
                and np.all(np.diff(sup) <= 1e-15 * max(1.0, sup[0]))
                and np.all(mass >= keep * mass[0]))
    return ConcentrationReport(rows=rows, thresholds=tuple(float(t) for t in thresholds),
                               purely_concentrating=conc)
