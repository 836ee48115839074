"""Relaxed energies: density ``g``, the cell formula ``f_W^0`` and evaluators.

Notation used below:

* ``rho = (f2**)^inf`` and ``R = (W**)^inf`` are the recession functions of
  the envelopes;
* ``f1min = inf f1``.

The bulk density for ``n >= 2`` is the infimal convolution

    g(a, b) = min_{b1 + b2 = b} f1(a) f2**(b1) + f1min rho(b2),

and the one-dimensional cost of a charged point is the cell formula

    f_W^0(a+, a-, b) = inf { int f1(u) rho(v) + R(u') : u(-1) = a-, u(1) = a+, int v = b }.

By homogeneity and subadditivity of ``rho`` and ``R`` (and Jensen along
monotone pieces) the cell infimum reduces to a scan over one intermediate
value ``z``:

    f_W^0(a+, a-, b) = min_z f1(z) rho(b) + R(z - a-) + R(a+ - z).
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .bv1d import BV1D, derivative, trace
from .errors import (
    NumericalError,
    PreconditionError,
    RepresentationError,
    UnsupportedDimension,
    UnsupportedIntegrand,
)
from .funclib import EnvelopeTable, FunctionModel, as_points, convex_envelope, get_preset, norm
from .measure1d import Measure1D, atomic_decompose, nonlinear_transform
from .meshfield import NdMeasure, NodalField

logger = logging.getLogger(__name__)

#: Relative tolerance for the direct/reduced cell-solver agreement.
CELL_TOL = 0.02
#: Coarse grid size per axis in the ``g`` minimization.
G_GRID = 33
#: Zoom rounds, each shrinking the window by 4 (the objective is convex in b1).
G_ROUNDS = 18
#: Step of the reduced ``z`` scan (one-dimensional targets).
Z_STEP = 1e-4


# ---------------------------------------------------------------------------
# reports


@dataclass
class EnergyReport:
    """Per-term breakdown of a relaxed energy.

    ``total`` is the sum of all parts, added in the field order below.
    """

    diffuse_f2_term: float = 0.0
    diffuse_W_term: float = 0.0
    jump_terms: list = field(default_factory=list)
    boundary_left: float = 0.0
    boundary_right: float = 0.0
    singular_v_term: float = 0.0
    g_term: float = 0.0
    face_jump_term: float = 0.0
    quadrature_error: float = 0.0
    total: float = field(init=False, default=0.0)

    def __post_init__(self):
        self.total = self.part_sum()

    def part_sum(self) -> float:
        parts = [self.diffuse_f2_term, self.diffuse_W_term, self.jump_sum,
                 self.boundary_left, self.boundary_right, self.singular_v_term,
                 self.g_term, self.face_jump_term]
        return float(sum(parts))

    @property
    def jump_sum(self) -> float:
        return float(sum(v for _, v in self.jump_terms))

    def sum_residual(self) -> float:
        """Relative mismatch between ``total`` and a fresh sum of the parts."""
        parts = np.array([self.diffuse_f2_term, self.diffuse_W_term, self.boundary_left,
                          self.boundary_right, self.singular_v_term, self.g_term,
                          self.face_jump_term] + [v for _, v in self.jump_terms])
        ref = float(np.sum(parts))
        return abs(self.total - ref) / max(1.0, abs(ref))

    CSV_COLUMNS = ("total", "diffuse_f2_term", "diffuse_W_term", "jump_sum", "boundary_left",
                   "boundary_right", "singular_v_term", "g_term", "face_jump_term",
                   "quadrature_error")

    def csv_row(self) -> dict:
        return {k: float(getattr(self, k)) for k in self.CSV_COLUMNS}

    def to_kv(self) -> dict:
        out = self.csv_row()
        out["jump_x"] = [float(x) for x, _ in self.jump_terms]
        out["jump_value"] = [float(v) for _, v in self.jump_terms]
        return out


@dataclass
class CellSolution:
    """Result of :func:`solve_cell_fw0`.

    ``u_profile`` has ``N + 1`` nodal values on ``[-1, 1]`` and ``v_profile``
    ``N`` cell values; together they realize ``reduced_value`` exactly in
    the recession energy.  ``direct_profile`` is the solver's own minimizer.
    """

    value: float
    reduced_value: float
    z_star: np.ndarray
    u_profile: np.ndarray
    v_profile: np.ndarray
    direct_profile: np.ndarray
    rel_gap: float
    agree: bool
    sweeps: int
    nodes: int

    @property
    def gap(self) -> float:
        return self.value - self.reduced_value

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.nodes + 1)


# ---------------------------------------------------------------------------
# helpers


def _flat_points(x, dim):
    pts = as_points(x, dim)
    return pts.reshape(-1, dim), pts.shape[:-1]


class _Rec:
    """Fast evaluator of an envelope's recession function on point arrays."""

    def __init__(self, env: EnvelopeTable):
        self.env = env
        self.dim = env.dim
        if self.dim == 1:
            self.plus = float(env.recession(1.0))
            self.minus = float(env.recession(-1.0))

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        # pts carry a trailing axis of length dim
        if self.dim == 1:
            t = pts[..., 0]
            return np.where(t > 0, self.plus * t, -self.minus * t)
        return np.asarray(self.env.recession(pts), dtype=float)


def _f1_points(f1: FunctionModel, pts: np.ndarray) -> np.ndarray:
    return np.asarray(f1.func(pts), dtype=float)


@functools.lru_cache(maxsize=64)
def f1_minimum(f1: FunctionModel) -> tuple[float, tuple]:
    """Global infimum of ``f1`` and a minimizer.

    Declared values are used when the preset carries them; otherwise a grid
    scan over ``[-R, R]^m`` (``R = f1.scan_radius``) is refined locally.
    """
    if f1.minimum is not None:
        arg = f1.argmin if f1.argmin is not None else (float("nan"),) * f1.dim
        return float(f1.minimum), tuple(arg)
    m, r = f1.dim, f1.scan_radius
    if m == 1:
        grid = np.linspace(-r, r, 20001)[:, None]
    elif m == 2:
        ax = np.linspace(-r, r, 401)
        grid = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    else:
        raise UnsupportedDimension("numeric f1 scan needs m <= 2; declare the minimum")
    vals = _f1_points(f1, grid)
    k = int(np.argmin(vals))
    best_x, best = grid[k].copy(), float(vals[k])
    step = grid[1, -1] - grid[0, -1] if m == 1 else 2 * r / 400
    fun = lambda x: float(_f1_points(f1, np.atleast_1d(x)[None, :])[0])
    if m == 1:
        res = optimize.minimize_scalar(lambda t: fun([t]), bounds=(best_x[0] - step, best_x[0] + step),
                                       method="bounded", options={"xatol": 1e-12})
        cand_x, cand = np.array([res.x]), float(res.fun)
    else:
        res = optimize.minimize(fun, best_x, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14})
        cand_x, cand = res.x, float(res.fun)
    if cand < best:
        best_x, best = cand_x, cand
    return best, tuple(float(t) for t in best_x)


def growth_beta(f1: FunctionModel, f2: FunctionModel, W: FunctionModel) -> float:
    """Constant ``beta = C2 K + kappa`` of the bound

    ``Frel(u, v; A) <= beta (L(A) + |Du|(A) + |v|(A))``.
    """
    return f1.growth[1] * f2.growth_constant + W.growth_constant


@dataclass(frozen=True, eq=False)
class Integrands:
    """The triple ``(f1, f2, W)`` with envelopes and ``f1min`` precomputed."""

    f1: FunctionModel
    f2: FunctionModel
    W: FunctionModel
    f2env: EnvelopeTable
    Wenv: EnvelopeTable
    f1min: float
    u_min: tuple

    @classmethod
    def build(cls, f1: FunctionModel, f2: FunctionModel, W: FunctionModel,
              resolution: int = 257) -> "Integrands":
        f1min, u_min = f1_minimum(f1)
        return cls(f1, f2, W, convex_envelope(f2, resolution=resolution),
                   convex_envelope(W, resolution=resolution), f1min, u_min)

    @classmethod
    def from_presets(cls, f1: str, f2: str, W: str, n: int = 1, m: int = 1,
                     d: int = 1) -> "Integrands":
        """Look up presets; ``W`` acts on ``m x n`` matrices."""
        return cls.build(get_preset(f1, m), get_preset(f2, d), get_preset(W, m * n))

    @property
    def beta(self) -> float:
        return growth_beta(self.f1, self.f2, self.W)


# ---------------------------------------------------------------------------
# density g


def _unit_grid(d: int, k: int) -> np.ndarray:
    ax = np.linspace(-1.0, 1.0, k)
    return np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)


def _g_core(c, f2env: EnvelopeTable, f1min: float, b, chunk: int = 2048):
    """Vectorized ``g`` for weights ``c = f1(a)`` (N,) and targets ``b`` (N, d)."""
    d = f2env.dim
    rec = _Rec(f2env)
    n = b.shape[0]
    val = np.empty(n)
    b1 = np.empty_like(b)
    unit = _unit_grid(d, G_GRID)

    def obj(cc, bb, cand):
        return (cc[:, None] * f2env._eval_points(cand)
                + f1min * rec(bb[:, None, :] - cand))

    for s in range(0, n, chunk):
        cc, bb = c[s:s + chunk], b[s:s + chunk]
        # endpoint candidates first so that ties resolve towards them
        ends = np.stack([bb, np.zeros_like(bb)], axis=1)
        ev = obj(cc, bb, ends)
        k = np.argmin(ev, axis=1)
        best_v = ev[np.arange(len(cc)), k]
        best_x = ends[np.arange(len(cc)), k]
        center = 0.5 * bb
        half = 2.0 * (norm(bb) + 1.0)
        for _ in range(G_ROUNDS + 1):
            cand = center[:, None, :] + half[:, None, None] * unit[None]
            gv = obj(cc, bb, cand)
            k = np.argmin(gv, axis=1)
            gbest = gv[np.arange(len(cc)), k]
            center = cand[np.arange(len(cc)), k]
            better = gbest < best_v
            best_v = np.where(better, gbest, best_v)
            best_x = np.where(better[:, None], center, best_x)
            half = half / 4.0
        # f1 at its minimum: b1 = b is optimal and exact
        short = cc <= f1min
        if np.any(short):
            best_v[short] = f1min * f2env._eval_points(bb[short])
            best_x[short] = bb[short]
        val[s:s + chunk] = best_v
        b1[s:s + chunk] = best_x
    return val, b1


def g_split(f1: FunctionModel, f2env: EnvelopeTable, f1min: float, a, b):
    """``g(a, b)`` together with the minimizing ``b1``.

    ``a`` and ``b`` follow the point convention of :mod:`relaxkit.funclib`
    and are broadcast against each other.  Returns ``(values, b1)`` with
    ``values`` of the broadcast batch shape and ``b1`` carrying a trailing
    axis of length ``d`` (dropped when ``d == 1``).
    """
    m, d = f1.dim, f2env.dim
    pa = as_points(a, m)
    pb = as_points(b, d)
    shape = np.broadcast_shapes(pa.shape[:-1], pb.shape[:-1])
    pa = np.broadcast_to(pa, shape + (m,)).reshape(-1, m)
    pb = np.broadcast_to(pb, shape + (d,)).reshape(-1, d)
    c = _f1_points(f1, pa)
    val, b1 = _g_core(c, f2env, float(f1min), np.ascontiguousarray(pb))
    val = val.reshape(shape)
    b1 = b1.reshape(shape + (d,))
    if d == 1:
        b1 = b1[..., 0]
    if not shape:
        return float(val), b1
    return val, b1


def g_density(f1: FunctionModel, f2env: EnvelopeTable, f1min: float, a, b):
    """Infimal-convolution density ``g(a, b)``; see :func:`g_split`."""
    return g_split(f1, f2env, f1min, a, b)[0]


# ---------------------------------------------------------------------------
# cell formula


def _z_radius(*traces) -> float:
    big = max((float(np.max(np.abs(t))) for t in traces), default=0.0)
    return max(3.0, big + 3.0)


def _scan_min(obj, m: int, radius: float, extra, step: float = Z_STEP):
    """Grid scan of ``obj`` (vectorized over points with trailing axis ``m``) plus local refinement."""
    extra = [np.atleast_1d(np.asarray(e, dtype=float)) for e in extra]
    if m == 1:
        n = int(round(2 * radius / step)) + 1
        grid = np.linspace(-radius, radius, n)[:, None]
        h = grid[1, 0] - grid[0, 0]
    elif m == 2:
        h = 0.02
        n = int(round(2 * radius / h)) + 1
        ax = np.linspace(-radius, radius, n)
        grid = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    else:
        raise UnsupportedDimension("cell formula scan supports m <= 2")
    if extra:
        grid = np.vstack([np.array(extra).reshape(-1, m), grid])
    vals = obj(grid)
    k = int(np.argmin(vals))
    best_z, best = grid[k].copy(), float(vals[k])
    fun = lambda z: float(obj(np.atleast_1d(z)[None, :].astype(float))[0])
    if m == 1:
        res = optimize.minimize_scalar(lambda t: fun([t]), bounds=(best_z[0] - h, best_z[0] + h),
                                       method="bounded", options={"xatol": 1e-12})
        cand_z, cand = np.array([res.x]), float(res.fun)
    else:
        res = optimize.minimize(fun, best_z, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14})
        cand_z, cand = res.x, float(res.fun)
    if cand < best:
        best_z, best = cand_z, cand
    return best, best_z


def _cell_setup(f1, f2env, Wenv, b):
    if Wenv.dim != f1.dim:
        raise ValueError("W envelope and f1 must share the target dimension m")
    rho_b = float(_Rec(f2env)(as_points(b, f2env.dim).reshape(1, -1))[0])
    return rho_b, _Rec(Wenv)


def fw0_reduced(f1: FunctionModel, f2env: EnvelopeTable, Wenv: EnvelopeTable,
                a_plus, a_minus, b) -> tuple[float, np.ndarray]:
    """Reduced cell formula ``min_z f1(z) rho(b) + R(z - a-) + R(a+ - z)``.

    Returns ``(value, z_star)``.  The traces themselves are always among
    the candidates, so ``f_W^0(a, a, 0) = 0`` holds exactly.
    """
    m = f1.dim
    ap = np.atleast_1d(np.asarray(a_plus, dtype=float))
    am = np.atleast_1d(np.asarray(a_minus, dtype=float))
    rho_b, R = _cell_setup(f1, f2env, Wenv, b)

    def obj(z):
        return rho_b * _f1_points(f1, z) + R(z - am) + R(ap - z)

    extra = [am, ap]
    if f1.argmin is not None:
        extra.append(np.asarray(f1.argmin))
    return _scan_min(obj, m, _z_radius(ap, am), extra)


def fw0_boundary(f1: FunctionModel, f2env: EnvelopeTable, Wenv: EnvelopeTable,
                 trace_value, b, side: str) -> tuple[float, np.ndarray]:
    """Boundary cost with one trace free.

    ``side="left"`` gives ``inf_z f_W^0(u(alpha+), z, b)`` and
    ``side="right"`` gives ``inf_z f_W^0(z, u(beta-), b)``; minimizing the
    free trace out leaves ``min_y f1(y) rho(b) + R(+-(a - y))``.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    a = np.atleast_1d(np.asarray(trace_value, dtype=float))
    rho_b, R = _cell_setup(f1, f2env, Wenv, b)
    if rho_b == 0.0:
        return 0.0, a
    sgn = 1.0 if side == "left" else -1.0

    def obj(y):
        return rho_b * _f1_points(f1, y) + R(sgn * (a - y))

    extra = [a] + ([np.asarray(f1.argmin)] if f1.argmin is not None else [])
    return _scan_min(obj, f1.dim, _z_radius(a), extra)


def cell_energy(f1, f2env, Wenv, u_nodes, v_nodes, weights) -> float:
    """Discrete recession energy of a nodal profile on ``[-1, 1]``.

    ``sum_i f1(u_i) rho(v_i) w_i + sum_i R(u_{i+1} - u_i)``, where ``w`` are
    the dual-cell weights of the nodes.  ``R`` is 1-homogeneous, so the
    gradient term needs no mesh width.
    """
    m, d = f1.dim, f2env.dim
    pu = as_points(u_nodes, m).reshape(-1, m)
    pv = as_points(v_nodes, d).reshape(-1, d)
    rho, R = _Rec(f2env), _Rec(Wenv)
    bulk = float(np.sum(_f1_points(f1, pu) * rho(pv) * np.asarray(weights)))
    return bulk + float(np.sum(R(np.diff(pu, axis=0))))


def canonical_profile(a_plus, a_minus, z, b, N: int):
    """Plateau profile realizing the reduced value.

    ``u`` runs linearly from ``a-`` to ``z`` on ``[-1, -1/2]``, stays at
    ``z`` on the middle half and runs to ``a+`` on ``[1/2, 1]``; ``v`` is
    uniform on the plateau cells with mesh integral ``b``.
    """
    x = np.linspace(-1.0, 1.0, N + 1)
    am, ap, z = float(a_minus), float(a_plus), float(z)
    u = np.where(x <= -0.5, am + (z - am) * (x + 1.0) / 0.5,
                 np.where(x >= 0.5, z + (ap - z) * (x - 0.5) / 0.5, z))
    u[0], u[-1] = am, ap
    mid = 0.5 * (x[1:] + x[:-1])
    on = np.abs(mid) < 0.5
    dx = 2.0 / N
    b = np.atleast_1d(np.asarray(b, dtype=float))
    v = np.zeros((N, b.size))
    v[on] = b / (np.count_nonzero(on) * dx)
    return u, (v[:, 0] if b.size == 1 else v)


def solve_cell_fw0(f1: FunctionModel, f2env: EnvelopeTable, Wenv: EnvelopeTable,
                   a_plus, a_minus, b, N: int = 256, tol: float = CELL_TOL,
                   max_sweeps: int = 200) -> CellSolution:
    """Direct discretized cell solver, cross-checked against the reduced scan.

    Nodes ``u_0 = a-, ..., u_N = a+`` on ``[-1, 1]``.  The ``v``-step is
    exact: all mass sits at the node minimizing ``f1(u_i)``, so the
    discrete energy is ``rho(b) min_i f1(u_i) + sum R(u_{i+1} - u_i)``.  The
    ``u``-step is Gauss-Seidel coordinate descent over a candidate grid of
    ``min(4N, 1024) + 1`` values (plus neighbor values), then block moves of
    runs of equal values, then a continuous refinement of the run carrying
    the mass.  Two starts are used: the linear
    interpolant and a plateau at the minimizer of ``f1``.

    Raises
    ------
    NumericalError
        If a sweep increases the objective.
    """
    if f1.dim != 1:
        raise UnsupportedDimension("the direct cell solver handles scalar targets (m = 1)")
    if N < 8:
        raise ValueError("the cell solver needs N >= 8")
    ap, am = float(np.ravel(a_plus)[0]), float(np.ravel(a_minus)[0])
    rho_b, R = _cell_setup(f1, f2env, Wenv, b)
    radius = _z_radius(ap, am)
    zc = np.linspace(-radius, radius, min(4 * N, 1024) + 1)
    fz = _f1_points(f1, zc[:, None])
    F = lambda t: _f1_points(f1, np.atleast_1d(np.asarray(t, dtype=float))[:, None])
    Rs = lambda t: R(np.asarray(t, dtype=float)[..., None])

    def energy(u):
        return rho_b * float(np.min(F(u))) + float(np.sum(Rs(np.diff(u))))

    def descend(u):
        u = u.copy()
        fu = F(u)
        cur = energy(u)
        sweeps = 0
        for sweeps in range(1, max_sweeps + 1):
            moved = False
            for i in range(1, N):
                keep = fu[i]
                fu[i] = np.inf
                m_other = fu.min()
                fu[i] = keep
                cz = np.concatenate([zc, [u[i - 1], u[i + 1], u[i]]])
                cf = np.concatenate([fz, [fu[i - 1], fu[i + 1], fu[i]]])
                obj = rho_b * np.minimum(cf, m_other) + Rs(cz - u[i - 1]) + Rs(u[i + 1] - cz)
                k = int(np.argmin(obj))
                if obj[k] < obj[-1] - 1e-15:
                    u[i], fu[i] = cz[k], cf[k]
                    moved = True
            # block moves: shift each run of equal interior values as a whole
            i = 1
            while i < N:
                j = i
                while j + 1 < N and u[j + 1] == u[i]:
                    j += 1
                if j > i:
                    outside = np.concatenate([fu[:i], fu[j + 1:]]).min()
                    cz = np.concatenate([zc, [u[i - 1], u[j + 1], u[i]]])
                    cf = np.concatenate([fz, F(cz[-3:])])
                    obj = (rho_b * np.minimum(cf, outside) + Rs(cz - u[i - 1])
                           + Rs(u[j + 1] - cz))
                    k = int(np.argmin(obj))
                    if obj[k] < obj[-1] - 1e-15:
                        u[i:j + 1], fu[i:j + 1] = cz[k], cf[k]
                        moved = True
                i = j + 1
            # continuous refinement of the run of nodes carrying the mass
            i = int(np.argmin(fu))
            if 0 < i < N:
                lo, hi = i, i
                while lo > 1 and u[lo - 1] == u[i]:
                    lo -= 1
                while hi < N - 1 and u[hi + 1] == u[i]:
                    hi += 1
                outside = np.concatenate([fu[:lo], fu[hi + 1:]]).min()
                h = zc[1] - zc[0]
                left, right = u[lo - 1], u[hi + 1]
                loc = lambda t: (rho_b * min(float(F(t)[0]), outside)
                                 + float(Rs(t - left)) + float(Rs(right - t)))
                res = optimize.minimize_scalar(loc, bounds=(u[i] - h, u[i] + h), method="bounded",
                                               options={"xatol": 1e-12})
                if res.fun < loc(u[i]) - 1e-15:
                    u[lo:hi + 1] = res.x
                    fu[lo:hi + 1] = F(res.x)[0]
                    moved = True
            new = energy(u)
            if new > cur + 1e-12 * max(1.0, abs(cur)):
                raise NumericalError(f"cell solver objective increased ({cur:.12g} -> {new:.12g})")
            if not moved or cur - new < 1e-14:
                cur = new
                break
            cur = new
        return u, cur, sweeps

    x = np.linspace(-1.0, 1.0, N + 1)
    starts = [am + (ap - am) * (x + 1.0) / 2.0]
    _, arg = f1_minimum(f1)
    if np.isfinite(arg[0]):
        plateau = np.full(N + 1, float(arg[0]))
        plateau[0], plateau[-1] = am, ap
        starts.append(plateau)
    best = None
    for start in starts:
        out = descend(start)
        if best is None or out[1] < best[1]:
            best = out
    u_dir, direct, sweeps = best

    reduced, z_star = fw0_reduced(f1, f2env, Wenv, ap, am, b)
    gap = direct - reduced
    rel = gap / max(abs(reduced), 1e-12)
    agree = bool(abs(gap) <= 1e-9 or abs(rel) <= tol)
    if not agree:
        logger.warning("cell solvers disagree: direct %.8g vs reduced %.8g", direct, reduced)
    u_prof, v_prof = canonical_profile(ap, am, z_star[0], b, N)
    return CellSolution(value=direct, reduced_value=reduced, z_star=np.atleast_1d(z_star),
                        u_profile=u_prof, v_profile=v_prof, direct_profile=u_dir,
                        rel_gap=float(rel), agree=agree, sweeps=sweeps, nodes=N)


# ---------------------------------------------------------------------------
# evaluators


def _check_dims_1d(f1, f2env, Wenv, u, v):
    if u.interval != v.interval:
        raise PreconditionError("u and v must live on the same interval")
    if f1.dim != u.dim or Wenv.dim != u.dim:
        raise PreconditionError("f1 and W must act on the target dimension of u")
    if f2env.dim != v.dim:
        raise PreconditionError("f2 must act on the dimension of v")


def _pow2_at_least(n: int) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(n, 1)))))


def _diffuse_f2(f1, f2env, u, v_diff, cells):
    weight = lambda x: _f1_points(f1, u.value(x))
    return nonlinear_transform(f2env, v_diff.with_mesh(cells), weight=weight)


def evaluate_relaxed_1d(f1: FunctionModel, f2env: EnvelopeTable, Wenv: EnvelopeTable,
                        f1min: float, u: BV1D, v: Measure1D, extra_points=(),
                        cells: Optional[int] = None) -> EnergyReport:
    """Relaxed energy of ``(u, v)`` on an interval.

    Terms:

    * ``int f1(u) d f2**(v^diff)`` by the midpoint rule on a mesh of
      ``cells`` cells (at least 256 and at least the meshes of ``u``, ``v``);
    * ``int d W**(Du^diff)`` (exact for the stored representation);
    * ``f_W^0(u(x+), u(x-), v({x}))`` at every interior atom of ``v``, jump
      of ``u`` and point of ``extra_points``;
    * boundary costs for atoms of ``v`` at the endpoints.

    ``quadrature_error`` is the change of the diffuse ``f2`` term under one
    mesh doubling.  ``f1min`` is accepted for symmetry with the ``n >= 2``
    evaluator; the one-dimensional formula does not use it.

    Raises
    ------
    RepresentationError
        If an atom of ``v`` sits on a Cantor node of ``u``.
    """
    _check_dims_1d(f1, f2env, Wenv, u, v)
    if v.atom_x.size and u.cantor_x.size and np.intersect1d(v.atom_x, u.cantor_x).size:
        raise RepresentationError("an atom of v coincides with a Cantor node of u")
    alpha, beta = u.interval
    cells = _pow2_at_least(max(cells or 256, u.cells, v.cells))

    split = atomic_decompose(v)
    f2_term = _diffuse_f2(f1, f2env, u, split.diffuse, cells)
    f2_fine = _diffuse_f2(f1, f2env, u, split.diffuse, 2 * cells)
    du = atomic_decompose(derivative(u)).diffuse
    w_term = nonlinear_transform(Wenv, du)

    atoms = {float(x): w for x, w in zip(v.atom_x, v.atom_w)}
    zero_b = np.zeros(v.dim)
    points = {x for x in atoms if alpha < x < beta}
    points |= {float(x) for x in u.jump_x}
    points |= {float(x) for x in extra_points if alpha < float(x) < beta}
    jumps = []
    for x in sorted(points):
        b = atoms.get(x, zero_b)
        val, _ = fw0_reduced(f1, f2env, Wenv, trace(u, x, "right"), trace(u, x, "left"), b)
        jumps.append((x, val))
    left = right = 0.0
    if alpha in atoms:
        left, _ = fw0_boundary(f1, f2env, Wenv, trace(u, alpha, "right"), atoms[alpha], "left")
    if beta in atoms:
        right, _ = fw0_boundary(f1, f2env, Wenv, trace(u, beta, "left"), atoms[beta], "right")
    return EnergyReport(diffuse_f2_term=f2_term, diffuse_W_term=w_term, jump_terms=jumps,
                        boundary_left=float(left), boundary_right=float(right),
                        quadrature_error=abs(f2_fine - f2_term))


def evaluate_relaxed_nd(f1: FunctionModel, f2env: EnvelopeTable, Wenv: EnvelopeTable,
                        f1min: float, u: NodalField, v: NdMeasure) -> EnergyReport:
    """Relaxed energy for ``n >= 2`` on a rectangular mesh.

    ``W`` must be convex (then ``QW = W``) or the target scalar (then
    ``QW = W**``).  The gradient argument is the ``m x n`` matrix flattened
    row by row, so ``Wenv.dim == m * n``.
    """
    mesh = u.mesh
    if v.mesh != mesh:
        raise PreconditionError("u and v must share the mesh")
    m, n = u.m, mesh.n
    if u.m > 1 and not Wenv.source.convex:
        raise UnsupportedIntegrand("non-convex W with vector targets needs a quasiconvex envelope")
    if Wenv.dim != m * n:
        raise PreconditionError(f"W must act on {m}x{n} matrices (dim {m * n})")
    if f1.dim != m or f2env.dim != v.dim:
        raise PreconditionError("integrand dimensions do not match the data")
    vol = mesh.cell_volume
    grads = u.cell_gradients().reshape(-1, m * n)
    w_term = float(np.sum(Wenv._eval_points(grads)) * vol)

    R = _Rec(Wenv)
    face = 0.0
    for area, jump, normal in u.face_jumps:
        face += area * float(R(np.outer(jump, normal).reshape(1, -1))[0])

    c = _f1_points(f1, u.cell_values().reshape(-1, m))
    gvals, _ = _g_core(c, f2env, float(f1min), v.ac.reshape(-1, v.dim))
    g_term = float(np.sum(gvals) * vol)

    rho = _Rec(f2env)
    sing = 0.0
    if v.atoms:
        sing += float(np.sum(rho(np.array([w for _, w in v.atoms]))))
    if v.singular:
        sing += float(np.sum(np.array([mass for _, mass, _ in v.singular])
                             * rho(np.array([d for _, _, d in v.singular]))))
    return EnergyReport(diffuse_W_term=w_term, face_jump_term=face, g_term=g_term,
                        singular_v_term=float(f1min) * sing)


def theta(u: BV1D, v: Measure1D) -> float:
    """Diagnostic ``L^1 + |v| + |Du|`` of the whole interval (drives no decision)."""
    from .bv1d import theta_mass

    return theta_mass(u, v)


def constraint_values(u, v, cells: int = 1 << 14) -> tuple[np.ndarray, np.ndarray]:
    """``(int u dx, v(closure))`` for checking mass constraints.

    Constraints are only checked: the evaluators never project onto them.
    For a :class:`BV1D` the integral uses the midpoint rule on ``cells``
    cells; for a :class:`NodalField` it is exact.
    """
    if isinstance(u, NodalField):
        integral = u.cell_values().reshape(-1, u.m).sum(axis=0) * u.mesh.cell_volume
    else:
        edges = np.linspace(u.alpha, u.beta, cells + 1)
        integral = u.value(0.5 * (edges[1:] + edges[:-1])).sum(axis=0) * (u.length / cells)
    return np.atleast_1d(integral), np.atleast_1d(v.total_mass())
