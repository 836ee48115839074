"""Integrand models, convex envelopes and recession functions.

Every integrand is a :class:`FunctionModel`.  Points of ``R^d`` are passed
as arrays whose trailing axis has length ``d``; for ``d == 1`` plain scalars
or arrays are accepted and evaluated elementwise.

Three roles are distinguished:

* ``"f1"``: bounded coupling weight, ``C1 <= f1(a) <= C2``;
* ``"f2"``: linear-growth density, ``|b|/K <= f2(b) <= K(1 + |b|)``;
* ``"W"``: linear-growth gradient density, same bounds with ``kappa``.

For the last two roles ``growth = (lower, upper)`` stores the constants of
``lower*|x| <= f(x) <= upper*(1 + |x|)``; for ``"f1"`` it stores ``(C1, C2)``.
"""

from __future__ import annotations

import glob
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import (
    HypothesisViolation,
    PreconditionError,
    RecessionEstimationError,
    UnsupportedDimension,
)

logger = logging.getLogger(__name__)

ROLES = ("f1", "f2", "W")

#: Dyadic ladder used to estimate recession functions.
T_LADDER = 2.0 ** np.arange(4, 21)
#: Relative tolerance for the Richardson spread along the ladder.
RECESSION_TOL = 1e-6
#: Ladder on which the sigma witness is tabulated.
SIGMA_LADDER = 2.0 ** np.arange(0, 21)
#: Cap on nodes per axis for planar hulls (facet count grows like the square).
RES_2D = 129


def as_points(x, dim: int) -> np.ndarray:
    """Return ``x`` as an array of points with trailing axis ``dim``."""
    x = np.asarray(x, dtype=float)
    if dim == 1:
        return x[..., None]
    if x.shape[-1] != dim:
        raise ValueError(f"expected trailing axis of length {dim}, got shape {x.shape}")
    return x


def norm(p: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.square(p), axis=-1))


@dataclass(frozen=True)
class FunctionModel:
    """A closed-form or sampled integrand with declared growth constants."""

    name: str
    role: str
    dim: int
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    growth: tuple[float, float]
    kind: str = "closed_form_preset"
    known_envelope: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    known_recession: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    convex: bool = False
    minimum: Optional[float] = None
    argmin: Optional[tuple[float, ...]] = None
    scan_radius: float = 10.0

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        lo, hi = self.growth
        if not (lo > 0 and hi > 0):
            raise ValueError("growth constants must be positive")

    def __call__(self, x) -> np.ndarray:
        return self.func(as_points(x, self.dim))

    @property
    def growth_constant(self) -> float:
        """Single constant K (or kappa) with ``|x|/K <= f <= K(1+|x|)``."""
        lo, hi = self.growth
        if self.role == "f1":
            return hi
        return max(1.0 / lo, hi)

    @classmethod
    def from_samples(cls, name, role, nodes, values, growth, convex=False):
        """Piecewise-linear model through ``(nodes, values)`` in one dimension.

        Outside the sampled range the end segments are extended linearly,
        which keeps linear growth intact.
        """
        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape or nodes.size < 2:
            raise ValueError("sampled model needs matching 1-D node/value arrays")
        order = np.argsort(nodes)
        nodes, values = nodes[order], values[order]
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("sample nodes must be distinct")
        left_slope = (values[1] - values[0]) / (nodes[1] - nodes[0])
        right_slope = (values[-1] - values[-2]) / (nodes[-1] - nodes[-2])

        def func(p):
            x = p[..., 0]
            y = np.interp(x, nodes, values)
            y = np.where(x < nodes[0], values[0] + left_slope * (x - nodes[0]), y)
            return np.where(x > nodes[-1], values[-1] + right_slope * (x - nodes[-1]), y)

        return cls(name=name, role=role, dim=1, func=func, growth=tuple(growth),
                   kind="sampled_grid", convex=convex)


# ---------------------------------------------------------------------------
# envelopes


@dataclass(frozen=True, eq=False)
class EnvelopeTable:
    """Grid representation of ``f**`` with its recession function.

    Inside the box the envelope is the lower convex hull of the sampled
    graph.  It is stored as a family of affine pieces so that evaluation
    anywhere is ``max_k (slopes[k] . x + intercepts[k])``; outside the box
    this extends ``f**`` by the supporting pieces of the boundary nodes.
    """

    source: FunctionModel
    axes: tuple
    values: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    directions: np.ndarray
    recession_values: np.ndarray
    sigma_t: np.ndarray
    sigma: np.ndarray
    residual: Optional[float] = None

    @property
    def dim(self) -> int:
        return self.source.dim

    @property
    def name(self) -> str:
        return self.source.name

    def _eval_points(self, pts: np.ndarray) -> np.ndarray:
        if self.source.known_envelope is not None:
            return self.source.known_envelope(pts)
        return _max_affine(pts, self.slopes, self.intercepts)

    def __call__(self, x) -> np.ndarray:
        return self._eval_points(as_points(x, self.dim))

    def recession(self, b) -> np.ndarray:
        return recession(self, b)

    def nodes(self) -> np.ndarray:
        """Grid nodes as an array of shape ``values.shape + (d,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)


def _max_affine(pts, slopes, intercepts):
    flat = pts.reshape(-1, pts.shape[-1])
    # keep each block near 2^22 entries
    chunk = max(1, (1 << 22) // max(1, slopes.shape[0]))
    out = np.empty(flat.shape[0])
    for start in range(0, flat.shape[0], chunk):
        block = flat[start:start + chunk]
        out[start:start + chunk] = np.max(block @ slopes.T + intercepts, axis=1)
    return out.reshape(pts.shape[:-1])


def _lower_hull_1d(x, y):
    """Vertices of the lower convex hull of sorted samples (monotone chain)."""
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (x[i1] - x[i0]) * (y[i] - y[i0]) - (y[i1] - y[i0]) * (x[i] - x[i0])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull)


def _pieces_1d(x, y):
    idx = _lower_hull_1d(x, y)
    hx, hy = x[idx], y[idx]
    slopes = np.diff(hy) / np.diff(hx)
    intercepts = hy[:-1] - slopes * hx[:-1]
    return slopes[:, None], intercepts


def _pieces_2d(nodes, y):
    pts = np.column_stack([nodes.reshape(-1, 2), y.reshape(-1)])
    try:
        hull = ConvexHull(pts)
    except QhullError:
        # affine data gives a flat point cloud
        hull = ConvexHull(pts, qhull_options="QJ")
    eq = hull.equations
    lower = eq[eq[:, 2] < -1e-12]
    slopes = -lower[:, :2] / lower[:, 2:3]
    intercepts = -lower[:, 3] / lower[:, 2]
    packed = np.round(np.column_stack([slopes, intercepts]), 12)
    _, keep = np.unique(packed, axis=0, return_index=True)
    keep.sort()
    return slopes[keep], intercepts[keep]


def _normalize_box(box, dim):
    if box is None:
        box = (-16.0, 16.0)
    box = np.asarray(box, dtype=float)
    if box.shape == (2,):
        box = np.tile(box, (dim, 1))
    if box.shape != (dim, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("box must be (lo, hi) or one (lo, hi) pair per axis")
    return box


def _check_sampled_growth(f: FunctionModel, pts, vals, tol=1e-9):
    if f.role == "f1":
        return
    lo, hi = f.growth
    r = norm(pts)
    below = vals < lo * r - tol * (1 + r)
    above = vals > hi * (1 + r) + tol * (1 + r)
    hyp = "(H2)" if f.role == "f2" else "(H3)"
    if np.any(below) or np.any(above):
        bad = np.argmax(below | above)
        raise HypothesisViolation(
            f"{hyp}: {f.name} sampled value {vals.flat[bad]:.6g} at |x|={r.flat[bad]:.6g} "
            f"outside [{lo:g}|x|, {hi:g}(1+|x|)]")


def _unit_directions(dim):
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        theta = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
        return np.column_stack([np.cos(theta), np.sin(theta)])
    eye = np.eye(dim)
    dirs = [eye, -eye]
    ones = np.ones(dim) / np.sqrt(dim)
    dirs.append(ones[None])
    dirs.append(-ones[None])
    return np.vstack(dirs)


def _tail_points(dim, reach):
    k0 = int(np.floor(np.log2(reach))) + 1
    radii = 2.0 ** np.arange(k0, 25)
    dirs = _unit_directions(dim)
    return (radii[:, None, None] * dirs[None]).reshape(-1, dim)


def convex_envelope(f: FunctionModel, box=None, resolution: int = 257) -> EnvelopeTable:
    """Lower convex envelope of ``f`` sampled on a uniform box grid.

    Parameters
    ----------
    f : FunctionModel
        Integrand with linear growth constants (roles ``f2`` or ``W``).
    box : (lo, hi) or array of shape (d, 2), optional
        Sampling box, ``[-16, 16]^d`` by default.  It should be large
        compared to the scale on which ``f`` is non-convex.
    resolution : int
        Nodes per axis; for ``d = 2`` at most ``RES_2D`` are used.

    Returns
    -------
    EnvelopeTable
        When ``f.known_envelope`` is set it is used for evaluation and the
        numeric hull (``d <= 2``) is only kept as a verification residual.
    """
    d = f.dim
    if d > 2 and f.known_envelope is None:
        raise UnsupportedDimension(
            f"numeric convex hulls need d <= 2; {f.name} has d={d} and no closed-form envelope")
    if resolution < 3:
        raise ValueError("resolution must be at least 3")
    box = _normalize_box(box, d)
    if d == 2:
        resolution = min(resolution, RES_2D)
    if d <= 2:
        axes = tuple(np.linspace(lo, hi, resolution) for lo, hi in box)
    else:
        axes = tuple(np.linspace(lo, hi, 5) for lo, hi in box)
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    raw = f.func(nodes)
    _check_sampled_growth(f, nodes, raw)

    slopes = np.zeros((0, d))
    intercepts = np.zeros(0)
    if d <= 2:
        # far samples along rays pin the extension slope to the true recession
        tail = _tail_points(d, float(np.max(np.abs(box))))
        tail_vals = f.func(tail)
        _check_sampled_growth(f, tail, tail_vals)
    if d == 1:
        x = np.concatenate([axes[0], tail[:, 0]])
        y = np.concatenate([raw, tail_vals])
        order = np.argsort(x, kind="stable")
        slopes, intercepts = _pieces_1d(x[order], y[order])
    elif d == 2:
        slopes, intercepts = _pieces_2d(np.vstack([nodes.reshape(-1, 2), tail]),
                                        np.concatenate([raw.reshape(-1), tail_vals]))

    residual = None
    if f.known_envelope is not None:
        values = f.known_envelope(nodes)
        if d <= 2:
            # a strided subgrid suffices for this diagnostic
            sub = (slice(None, None, 4),) * d
            numeric = _max_affine(nodes[sub], slopes, intercepts)
            residual = float(np.max(np.abs(numeric - values[sub])))
    else:
        values = _max_affine(nodes, slopes, intercepts)
        # the hull never exceeds the samples; clip round-off
        values = np.minimum(values, raw)

    table = EnvelopeTable(
        source=f, axes=axes, values=values, slopes=slopes, intercepts=intercepts,
        directions=np.zeros((0, d)), recession_values=np.zeros(0),
        sigma_t=np.zeros(0), sigma=np.zeros(0), residual=residual)
    dirs = _unit_directions(d)
    rec = recession(table, dirs if d > 1 else dirs[:, 0])
    sigma_t, sigma = _sigma_table(table, dirs, rec)
    return EnvelopeTable(
        source=f, axes=axes, values=values, slopes=slopes, intercepts=intercepts,
        directions=dirs, recession_values=np.asarray(rec), sigma_t=sigma_t, sigma=sigma,
        residual=residual)


def envelope_of(f: FunctionModel, box=None, resolution: int = 257) -> EnvelopeTable:
    """Alias kept for readability at call sites that build several envelopes."""
    return convex_envelope(f, box=box, resolution=resolution)


# ---------------------------------------------------------------------------
# recession functions


def recession(e: EnvelopeTable, b) -> np.ndarray:
    """Recession function ``h^inf(b) = lim h(tb)/t`` of an envelope.

    The ratio is evaluated at the three largest ladder values ``T``; two
    Richardson-corrected estimates must agree to ``RECESSION_TOL``
    (relative), otherwise :class:`RecessionEstimationError` is raised.
    Homogeneity holds exactly: the estimate is computed on ``b/|b|`` and
    scaled by ``|b|``.
    """
    f = e.source
    pts = as_points(b, e.dim)
    if f.known_recession is not None:
        return f.known_recession(pts)
    r = norm(pts)
    safe = np.where(r > 0, r, 1.0)
    u = pts / safe[..., None]
    t1, t2, t3 = T_LADDER[-1], T_LADDER[-2], T_LADDER[-3]
    q1 = e._eval_points(t1 * u) / t1
    q2 = e._eval_points(t2 * u) / t2
    q3 = e._eval_points(t3 * u) / t3
    rich1 = 2.0 * q1 - q2
    rich2 = 2.0 * q2 - q3
    spread = np.abs(rich1 - rich2)
    if np.any(spread > RECESSION_TOL * np.maximum(1.0, np.abs(rich1))):
        worst = float(np.max(spread))
        raise RecessionEstimationError(
            f"{f.name}: recession ratio did not settle (spread {worst:.3g})")
    return np.where(r > 0, r * rich1, 0.0)


def _sigma_table(e: EnvelopeTable, dirs, rec):
    # sigma(t) = sup_{|b|<=1, s>=t} |h_inf(b) - h(sb)/s|, tabulated on a ladder
    radii = np.linspace(0.0, 1.0, 9)
    b = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, e.dim)
    hinf = (radii[:, None] * np.asarray(rec)[None, :]).reshape(-1)
    raw = np.array([np.max(np.abs(hinf - e._eval_points(t * b) / t)) for t in SIGMA_LADDER])
    sigma = np.maximum.accumulate(raw[::-1])[::-1]
    return SIGMA_LADDER.copy(), sigma


def sigma_at(e: EnvelopeTable, t: float) -> float:
    """Non-increasing witness ``sigma(t)``; step interpolation on the ladder."""
    idx = np.searchsorted(e.sigma_t, t, side="right") - 1
    if idx < 0:
        return float("inf")
    return float(e.sigma[idx])


# ---------------------------------------------------------------------------
# growth checks


@dataclass
class GrowthReport:
    name: str
    role: str
    passed: bool
    lower: float
    upper: float
    message: str = ""

    @property
    def hypothesis(self) -> str:
        return {"f1": "(H1)", "f2": "(H2)", "W": "(H3)"}[self.role]


def _growth_samples(dim, sample_count, radius, seed=0):
    if dim == 1:
        box = np.linspace(-radius, radius, sample_count | 1)[:, None]
        tails = 2.0 ** np.arange(5, 41)
        tail = np.concatenate([tails, -tails])[:, None]
        dirs = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(seed)
        box = rng.uniform(-radius, radius, size=(sample_count, dim))
        box = np.vstack([np.zeros((1, dim)), box])
        dirs = _unit_directions(dim)
        tails = 2.0 ** np.arange(5, 41)
        tail = (tails[:, None, None] * dirs[None]).reshape(-1, dim)
    return box, tail, dirs


def check_growth(f: FunctionModel, role: Optional[str] = None, sample_count: int = 2001,
                 radius: float = 16.0) -> GrowthReport:
    """Sample ``f`` on a box and along tail rays and test its growth hypothesis.

    Failures are reported, never raised.  The reported constants are the
    tightest ones observed on the samples.
    """
    role = role or f.role
    box, tail, dirs = _growth_samples(f.dim, sample_count, radius)
    pts = np.vstack([box, tail])
    vals = f.func(pts)
    hyp = {"f1": "(H1)", "f2": "(H2)", "W": "(H3)"}[role]
    if not np.all(np.isfinite(vals)):
        return GrowthReport(f.name, role, False, float("nan"), float("nan"),
                            f"{hyp}: non-finite values")

    far = 2.0 ** 40
    mid = 2.0 ** 20
    if role == "f1":
        c1, c2 = float(np.min(vals)), float(np.max(vals))
        ok = c1 > 0
        msg = ""
        far_vals = f.func(far * dirs)
        mid_vals = f.func(mid * dirs)
        if np.any(np.abs(far_vals - mid_vals) > 1e-6 * np.maximum(1.0, np.abs(mid_vals))):
            ok, msg = False, f"{hyp}: values keep changing along tail rays (unbounded?)"
        elif c1 <= 0:
            msg = f"{hyp}: lower bound not positive (C1={c1:g})"
        d_lo, d_hi = f.growth if f.role == "f1" else (None, None)
        if ok and d_lo is not None and (c1 < d_lo - 1e-9 or c2 > d_hi + 1e-9):
            ok, msg = False, f"{hyp}: observed [{c1:g}, {c2:g}] outside declared [{d_lo:g}, {d_hi:g}]"
        return GrowthReport(f.name, role, ok, c1, c2, msg)

    r = norm(pts)
    nz = r > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        k_low = float(np.max(np.where(nz, r / np.where(vals > 0, vals, np.nan), 0.0)))
    if np.any(nz & (vals <= 0)):
        k_low = float("inf")
    k_up = float(np.max(vals / (1.0 + r)))
    ok, msg = True, ""
    up_far = f.func(far * dirs) / (1 + far)
    up_mid = f.func(mid * dirs) / (1 + mid)
    if np.any(up_far > up_mid * (1 + 1e-3) + 1e-12):
        ok, msg = False, f"{hyp}: superlinear growth along tail rays"
    elif not np.isfinite(k_low):
        ok, msg = False, f"{hyp}: not coercive (f <= 0 away from the origin)"
    elif np.any(up_far < up_mid * (1 - 1e-3)):
        ok, msg = False, f"{hyp}: sublinear growth along tail rays"
    if ok and f.role == role:
        declared = f.growth_constant
        if max(k_low, k_up) > declared * (1 + 1e-9):
            ok, msg = False, f"{hyp}: observed constant {max(k_low, k_up):g} exceeds declared {declared:g}"
    return GrowthReport(f.name, role, ok, 1.0 / k_low if k_low > 0 else float("inf"), k_up, msg)


# ---------------------------------------------------------------------------
# presets


def _radial(g):
    return lambda p: g(norm(p))


def _abs(dim):
    h = _radial(lambda r: r)
    return FunctionModel("abs", "f2", dim, h, (1.0, 1.0), known_envelope=h,
                         known_recession=h, convex=True)


def _area(dim):
    h = _radial(lambda r: np.sqrt(1.0 + r * r))
    return FunctionModel("area", "W", dim, h, (1.0, 1.0), known_envelope=h,
                         known_recession=_radial(lambda r: r), convex=True)


def _scaled_abs(dim):
    h = _radial(lambda r: 2.0 * r)
    return FunctionModel("scaled_abs", "W", dim, h, (2.0, 2.0), known_envelope=h,
                         known_recession=h, convex=True)


def _aniso_abs(dim):
    if dim != 1:
        raise UnsupportedDimension("aniso_abs is one-dimensional")

    def h(p):
        x = p[..., 0]
        return 2.0 * np.maximum(x, 0.0) + np.maximum(-x, 0.0)

    return FunctionModel("aniso_abs", "W", 1, h, (1.0, 2.0), known_envelope=h,
                         known_recession=h, convex=True)


def _max_abs_one(dim):
    h = _radial(lambda r: np.maximum(r, 1.0))
    return FunctionModel("max_abs_one", "f2", dim, h, (1.0, 1.0), known_envelope=h,
                         known_recession=_radial(lambda r: r), convex=True)


def _doublewell_shifted(dim):
    # min(|b-1|, |b+1|) + 1 in one dimension, radial version otherwise
    h = _radial(lambda r: np.abs(r - 1.0) + 1.0)
    return FunctionModel("doublewell_shifted", "f2", dim, h, (1.0, 2.0),
                         known_envelope=_radial(lambda r: np.maximum(r, 1.0)),
                         known_recession=_radial(lambda r: r))


def _wiggly_doublewell(dim):
    if dim != 1:
        raise UnsupportedDimension("wiggly_doublewell is one-dimensional")

    def h(p):
        x = p[..., 0]
        return np.abs(np.abs(x) - 1.0) + 1.0 + 0.3 * np.sin(3.0 * x)

    return FunctionModel("wiggly_doublewell", "f2", 1, h, (0.5, 2.5))


def _square(dim):
    h = _radial(lambda r: r * r)
    return FunctionModel("square", "f2", dim, h, (1.0, 1.0), convex=True)


def _example3_f1(dim):
    h = _radial(lambda r: 2.0 - np.exp(-r * r))
    return FunctionModel("example3_f1", "f1", dim, h, (1.0, 2.0), minimum=1.0,
                         argmin=(0.0,) * dim)


def _f1_flat(dim):
    h = _radial(lambda r: 2.0 - np.exp(-np.maximum(r - 1.0, 0.0) ** 2))
    return FunctionModel("f1_flat", "f1", dim, h, (1.0, 2.0), minimum=1.0,
                         argmin=(0.0,) * dim)


def _f1_tilted(dim):
    shift = np.zeros(dim)
    shift[0] = 1.0
    h = lambda p: 3.0 - 2.0 * np.exp(-np.sum((p - shift) ** 2, axis=-1))
    return FunctionModel("f1_tilted", "f1", dim, h, (1.0, 3.0), minimum=1.0,
                         argmin=tuple(shift))


def _f1_scan(dim):
    # no closed-form minimum declared: exercised by the numeric scan
    h = _radial(lambda r: 1.5 + 0.5 * np.cos(np.pi * r) * np.exp(-0.1 * r * r))
    return FunctionModel("f1_scan", "f1", dim, h, (1.0, 2.0), scan_radius=6.0)


PRESETS: dict[str, Callable[[int], FunctionModel]] = {
    "abs": _abs,
    "area": _area,
    "scaled_abs": _scaled_abs,
    "aniso_abs": _aniso_abs,
    "max_abs_one": _max_abs_one,
    "doublewell_shifted": _doublewell_shifted,
    "wiggly_doublewell": _wiggly_doublewell,
    "square": _square,
    "example3_f1": _example3_f1,
    "f1_flat": _f1_flat,
    "f1_tilted": _f1_tilted,
    "f1_scan": _f1_scan,
}

PRESET_PATH_ENV = "RELAXKIT_PRESET_PATH"


def _user_preset_files():
    raw = os.environ.get(PRESET_PATH_ENV, "")
    files = {}
    for directory in filter(None, raw.split(os.pathsep)):
        for path in sorted(glob.glob(os.path.join(directory, "*.toml"))):
            files[os.path.splitext(os.path.basename(path))[0]] = path
    return files


def load_sampled_preset(path) -> FunctionModel:
    """Read a sampled one-dimensional preset document (see docs/formats.md)."""
    from .textio import read_toml

    doc = read_toml(path)
    try:
        name = doc.get("name") or os.path.splitext(os.path.basename(path))[0]
        grid = doc["grid"]
        return FunctionModel.from_samples(
            name, doc["role"], grid["nodes"], grid["values"],
            (float(doc["lower"]), float(doc["upper"])), convex=bool(doc.get("convex", False)))
    except KeyError as exc:
        raise PreconditionError(f"preset file {path}: missing field {exc.args[0]!r}") from None


def list_presets() -> list[str]:
    return sorted(set(PRESETS) | set(_user_preset_files()))


def get_preset(name: str, dim: int = 1) -> FunctionModel:
    """Look up a preset by name, then in the user preset directories."""
    if name in PRESETS:
        return PRESETS[name](dim)
    user = _user_preset_files()
    if name in user:
        model = load_sampled_preset(user[name])
        if dim != 1:
            raise UnsupportedDimension(f"user preset {name!r} is one-dimensional")
        return model
    raise KeyError(f"unknown preset {name!r}")
