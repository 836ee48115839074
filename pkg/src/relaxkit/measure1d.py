"""Vector-valued Radon measures on a closed interval.

A :class:`Measure1D` is the sum of three parts:

* atoms ``sum_i w_i delta_{x_i}``;
* an absolutely continuous density, piecewise constant on a uniform mesh
  with a power-of-two number of cells (no cells means density zero);
* a singular-continuous part approximated by a finite quadrature of
  ``(node, mass, unit direction)`` triples.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import RepresentationError
from .funclib import EnvelopeTable

_GAUSS3_X, _GAUSS3_W = np.polynomial.legendre.leggauss(3)


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _vec_rows(values, dim, count):
    arr = np.asarray(values, dtype=float)
    if count == 0:
        return np.zeros((0, dim))
    if arr.ndim == 1:
        arr = arr[:, None] if dim == 1 else arr[None, :]
    return arr.reshape(count, dim)


class Measure1D:
    """Radon measure on ``[alpha, beta]`` with values in ``R^dim``."""

    __slots__ = ("interval", "dim", "atom_x", "atom_w", "ac", "sing_x", "sing_m", "sing_dir")

    def __init__(self, interval, atoms=(), ac=None, singular=None, dim: Optional[int] = None):
        alpha, beta = (float(interval[0]), float(interval[1]))
        if not beta > alpha:
            raise RepresentationError("interval must satisfy alpha < beta")
        atoms = list(atoms)
        atom_x = np.array([a[0] for a in atoms], dtype=float)
        raw_w = [np.atleast_1d(np.asarray(a[1], dtype=float)) for a in atoms]

        if ac is not None:
            ac = np.asarray(ac, dtype=float)
            if ac.ndim == 1:
                ac = ac[:, None]
        if singular is None:
            sx, sm, sd = np.zeros(0), np.zeros(0), None
        else:
            sx, sm, sd = singular
            sx = np.atleast_1d(np.asarray(sx, dtype=float))
            sm = np.atleast_1d(np.asarray(sm, dtype=float))

        if dim is None:
            if raw_w:
                dim = raw_w[0].size
            elif ac is not None and ac.size:
                dim = ac.shape[1]
            elif sd is not None and np.size(sd):
                dim = np.atleast_2d(np.asarray(sd, dtype=float)).shape[-1] if np.ndim(sd) == 2 else 1
            else:
                dim = 1
        atom_w = _vec_rows(np.array(raw_w) if raw_w else [], dim, len(raw_w))
        if ac is None or ac.size == 0:
            ac = np.zeros((0, dim))
        if ac.shape[1] != dim:
            raise RepresentationError("ac density dimension mismatch")
        if ac.shape[0] and not _is_pow2(ac.shape[0]):
            raise RepresentationError("ac mesh must have a power-of-two number of cells")
        if sd is None:
            sd = np.zeros((0, dim))
        sd = _vec_rows(sd, dim, sx.size)
        # canonical order keeps equality independent of input order
        if sm.shape == sx.shape:
            order = np.argsort(sx, kind="stable")
            sx, sm, sd = sx[order], sm[order], sd[order]
        order = np.argsort(atom_x, kind="stable")
        atom_x, atom_w = atom_x[order], atom_w[order]

        object.__setattr__(self, "interval", (alpha, beta))
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "atom_x", _readonly(atom_x))
        object.__setattr__(self, "atom_w", _readonly(atom_w))
        object.__setattr__(self, "ac", _readonly(ac))
        object.__setattr__(self, "sing_x", _readonly(sx))
        object.__setattr__(self, "sing_m", _readonly(sm))
        object.__setattr__(self, "sing_dir", _readonly(sd))
        self._validate()

    def __setattr__(self, key, value):
        raise AttributeError("Measure1D is immutable")

    def _validate(self):
        a, b = self.interval
        x = self.atom_x
        if x.size:
            if np.any((x < a) | (x > b)):
                raise RepresentationError("atom outside the interval")
            if np.unique(x).size != x.size:
                raise RepresentationError("atom locations must be distinct")
            if np.any(np.all(self.atom_w == 0, axis=1)):
                raise RepresentationError("atom weights must be nonzero")
        s = self.sing_x
        if s.size:
            if self.sing_m.shape != s.shape:
                raise RepresentationError("singular nodes and masses differ in length")
            if np.any((s < a) | (s > b)):
                raise RepresentationError("singular node outside the interval")
            if np.unique(s).size != s.size:
                raise RepresentationError("singular nodes must be distinct")
            if np.any(self.sing_m < 0):
                raise RepresentationError("singular masses must be nonnegative")
            if np.any(np.abs(np.linalg.norm(self.sing_dir, axis=1) - 1.0) > 1e-9):
                raise RepresentationError("singular directions must be unit vectors")
            if x.size and np.intersect1d(x, s).size:
                raise RepresentationError("singular nodes must differ from atom locations")
        if not np.all(np.isfinite(self.ac)) or not np.all(np.isfinite(self.atom_w)):
            raise RepresentationError("measure data must be finite")

    # -- constructors ----------------------------------------------------

    @classmethod
    def zero(cls, interval, dim: int = 1):
        return cls(interval, dim=dim)

    @classmethod
    def dirac(cls, interval, x, weight=1.0):
        return cls(interval, atoms=[(x, weight)])

    @classmethod
    def from_density(cls, interval, values):
        return cls(interval, ac=values)

    @classmethod
    def from_function(cls, interval, func: Callable, cells: int = 256):
        """Cell averages (3-point Gauss) of ``func`` on a uniform mesh."""
        a, b = interval
        edges = np.linspace(a, b, cells + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1] - edges[0])
        vals = sum(w * np.asarray(func(mid + half * g), dtype=float)
                   for g, w in zip(_GAUSS3_X, _GAUSS3_W)) / 2.0
        return cls(interval, ac=vals)

    @classmethod
    def cantor(cls, interval=(0.0, 1.0), depth: int = 8, mass: float = 1.0, direction=1.0):
        x, m = cantor_quadrature(interval, depth, mass)
        d = np.atleast_1d(np.asarray(direction, dtype=float))
        d = d / np.linalg.norm(d)
        return cls(interval, singular=(x, m, np.tile(d, (x.size, 1))), dim=d.size)

    # -- geometry --------------------------------------------------------

    @property
    def alpha(self) -> float:
        return self.interval[0]

    @property
    def beta(self) -> float:
        return self.interval[1]

    @property
    def length(self) -> float:
        return self.interval[1] - self.interval[0]

    @property
    def cells(self) -> int:
        return self.ac.shape[0]

    @property
    def cell_edges(self) -> np.ndarray:
        return np.linspace(self.alpha, self.beta, self.cells + 1)

    @property
    def cell_width(self) -> float:
        return self.length / self.cells if self.cells else self.length

    @property
    def has_ac(self) -> bool:
        return self.cells > 0 and bool(np.any(self.ac != 0))

    @property
    def is_absolutely_continuous(self) -> bool:
        return self.atom_x.size == 0 and self.sing_x.size == 0

    # -- masses ----------------------------------------------------------

    @property
    def total_variation(self) -> float:
        tv = float(np.sum(np.linalg.norm(self.atom_w, axis=1)))
        if self.cells:
            tv += float(np.sum(np.linalg.norm(self.ac, axis=1)) * self.cell_width)
        return tv + float(np.sum(self.sing_m))

    def total_mass(self) -> np.ndarray:
        """``nu(closure of the interval)`` as a vector in ``R^dim``."""
        total = self.atom_w.sum(axis=0)
        if self.cells:
            total = total + self.ac.sum(axis=0) * self.cell_width
        return total + (self.sing_m[:, None] * self.sing_dir).sum(axis=0)

    def with_mesh(self, cells: int) -> "Measure1D":
        """Same measure with the density stored on at least ``cells`` cells."""
        if not _is_pow2(cells):
            raise RepresentationError("mesh size must be a power of two")
        if self.cells >= cells:
            return self
        if self.cells == 0:
            ac = np.zeros((cells, self.dim))
        else:
            ac = np.repeat(self.ac, cells // self.cells, axis=0)
        return Measure1D(self.interval, self._atom_list(), ac,
                         (self.sing_x, self.sing_m, self.sing_dir), dim=self.dim)

    def _atom_list(self):
        return list(zip(self.atom_x, self.atom_w))

    def replace(self, atoms=None, ac=None, singular=None) -> "Measure1D":
        return Measure1D(
            self.interval,
            self._atom_list() if atoms is None else atoms,
            self.ac if ac is None else ac,
            (self.sing_x, self.sing_m, self.sing_dir) if singular is None else singular,
            dim=self.dim)

    def __add__(self, other: "Measure1D") -> "Measure1D":
        if other.interval != self.interval or other.dim != self.dim:
            raise RepresentationError("measures live on different intervals")
        weights = {}
        for x, w in self._atom_list() + other._atom_list():
            weights[x] = weights.get(x, 0.0) + w
        atoms = [(x, w) for x, w in sorted(weights.items()) if np.any(w != 0)]
        n = max(self.cells, other.cells)
        if n:
            ac = self.with_mesh(n).ac + other.with_mesh(n).ac
        else:
            ac = None
        sing = {}
        for src in (self, other):
            for x, m, d in zip(src.sing_x, src.sing_m, src.sing_dir):
                prev = sing.get(x)
                vec = m * d + (prev if prev is not None else 0.0)
                sing[x] = vec
        xs = np.array(sorted(sing))
        vecs = np.array([sing[x] for x in xs]).reshape(-1, self.dim)
        ms = np.linalg.norm(vecs, axis=1)
        keep = ms > 0
        dirs = vecs[keep] / ms[keep, None]
        return Measure1D(self.interval, atoms, ac, (xs[keep], ms[keep], dirs), dim=self.dim)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Measure1D):
            return NotImplemented
        return (self.interval == other.interval and self.dim == other.dim
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("atom_x", "atom_w", "ac", "sing_x", "sing_m", "sing_dir")))

    __hash__ = None

    def __repr__(self) -> str:
        return (f"Measure1D(interval={self.interval}, dim={self.dim}, atoms={self.atom_x.size}, "
                f"cells={self.cells}, singular={self.sing_x.size}, |nu|={self.total_variation:.6g})")

    # -- serialization ---------------------------------------------------

    def to_document(self) -> dict:
        vec = (lambda a: a[:, 0]) if self.dim == 1 else (lambda a: a)
        return {
            "kind": "measure1d",
            "interval": list(self.interval),
            "dim": self.dim,
            "atoms": {"x": self.atom_x, "weight": vec(self.atom_w)},
            "ac": {"values": vec(self.ac)},
            "singular": {"x": self.sing_x, "mass": self.sing_m, "direction": vec(self.sing_dir)},
        }

    @classmethod
    def from_document(cls, doc: dict) -> "Measure1D":
        dim = int(doc.get("dim", 1))
        atoms_doc = doc.get("atoms", {})
        xs = atoms_doc.get("x", [])
        ws = _vec_rows(atoms_doc.get("weight", []), dim, len(xs))
        ac = np.asarray(doc.get("ac", {}).get("values", []), dtype=float)
        ac = _vec_rows(ac, dim, ac.shape[0] if ac.size else 0)
        sing = doc.get("singular", {})
        sx = np.asarray(sing.get("x", []), dtype=float)
        sm = np.asarray(sing.get("mass", []), dtype=float)
        sd = _vec_rows(sing.get("direction", []), dim, sx.size)
        return cls(doc["interval"], list(zip(xs, ws)), ac, (sx, sm, sd), dim=dim)


def cantor_quadrature(interval=(0.0, 1.0), depth: int = 8, mass: float = 1.0):
    """Nodes and masses of the depth-``depth`` middle-thirds Cantor measure.

    Each of the ``2**depth`` surviving intervals carries ``mass / 2**depth``
    at its midpoint.
    """
    starts = np.zeros(1)
    for level in range(1, depth + 1):
        starts = np.concatenate([starts, starts + 2.0 / 3.0 ** level])
    width = 3.0 ** -depth
    nodes = np.sort(starts) + 0.5 * width
    a, b = interval
    x = a + (b - a) * nodes
    m = np.full(x.size, mass / x.size)
    return x, m


# ---------------------------------------------------------------------------
# decompositions


def lebesgue_decompose(nu: Measure1D) -> tuple[Measure1D, Measure1D]:
    """Split into the absolutely continuous part and the singular rest."""
    nu_a = Measure1D(nu.interval, ac=nu.ac, dim=nu.dim)
    nu_s = Measure1D(nu.interval, nu._atom_list(), None,
                     (nu.sing_x, nu.sing_m, nu.sing_dir), dim=nu.dim)
    return nu_a, nu_s


class AtomicSplit(NamedTuple):
    atomic: Measure1D
    diffuse: Measure1D
    support: tuple


def atomic_decompose(nu: Measure1D) -> AtomicSplit:
    """Split into the atomic part and the diffuse rest; ``support`` is S^0."""
    atomic = Measure1D(nu.interval, nu._atom_list(), dim=nu.dim)
    diffuse = Measure1D(nu.interval, (), nu.ac, (nu.sing_x, nu.sing_m, nu.sing_dir), dim=nu.dim)
    return AtomicSplit(atomic, diffuse, tuple(float(x) for x in nu.atom_x))


def split_singular_by(nu: Measure1D, points) -> tuple[Measure1D, Measure1D]:
    """Separate the singular part of ``nu`` charging ``points`` from the rest.

    With ``points`` the jump and Cantor nodes of some ``u`` this yields the
    pieces of ``nu^s`` concentrated on the singular support of ``Du`` and
    its complement.
    """
    pts = np.asarray(sorted(points), dtype=float)
    atom_on = np.isin(nu.atom_x, pts)
    sing_on = np.isin(nu.sing_x, pts)
    on = Measure1D(nu.interval, [(x, w) for x, w, k in zip(nu.atom_x, nu.atom_w, atom_on) if k],
                   None, (nu.sing_x[sing_on], nu.sing_m[sing_on], nu.sing_dir[sing_on]), dim=nu.dim)
    off = Measure1D(nu.interval, [(x, w) for x, w, k in zip(nu.atom_x, nu.atom_w, atom_on) if not k],
                    None, (nu.sing_x[~sing_on], nu.sing_m[~sing_on], nu.sing_dir[~sing_on]),
                    dim=nu.dim)
    return on, off


# ---------------------------------------------------------------------------
# integration


def _sample(func, x):
    # constant test functions may return scalars
    return np.broadcast_to(np.asarray(func(x), dtype=float), np.shape(x))


def _as_eval(arr: np.ndarray, dim: int) -> np.ndarray:
    return arr[..., 0] if dim == 1 else arr


def nonlinear_transform(e: EnvelopeTable, nu: Measure1D, A=None,
                        weight: Optional[Callable] = None) -> float:
    """``int_A f**(dnu^a/dx) dx + int_A (f**)^inf(dnu^s/d|nu^s|) d|nu^s|``.

    The density part uses the midpoint rule on the measure's mesh (one cell
    spanning the interval when there is no density).  ``weight`` is an
    optional scalar function of ``x`` multiplying the integrand; it is
    sampled at midpoints of the cells' overlap with ``A`` and at atoms and
    singular nodes.  ``A`` is a closed subinterval, the whole interval by
    default.
    """
    if e.dim != nu.dim:
        raise ValueError(f"envelope dimension {e.dim} differs from measure dimension {nu.dim}")
    lo, hi = nu.interval if A is None else (float(A[0]), float(A[1]))
    lo, hi = max(lo, nu.alpha), min(hi, nu.beta)
    total = 0.0
    if hi > lo:
        edges = nu.cell_edges if nu.cells else np.array(nu.interval)
        dens = nu.ac if nu.cells else np.zeros((1, nu.dim))
        left = np.maximum(edges[:-1], lo)
        right = np.minimum(edges[1:], hi)
        overlap = np.maximum(right - left, 0.0)
        vals = np.asarray(e(_as_eval(dens, nu.dim)), dtype=float)
        if weight is not None:
            vals = vals * _sample(weight, 0.5 * (left + right))
        total += float(np.sum(vals * overlap))

    in_a = (nu.atom_x >= lo) & (nu.atom_x <= hi)
    if np.any(in_a):
        vals = np.asarray(e.recession(_as_eval(nu.atom_w[in_a], nu.dim)), dtype=float)
        if weight is not None:
            vals = vals * _sample(weight, nu.atom_x[in_a])
        total += float(np.sum(vals))
    in_s = (nu.sing_x >= lo) & (nu.sing_x <= hi)
    if np.any(in_s):
        vals = nu.sing_m[in_s] * np.asarray(
            e.recession(_as_eval(nu.sing_dir[in_s], nu.dim)), dtype=float)
        if weight is not None:
            vals = vals * _sample(weight, nu.sing_x[in_s])
        total += float(np.sum(vals))
    return total


def pair(nu: Measure1D, phi: Callable):
    """Weak pairing ``int phi dnu`` for a continuous scalar ``phi``.

    Returns a float when ``dim == 1`` and a vector otherwise.
    """
    out = np.zeros(nu.dim)
    if nu.atom_x.size:
        out += _sample(phi, nu.atom_x) @ nu.atom_w
    if nu.cells:
        edges = nu.cell_edges
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * nu.cell_width
        avg = sum(w * _sample(phi, mid + half * g)
                  for g, w in zip(_GAUSS3_X, _GAUSS3_W)) * half
        out += avg @ nu.ac
    if nu.sing_x.size:
        out += (_sample(phi, nu.sing_x) * nu.sing_m) @ nu.sing_dir
    return float(out[0]) if nu.dim == 1 else out


def total_variation(nu: Measure1D) -> float:
    return nu.total_variation
