"""BV functions on an interval stored through their derivative.

``u = anchor + int_alpha^x slope + sum of jumps left of x + Cantor part``,
so one-sided traces are exact and ``Du`` is available as a
:class:`~relaxkit.measure1d.Measure1D` without any mesh error.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import DomainError, RepresentationError
from .measure1d import Measure1D, cantor_quadrature, _is_pow2, _readonly, _vec_rows


class BV1D:
    """BV function ``(alpha, beta) -> R^m``.

    Parameters
    ----------
    interval : (float, float)
    anchor : array_like
        The right trace ``u(alpha+)``.
    slope : array_like, optional
        Approximate derivative ``u'`` on a uniform power-of-two mesh,
        shape ``(N,)`` or ``(N, m)``.
    jumps : sequence of (x, left, right), optional
        Jump points with one-sided traces ``u(x-)`` and ``u(x+)``.  The
        traces must agree with the reconstruction from the anchor.
    cantor : (nodes, masses, directions), optional
        Quadrature of the Cantor part of ``Du``.
    """

    __slots__ = ("interval", "dim", "anchor", "slope", "jump_x", "jump_left", "jump_right",
                 "cantor_x", "cantor_m", "cantor_dir")

    def __init__(self, interval, anchor, slope=None, jumps=(), cantor=None, check: bool = True):
        alpha, beta = float(interval[0]), float(interval[1])
        if not beta > alpha:
            raise RepresentationError("interval must satisfy alpha < beta")
        anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
        m = anchor.size
        if slope is None:
            slope = np.zeros((0, m))
        slope = np.asarray(slope, dtype=float)
        if slope.ndim == 1:
            slope = slope[:, None] if m == 1 else slope[None, :]
        if slope.size == 0:
            slope = np.zeros((0, m))
        if slope.shape[1] != m:
            raise RepresentationError("slope dimension differs from anchor dimension")
        if slope.shape[0] and not _is_pow2(slope.shape[0]):
            raise RepresentationError("slope mesh must have a power-of-two number of cells")
        jumps = sorted(jumps, key=lambda j: j[0])
        jx = np.array([j[0] for j in jumps], dtype=float)
        jl = _vec_rows(np.array([np.atleast_1d(j[1]) for j in jumps]) if jumps else [], m, len(jumps))
        jr = _vec_rows(np.array([np.atleast_1d(j[2]) for j in jumps]) if jumps else [], m, len(jumps))
        if cantor is None:
            cx, cm, cd = np.zeros(0), np.zeros(0), np.zeros((0, m))
        else:
            cx, cm, cd = cantor
            cx = np.atleast_1d(np.asarray(cx, dtype=float))
            cm = np.atleast_1d(np.asarray(cm, dtype=float))
            cd = _vec_rows(cd, m, cx.size)
            order = np.argsort(cx)
            cx, cm, cd = cx[order], cm[order], cd[order]
        for name, val in (("interval", (alpha, beta)), ("dim", m), ("anchor", _readonly(anchor)),
                          ("slope", _readonly(slope)), ("jump_x", _readonly(jx)),
                          ("jump_left", _readonly(jl)), ("jump_right", _readonly(jr)),
                          ("cantor_x", _readonly(cx)), ("cantor_m", _readonly(cm)),
                          ("cantor_dir", _readonly(cd))):
            object.__setattr__(self, name, val)
        self._validate(check)

    def __setattr__(self, key, value):
        raise AttributeError("BV1D is immutable")

    def _validate(self, check_traces):
        a, b = self.interval
        x = self.jump_x
        if x.size:
            if np.any((x <= a) | (x >= b)):
                raise RepresentationError("jump locations must lie strictly inside the interval")
            if np.unique(x).size != x.size:
                raise RepresentationError("jump locations must be distinct")
            if np.any(np.all(self.jump_left == self.jump_right, axis=1)):
                raise RepresentationError("a jump needs different one-sided traces")
        if self.cantor_x.size:
            if np.any((self.cantor_x <= a) | (self.cantor_x >= b)):
                raise RepresentationError("Cantor nodes must lie inside the interval")
            if np.any(self.cantor_m < 0):
                raise RepresentationError("Cantor masses must be nonnegative")
            if x.size and np.intersect1d(x, self.cantor_x).size:
                raise RepresentationError("Cantor nodes must differ from jump points")
        if check_traces and x.size:
            heights = self.jump_right - self.jump_left
            for i, xi in enumerate(x):
                pred = self._continuous_part(xi, strict=True) + heights[:i].sum(axis=0)
                if not np.allclose(pred, self.jump_left[i], rtol=1e-9, atol=1e-9):
                    raise RepresentationError(
                        f"left trace at x={xi:g} disagrees with the reconstruction")

    # -- constructors ----------------------------------------------------

    @classmethod
    def build(cls, interval, anchor=0.0, slope=None, jumps=(), cantor=None) -> "BV1D":
        """Create from jump heights ``[(x, u(x+) - u(x-)), ...]``; traces are derived."""
        proto = cls(interval, anchor, slope, (), cantor)
        out = []
        acc = np.zeros(proto.dim)
        for x, h in sorted(jumps, key=lambda j: j[0]):
            left = proto._continuous_part(float(x), strict=True) + acc
            h = np.atleast_1d(np.asarray(h, dtype=float))
            out.append((float(x), left, left + h))
            acc = acc + h
        return cls(interval, anchor, slope, out, cantor)

    @classmethod
    def constant(cls, interval, value) -> "BV1D":
        return cls(interval, value)

    @classmethod
    def step(cls, interval, x, height, anchor=0.0) -> "BV1D":
        return cls.build(interval, anchor, jumps=[(x, height)])

    @classmethod
    def staircase(cls, interval=(0.0, 1.0), depth: int = 8, height: float = 1.0) -> "BV1D":
        """Depth-``depth`` Cantor staircase rising by ``height``."""
        x, m = cantor_quadrature(interval, depth, abs(height))
        d = np.full((x.size, 1), np.sign(height) if height else 1.0)
        return cls(interval, 0.0, cantor=(x, m, d))

    @classmethod
    def from_slope_function(cls, interval, func, anchor=0.0, cells: int = 256) -> "BV1D":
        nu = Measure1D.from_function(interval, func, cells)
        return cls(interval, anchor, nu.ac)

    # -- geometry --------------------------------------------------------

    @property
    def alpha(self) -> float:
        return self.interval[0]

    @property
    def beta(self) -> float:
        return self.interval[1]

    @property
    def length(self) -> float:
        return self.beta - self.alpha

    @property
    def cells(self) -> int:
        return self.slope.shape[0]

    @property
    def cell_edges(self) -> np.ndarray:
        return np.linspace(self.alpha, self.beta, self.cells + 1)

    @property
    def is_sobolev(self) -> bool:
        """True when ``Du`` has no jump and no Cantor part (``u`` in ``W^{1,1}``)."""
        return self.jump_x.size == 0 and self.cantor_x.size == 0

    @property
    def jump_heights(self) -> np.ndarray:
        return self.jump_right - self.jump_left

    def _slope_integral(self, x) -> np.ndarray:
        # exact integral of the piecewise-constant slope from alpha to x
        x = np.asarray(x, dtype=float)
        if self.cells == 0:
            return np.zeros(x.shape + (self.dim,))
        h = self.length / self.cells
        cum = np.vstack([np.zeros((1, self.dim)), np.cumsum(self.slope, axis=0) * h])
        pos = np.clip((x - self.alpha) / h, 0.0, self.cells)
        k = np.minimum(np.floor(pos).astype(int), self.cells - 1)
        frac = (pos - k)[..., None]
        return cum[k] + frac * self.slope[k] * h

    def _continuous_part(self, x, strict: bool) -> np.ndarray:
        """anchor + slope integral + Cantor nodes left of ``x`` (``<`` if strict)."""
        x = np.asarray(x, dtype=float)
        val = self.anchor + self._slope_integral(x)
        if self.cantor_x.size:
            side = "left" if strict else "right"
            cum = np.vstack([np.zeros((1, self.dim)),
                             np.cumsum(self.cantor_m[:, None] * self.cantor_dir, axis=0)])
            idx = np.searchsorted(self.cantor_x, x, side=side)
            val = val + cum[idx]
        return val

    def _jump_sum(self, x, strict: bool) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.jump_x.size:
            return np.zeros(x.shape + (self.dim,))
        cum = np.vstack([np.zeros((1, self.dim)), np.cumsum(self.jump_heights, axis=0)])
        idx = np.searchsorted(self.jump_x, x, side="left" if strict else "right")
        return cum[idx]

    def trace(self, x: float, side: str) -> np.ndarray:
        return trace(self, x, side)

    def value(self, x) -> np.ndarray:
        """Precise representative: average of the one-sided limits.

        Vectorized over ``x``; output shape ``x.shape + (m,)``.
        """
        x = np.asarray(x, dtype=float)
        if np.any((x < self.alpha) | (x > self.beta)):
            raise DomainError("point outside the interval")
        left = self._continuous_part(x, True) + self._jump_sum(x, True)
        right = self._continuous_part(x, False) + self._jump_sum(x, False)
        return 0.5 * (left + right)

    def scalar_value(self, x) -> np.ndarray:
        """``value`` for ``m == 1`` without the trailing axis."""
        return self.value(x)[..., 0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BV1D):
            return NotImplemented
        return (self.interval == other.interval and self.dim == other.dim
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("anchor", "slope", "jump_x", "jump_left", "jump_right",
                                  "cantor_x", "cantor_m", "cantor_dir")))

    __hash__ = None

    def __repr__(self) -> str:
        return (f"BV1D(interval={self.interval}, m={self.dim}, cells={self.cells}, "
                f"jumps={self.jump_x.size}, cantor={self.cantor_x.size})")

    # -- serialization ---------------------------------------------------

    def to_document(self) -> dict:
        vec = (lambda a: a[:, 0]) if self.dim == 1 else (lambda a: a)
        return {
            "kind": "bv1d",
            "interval": list(self.interval),
            "dim": self.dim,
            "anchor": {"value": self.anchor},
            "ac": {"values": vec(self.slope)},
            "jumps": {"x": self.jump_x, "left": vec(self.jump_left), "right": vec(self.jump_right)},
            "singular": {"x": self.cantor_x, "mass": self.cantor_m,
                         "direction": vec(self.cantor_dir)},
        }

    @classmethod
    def from_document(cls, doc: dict) -> "BV1D":
        m = int(doc.get("dim", 1))
        anchor = doc.get("anchor", {}).get("value", [0.0] * m)
        slope = np.asarray(doc.get("ac", {}).get("values", []), dtype=float)
        slope = _vec_rows(slope, m, slope.shape[0] if slope.size else 0)
        jd = doc.get("jumps", {})
        jx = jd.get("x", [])
        jl = _vec_rows(jd.get("left", []), m, len(jx))
        jr = _vec_rows(jd.get("right", []), m, len(jx))
        sing = doc.get("singular", {})
        cx = np.asarray(sing.get("x", []), dtype=float)
        cantor = None
        if cx.size:
            cantor = (cx, np.asarray(sing.get("mass", []), dtype=float),
                      _vec_rows(sing.get("direction", []), m, cx.size))
        return cls(doc["interval"], anchor, slope, list(zip(jx, jl, jr)), cantor)


def derivative(u: BV1D) -> Measure1D:
    """``Du`` as a measure: slope density, jump atoms and Cantor quadrature."""
    atoms = list(zip(u.jump_x, u.jump_heights))
    return Measure1D(u.interval, atoms, u.slope if u.cells else None,
                     (u.cantor_x, u.cantor_m, u.cantor_dir), dim=u.dim)


def trace(u: BV1D, x: float, side: str) -> np.ndarray:
    """One-sided limit ``u(x-)`` (``side="left"``) or ``u(x+)`` (``"right"``)."""
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    x = float(x)
    a, b = u.interval
    if side == "left" and not (a < x <= b):
        raise DomainError(f"left trace needs alpha < x <= beta, got x={x}")
    if side == "right" and not (a <= x < b):
        raise DomainError(f"right trace needs alpha <= x < beta, got x={x}")
    strict = side == "left"
    return u._continuous_part(x, strict) + u._jump_sum(x, strict)


def total_variation(u: BV1D) -> float:
    """``|Du|(alpha, beta)``."""
    tv = float(np.sum(np.linalg.norm(u.jump_heights, axis=1))) if u.jump_x.size else 0.0
    if u.cells:
        tv += float(np.sum(np.linalg.norm(u.slope, axis=1)) * u.length / u.cells)
    return tv + float(np.sum(u.cantor_m))


def theta_mass(u: BV1D, v: Optional[Measure1D] = None) -> float:
    """Diagnostic ``theta = L^1 + |v| + |Du|`` of the whole interval."""
    return u.length + total_variation(u) + (v.total_variation if v is not None else 0.0)
