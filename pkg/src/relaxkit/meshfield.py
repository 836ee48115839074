"""Fields and measures on rectangular meshes in two or three dimensions.

These are the inputs of the n >= 2 evaluator.  A :class:`NodalField` holds
a multilinear finite-element function (nodal values) with optional face
jump records, and a :class:`NdMeasure` holds cell densities plus atoms and
a singular quadrature.
"""

from __future__ import annotations

from itertools import product
from typing import Optional

import numpy as np

from .errors import RepresentationError, UnsupportedDimension


class RectMesh:
    """Uniform tensor mesh of ``prod(shape)`` cells on a box."""

    def __init__(self, bounds, shape):
        bounds = np.asarray(bounds, dtype=float)
        shape = tuple(int(s) for s in shape)
        if bounds.ndim != 2 or bounds.shape[1] != 2 or bounds.shape[0] != len(shape):
            raise RepresentationError("bounds must be one (lo, hi) pair per axis")
        if len(shape) not in (2, 3):
            raise UnsupportedDimension("rectangular meshes support n = 2 or 3")
        if np.any(bounds[:, 1] <= bounds[:, 0]) or min(shape) < 1:
            raise RepresentationError("degenerate mesh")
        self.bounds = bounds
        self.shape = shape

    @classmethod
    def unit(cls, n: int = 2, cells: int = 16) -> "RectMesh":
        return cls([(0.0, 1.0)] * n, (cells,) * n)

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> np.ndarray:
        return (self.bounds[:, 1] - self.bounds[:, 0]) / np.array(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.bounds[:, 1] - self.bounds[:, 0]))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, s + 1) for (lo, hi), s in zip(self.bounds, self.shape)]

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def centers(self) -> np.ndarray:
        mids = [0.5 * (a[1:] + a[:-1]) for a in self.axes()]
        return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)

    def locate(self, x) -> tuple:
        """Index of the cell containing ``x`` (closed on the upper side at the boundary)."""
        x = np.asarray(x, dtype=float)
        rel = (x - self.bounds[:, 0]) / self.h
        if np.any(rel < 0) or np.any(rel > np.array(self.shape)):
            raise RepresentationError(f"point {x} outside the mesh")
        return tuple(np.minimum(np.floor(rel).astype(int), np.array(self.shape) - 1))

    def __eq__(self, other):
        return (isinstance(other, RectMesh) and self.shape == other.shape
                and np.array_equal(self.bounds, other.bounds))

    __hash__ = None

    def to_document(self) -> dict:
        return {"bounds": self.bounds, "shape": list(self.shape)}

    @classmethod
    def from_document(cls, doc) -> "RectMesh":
        return cls(doc["bounds"], doc["shape"])


class NodalField:
    """Multilinear field ``u: box -> R^m`` given by nodal values.

    ``face_jumps`` lists ``(area, jump, normal)`` records for jump surfaces
    that the nodal representation does not resolve; ``jump`` is in
    ``R^m`` and ``normal`` a unit vector in ``R^n``.
    """

    def __init__(self, mesh: RectMesh, values, face_jumps=()):
        values = np.asarray(values, dtype=float)
        node_shape = tuple(s + 1 for s in mesh.shape)
        if values.shape == node_shape:
            values = values[..., None]
        if values.shape[:-1] != node_shape:
            raise RepresentationError(f"nodal values need shape {node_shape} (+ (m,))")
        self.mesh = mesh
        self.values = values
        jumps = []
        for area, jump, normal in face_jumps:
            jump = np.atleast_1d(np.asarray(jump, dtype=float))
            normal = np.asarray(normal, dtype=float)
            if jump.size != values.shape[-1] or normal.size != mesh.n:
                raise RepresentationError("face jump has wrong dimensions")
            if abs(np.linalg.norm(normal) - 1.0) > 1e-9 or area < 0:
                raise RepresentationError("face jump needs a unit normal and nonnegative area")
            jumps.append((float(area), jump, normal))
        self.face_jumps = jumps

    @classmethod
    def from_function(cls, mesh: RectMesh, func, face_jumps=()) -> "NodalField":
        return cls(mesh, func(mesh.nodes()), face_jumps)

    @classmethod
    def constant(cls, mesh: RectMesh, value) -> "NodalField":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        shape = tuple(s + 1 for s in mesh.shape) + (value.size,)
        return cls(mesh, np.broadcast_to(value, shape).copy())

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    def _corners(self):
        n = self.mesh.n
        for offs in product((0, 1), repeat=n):
            idx = tuple(slice(o, o + s) for o, s in zip(offs, self.mesh.shape))
            yield offs, self.values[idx]

    def cell_values(self) -> np.ndarray:
        """Value at cell centers, shape ``mesh.shape + (m,)``."""
        total = sum(v for _, v in self._corners())
        return total / 2 ** self.mesh.n

    def cell_gradients(self) -> np.ndarray:
        """Gradient at cell centers, shape ``mesh.shape + (m, n)``."""
        n = self.mesh.n
        grads = []
        for k in range(n):
            acc = 0.0
            for offs, v in self._corners():
                acc = acc + (1.0 if offs[k] else -1.0) * v
            grads.append(acc / (2 ** (n - 1) * self.mesh.h[k]))
        return np.stack(grads, axis=-1)

    def evaluate(self, x) -> np.ndarray:
        """Multilinear interpolation at points ``x`` of shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        mesh = self.mesh
        rel = (x - mesh.bounds[:, 0]) / mesh.h
        idx = np.clip(np.floor(rel).astype(int), 0, np.array(mesh.shape) - 1)
        t = rel - idx
        out = 0.0
        for offs in product((0, 1), repeat=mesh.n):
            w = np.ones(x.shape[:-1])
            for k, o in enumerate(offs):
                w = w * (t[..., k] if o else 1.0 - t[..., k])
            node = tuple(idx[..., k] + o for k, o in enumerate(offs))
            out = out + w[..., None] * self.values[node]
        return out

    def gradient(self, x) -> np.ndarray:
        """Gradient of the multilinear interpolant, shape ``x.shape[:-1] + (m, n)``."""
        x = np.asarray(x, dtype=float)
        mesh = self.mesh
        rel = (x - mesh.bounds[:, 0]) / mesh.h
        idx = np.clip(np.floor(rel).astype(int), 0, np.array(mesh.shape) - 1)
        t = rel - idx
        grads = []
        for k in range(mesh.n):
            acc = 0.0
            for offs in product((0, 1), repeat=mesh.n):
                w = np.full(x.shape[:-1], 1.0 / mesh.h[k])
                for q, o in enumerate(offs):
                    if q == k:
                        w = w * (1.0 if o else -1.0)
                    else:
                        w = w * (t[..., q] if o else 1.0 - t[..., q])
                node = tuple(idx[..., q] + o for q, o in enumerate(offs))
                acc = acc + w[..., None] * self.values[node]
            grads.append(acc)
        return np.stack(grads, axis=-1)

    def to_document(self) -> dict:
        return {
            "kind": "nodal_field",
            "mesh": self.mesh.to_document(),
            "m": self.m,
            "values": self.values.reshape(-1),
            "face_jumps": {"area": [j[0] for j in self.face_jumps],
                           "jump": [j[1] for j in self.face_jumps],
                           "normal": [j[2] for j in self.face_jumps]},
        }

    @classmethod
    def from_document(cls, doc) -> "NodalField":
        mesh = RectMesh.from_document(doc["mesh"])
        m = int(doc.get("m", 1))
        shape = tuple(s + 1 for s in mesh.shape) + (m,)
        vals = np.asarray(doc["values"], dtype=float).reshape(shape)
        fj = doc.get("face_jumps", {})
        jumps = list(zip(fj.get("area", []), fj.get("jump", []), fj.get("normal", [])))
        return cls(mesh, vals, jumps)


class NdMeasure:
    """Measure with values in ``R^d`` on the closure of a mesh box."""

    def __init__(self, mesh: RectMesh, ac=None, atoms=(), singular=(), dim: Optional[int] = None):
        self.mesh = mesh
        if ac is not None:
            ac = np.asarray(ac, dtype=float)
            if ac.shape == mesh.shape:
                ac = ac[..., None]
            if ac.shape[:-1] != mesh.shape:
                raise RepresentationError("cell densities must match the mesh")
        if dim is None:
            if ac is not None:
                dim = ac.shape[-1]
            elif atoms:
                dim = np.atleast_1d(atoms[0][1]).size
            elif singular:
                dim = np.atleast_1d(singular[0][2]).size
            else:
                dim = 1
        self.dim = int(dim)
        self.ac = np.zeros(mesh.shape + (self.dim,)) if ac is None else ac
        if self.ac.shape[-1] != self.dim:
            raise RepresentationError("density dimension mismatch")
        lo, hi = mesh.bounds[:, 0], mesh.bounds[:, 1]
        self.atoms = []
        for x, w in atoms:
            x = np.asarray(x, dtype=float)
            w = np.atleast_1d(np.asarray(w, dtype=float))
            if x.size != mesh.n or np.any(x < lo) or np.any(x > hi):
                raise RepresentationError(f"atom at {x} outside the closed box")
            if w.size != self.dim or not np.any(w):
                raise RepresentationError("atom weight must be a nonzero vector of the measure dimension")
            self.atoms.append((x, w))
        self.singular = []
        for x, mass, direction in singular:
            x = np.asarray(x, dtype=float)
            direction = np.atleast_1d(np.asarray(direction, dtype=float))
            if mass < 0 or abs(np.linalg.norm(direction) - 1.0) > 1e-9:
                raise RepresentationError("singular nodes need nonnegative mass and unit direction")
            self.singular.append((x, float(mass), direction))

    @property
    def is_absolutely_continuous(self) -> bool:
        return not self.atoms and not self.singular

    def total_mass(self) -> np.ndarray:
        total = self.ac.reshape(-1, self.dim).sum(axis=0) * self.mesh.cell_volume
        for _, w in self.atoms:
            total = total + w
        for _, mass, d in self.singular:
            total = total + mass * d
        return total

    @property
    def total_variation(self) -> float:
        tv = float(np.sum(np.linalg.norm(self.ac, axis=-1)) * self.mesh.cell_volume)
        tv += sum(float(np.linalg.norm(w)) for _, w in self.atoms)
        return tv + sum(m for _, m, _ in self.singular)

    def singular_part(self) -> "NdMeasure":
        return NdMeasure(self.mesh, None, self.atoms, self.singular, dim=self.dim)

    def to_document(self) -> dict:
        return {
            "kind": "nd_measure",
            "mesh": self.mesh.to_document(),
            "dim": self.dim,
            "ac": {"values": self.ac.reshape(-1)},
            "atoms": {"x": [a[0] for a in self.atoms], "weight": [a[1] for a in self.atoms]},
            "singular": {"x": [s[0] for s in self.singular], "mass": [s[1] for s in self.singular],
                         "direction": [s[2] for s in self.singular]},
        }

    @classmethod
    def from_document(cls, doc) -> "NdMeasure":
        mesh = RectMesh.from_document(doc["mesh"])
        dim = int(doc.get("dim", 1))
        raw = np.asarray(doc.get("ac", {}).get("values", []), dtype=float)
        ac = raw.reshape(mesh.shape + (dim,)) if raw.size else None
        at = doc.get("atoms", {})
        sg = doc.get("singular", {})
        return cls(mesh, ac, list(zip(at.get("x", []), at.get("weight", []))),
                   list(zip(sg.get("x", []), sg.get("mass", []), sg.get("direction", []))), dim=dim)
