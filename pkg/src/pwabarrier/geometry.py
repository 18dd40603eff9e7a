"""Bounded convex polytopes in facet (H) and vertex (V) form.

Everything here works in floating point with an absolute tolerance that
defaults to ``GEOM_TOL``.  Cells of a partition are small and low
dimensional, so the heavy lifting is delegated to qhull (through
``scipy.spatial``) and to HiGHS for the few LPs that are needed.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError, cKDTree

from .exceptions import (
    DegenerateInput,
    DegeneratePolytope,
    DimensionMismatch,
    EmptyPolytope,
    UnboundedPolytope,
)

GEOM_TOL = 1e-9

__all__ = [
    "GEOM_TOL",
    "HPolytope",
    "VPolytope",
    "Edge",
    "Simplex",
    "vertices_of",
    "hrep_of",
    "contains",
    "delaunay",
    "edges_of",
    "chebyshev_ball",
    "merge_points",
    "simplex_volume",
    "sample_points",
]


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class HPolytope:
    """The region ``{x : E x + e >= 0}``.

    Rows are kept exactly as given; :func:`hrep_of` produces unit-norm rows.
    """

    __slots__ = ("E", "e")

    def __init__(self, E, e):
        E = np.asarray(E, dtype=float)
        if E.ndim == 1:
            E = E.reshape(-1, 1)
        e = np.asarray(e, dtype=float).ravel()
        if E.ndim != 2 or E.shape[0] != e.shape[0]:
            raise DimensionMismatch(
                f"E has shape {E.shape} but e has {e.shape[0]} entries"
            )
        if not (np.all(np.isfinite(E)) and np.all(np.isfinite(e))):
            raise ValueError("H-representation contains non-finite entries")
        self.E = _readonly(E)
        self.e = _readonly(e)

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    @property
    def n_facets(self) -> int:
        return self.E.shape[0]

    def slack(self, x):
        """``E x + e`` for one point (shape ``(n,)``) or a batch ``(k, n)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"point has dimension {x.shape[-1]}, polytope {self.dim}")
        return x @ self.E.T + self.e

    def contains(self, x, tol: float = GEOM_TOL):
        s = self.slack(x)
        return np.all(s >= -tol, axis=-1)

    def __repr__(self):
        return f"HPolytope(dim={self.dim}, n_facets={self.n_facets})"


class VPolytope:
    """Convex hull of a finite, irredundant vertex list.

    Duplicate points (within ``tol``) and points that are not extreme are
    dropped at construction so that every vertex is a genuine 0-face.
    """

    __slots__ = ("vertices", "_volume")

    def __init__(self, vertices, tol: float = GEOM_TOL, check: bool = True):
        V = np.asarray(vertices, dtype=float)
        if V.ndim == 1:
            V = V.reshape(-1, 1)
        if not np.all(np.isfinite(V)):
            raise ValueError("vertex list contains non-finite entries")
        if check:
            V = _irredundant(V, tol)
        self.vertices = _readonly(V)
        self._volume = None

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def is_simplex(self) -> bool:
        return self.n_vertices == self.dim + 1

    @property
    def volume(self) -> float:
        if self._volume is None:
            self._volume = _hull_volume(self.vertices)
        return self._volume

    @property
    def centroid(self):
        return self.vertices.mean(axis=0)

    def __len__(self):
        return self.n_vertices

    def __repr__(self):
        return f"VPolytope(dim={self.dim}, n_vertices={self.n_vertices})"


@dataclass(frozen=True)
class Edge:
    """A 1-face of a cell, stored as indices into the owner's vertex list."""

    endpoints: tuple
    index: tuple
    owner: Optional[int] = None


@dataclass(frozen=True)
class Simplex:
    """``n + 1`` affinely independent points; ``indices`` refer to the input of
    :func:`delaunay`."""

    indices: tuple
    vertices: np.ndarray

    @property
    def volume(self) -> float:
        return simplex_volume(self.vertices)


def simplex_volume(V) -> float:
    V = np.asarray(V, dtype=float)
    n = V.shape[1]
    D = V[1:] - V[0]
    return abs(np.linalg.det(D)) / math.factorial(n)


def _affine_rank(V, tol=GEOM_TOL) -> int:
    if V.shape[0] < 2:
        return 0
    D = V[1:] - V[0]
    s = np.linalg.svd(D, compute_uv=False)
    scale = max(1.0, float(np.abs(V).max()))
    return int(np.sum(s > tol * scale))


def merge_points(points, radius: float = GEOM_TOL):
    """Merge points closer than ``radius``.

    Returns ``(unique, inverse)`` with ``points[i] ~ unique[inverse[i]]``; the
    representative of each cluster is its first occurrence, so the result is
    deterministic for a fixed input order.
    """
    P = np.asarray(points, dtype=float)
    k = P.shape[0]
    parent = np.arange(k)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if k > 1 and radius > 0:
        for i, j in cKDTree(P).query_pairs(radius):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(k)], dtype=int)
    first, inverse = np.unique(roots, return_inverse=True)
    return P[first], inverse


def _irredundant(V, tol):
    n = V.shape[1]
    V, _ = merge_points(V, tol)
    if n == 1:
        if V.shape[0] < 2:
            raise DegenerateInput("an interval needs two distinct endpoints")
        lo, hi = int(np.argmin(V[:, 0])), int(np.argmax(V[:, 0]))
        return V[sorted({lo, hi})]
    if V.shape[0] < n + 1 or _affine_rank(V, tol) < n:
        raise DegenerateInput("vertices do not span a full-dimensional polytope")
    if V.shape[0] == n + 1:
        return V
    try:
        hull = ConvexHull(V)
    except QhullError as exc:
        raise DegenerateInput(str(exc)) from exc
    keep = np.sort(hull.vertices)
    return V[keep]


def _hull_volume(V) -> float:
    n = V.shape[1]
    if n == 1:
        return float(V[:, 0].max() - V[:, 0].min())
    if V.shape[0] == n + 1:
        return simplex_volume(V)
    return float(ConvexHull(V).volume)


def chebyshev_ball(h: HPolytope, max_radius: float = 1e6):
    """Largest inscribed ball ``(center, radius)``; raises EmptyPolytope."""
    E, e = h.E, h.e
    n = h.dim
    norms = np.linalg.norm(E, axis=1)
    # variables (x, r); maximise r s.t. E x + e >= r * |E_row|
    A_ub = np.column_stack([-E, norms])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    bounds = [(None, None)] * n + [(0.0, max_radius)]
    res = linprog(c, A_ub=A_ub, b_ub=e, bounds=bounds, method="highs")
    if res.status == 2:
        raise EmptyPolytope("H-representation is infeasible")
    if res.status != 0:
        raise EmptyPolytope(f"Chebyshev LP failed: {res.message}")
    return res.x[:n], float(res.x[-1])


def _is_bounded(h: HPolytope, tol: float) -> bool:
    # bounded iff rank(E) = n and some y > 0 has E^T y = 0 (Stiemke)
    E = h.E
    if np.linalg.matrix_rank(E, tol=tol) < h.dim:
        return False
    m = E.shape[0]
    res = linprog(
        np.zeros(m), A_eq=E.T, b_eq=np.zeros(h.dim), bounds=[(1.0, None)] * m,
        method="highs",
    )
    return res.status == 0


def vertices_of(h: HPolytope, tol: float = GEOM_TOL) -> VPolytope:
    """Enumerate the extreme points of a bounded, full-dimensional H-polytope.

    Raises
    ------
    EmptyPolytope
        The inequality system is infeasible.
    UnboundedPolytope
        The region has a recession direction.
    DegeneratePolytope
        The region is nonempty but has empty interior.
    """
    n = h.dim
    if n == 1:
        return _interval_vertices(h, tol)
    center, radius = chebyshev_ball(h)
    if not _is_bounded(h, tol):
        raise UnboundedPolytope("polyhedron has a recession direction")
    if radius <= tol:
        raise DegeneratePolytope(f"inscribed radius {radius:.3g} <= {tol:.1g}")
    halfspaces = np.column_stack([-h.E, -h.e])
    try:
        hs = HalfspaceIntersection(halfspaces, center)
    except QhullError as exc:
        raise DegeneratePolytope(str(exc)) from exc
    pts = hs.intersections
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    pts = pts[h.contains(pts, tol=max(tol, 1e-9) * 10)]
    V, _ = merge_points(pts, tol * max(1.0, float(np.abs(pts).max())))
    return VPolytope(V, tol=tol)


def _interval_vertices(h, tol):
    E, e = h.E[:, 0], h.e
    lo, hi = -np.inf, np.inf
    for a, b in zip(E, e):
        if abs(a) <= tol:
            if b < -tol:
                raise EmptyPolytope("constant constraint is violated")
            continue
        bound = -b / a
        if a > 0:
            lo = max(lo, bound)
        else:
            hi = min(hi, bound)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        if lo > hi:
            raise EmptyPolytope("interval is empty")
        raise UnboundedPolytope("interval is unbounded")
    if hi - lo < -tol:
        raise EmptyPolytope("interval is empty")
    if hi - lo <= tol:
        raise DegeneratePolytope("interval has zero length")
    return VPolytope(np.array([[lo], [hi]]), tol=tol)


def hrep_of(v: VPolytope, tol: float = GEOM_TOL) -> HPolytope:
    """Irredundant facet description with unit-norm rows."""
    V = v.vertices
    n = V.shape[1]
    if n == 1:
        lo, hi = V[:, 0].min(), V[:, 0].max()
        if hi - lo <= tol:
            raise DegenerateInput("interval has zero length")
        return HPolytope([[1.0], [-1.0]], [-lo, hi])
    if V.shape[0] < n + 1 or _affine_rank(V, tol) < n:
        raise DegenerateInput("vertices are affinely dependent")
    if V.shape[0] == n + 1:
        return _simplex_hrep(V)
    try:
        hull = ConvexHull(V)
    except QhullError as exc:
        raise DegenerateInput(str(exc)) from exc
    eqs = hull.equations
    kept: list = []
    for row in eqs:
        if not any(np.allclose(row, k, atol=1e-9, rtol=0.0) for k in kept):
            kept.append(row)
    kept = np.array(kept)
    return HPolytope(-kept[:, :n], -kept[:, n])


def _simplex_hrep(V):
    n = V.shape[1]
    M = np.vstack([V.T, np.ones(n + 1)])
    Minv = np.linalg.inv(M)
    E, e = Minv[:, :n], Minv[:, n]
    norms = np.linalg.norm(E, axis=1)
    return HPolytope(E / norms[:, None], e / norms)


def contains(h: HPolytope, x, tol: float = GEOM_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("contains expects a single point")
    return bool(h.contains(x, tol))


def delaunay(points, tol: float = GEOM_TOL) -> list:
    """Delaunay triangulation by lifting onto the paraboloid ``z = |x|^2``.

    The lower convex hull of the lifted points projects onto the
    triangulation.  Points are sorted lexicographically before the hull is
    built, so cospherical ties are resolved the same way regardless of input
    order.  Simplices are returned in the same canonical order.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    k, n = P.shape
    if k < n + 1:
        raise DegenerateInput(f"need at least {n + 1} points, got {k}")
    uniq, _ = merge_points(P, tol)
    if uniq.shape[0] != k:
        raise DegenerateInput("duplicate points")
    if n == 1:
        order = np.argsort(P[:, 0], kind="stable")
        return [
            Simplex((int(a), int(b)), P[[a, b]]) for a, b in zip(order[:-1], order[1:])
        ]
    if _affine_rank(P, tol) < n:
        raise DegenerateInput("all points lie on one hyperplane")

    order = np.lexsort(P.T[::-1])
    Q = P[order]
    shift = Q.mean(axis=0)
    scale = max(float(np.abs(Q - shift).max()), 1e-300)
    Qn = (Q - shift) / scale
    lifted = np.column_stack([Qn, np.einsum("ij,ij->i", Qn, Qn)])
    # apex above the paraboloid keeps the hull full-dimensional when all
    # points are cospherical; simplices touching it are never lower facets
    apex = np.append(np.zeros(n), lifted[:, n].max() + 1.0)
    try:
        hull = ConvexHull(np.vstack([lifted, apex]))
    except QhullError as exc:
        raise DegenerateInput(str(exc)) from exc
    lower = (hull.equations[:, n] < -1e-12) & np.all(hull.simplices < k, axis=1)
    total = _hull_volume(P)
    out = []
    for simp in hull.simplices[lower]:
        idx = tuple(sorted(int(order[s]) for s in simp))
        verts = P[list(idx)]
        if simplex_volume(verts) <= 1e-12 * total:
            continue
        out.append(Simplex(idx, verts))
    out.sort(key=lambda s: s.indices)
    return out


def _tight_matrix(h: HPolytope, V, tol):
    """``T[r, k]``: vertex ``k`` lies on facet ``r``."""
    scale = max(1.0, float(np.abs(V).max()))
    return (np.abs(h.slack(V)) <= tol * scale * 10).T


def facet_vertex_sets(v: VPolytope, h: Optional[HPolytope] = None, tol: float = GEOM_TOL):
    """For every facet row, the tuple of vertex indices lying on it."""
    if h is None:
        h = hrep_of(v, tol)
    tight = _tight_matrix(h, v.vertices, tol)
    return [tuple(np.flatnonzero(row)) for row in tight]


def edges_of(v: VPolytope, owner: Optional[int] = None, tol: float = GEOM_TOL) -> list:
    """The 1-faces of ``v``.

    Two vertices span an edge iff the facets tight at both have normals of
    rank ``n - 1``; diagonals fail that test.
    """
    V = v.vertices
    n = v.dim
    k = v.n_vertices
    if n == 1:
        pairs = [(0, 1)]
    elif k == n + 1:
        pairs = list(itertools.combinations(range(k), 2))
    else:
        h = hrep_of(v, tol)
        tight = _tight_matrix(h, V, tol)
        pairs = []
        for i, j in itertools.combinations(range(k), 2):
            rows = tight[:, i] & tight[:, j]
            if rows.sum() >= n - 1 and np.linalg.matrix_rank(h.E[rows], tol=1e-7) == n - 1:
                pairs.append((i, j))
    if not pairs:
        raise DegenerateInput("polytope has no edges")
    return [Edge((V[i].copy(), V[j].copy()), (i, j), owner) for i, j in pairs]


def sample_points(v: VPolytope, count: int, rng=None):
    """Uniform samples from the polytope (volume-weighted simplex picking)."""
    rng = np.random.default_rng(rng)
    V = v.vertices
    n = v.dim
    if count <= 0:
        return np.empty((0, n))
    if v.is_simplex or n == 1:
        simplices = [V] if n > 1 else [V[np.argsort(V[:, 0])]]
    else:
        simplices = [s.vertices for s in delaunay(V)]
    vols = np.array([simplex_volume(s) if n > 1 else abs(s[1, 0] - s[0, 0]) for s in simplices])
    pick = rng.choice(len(simplices), size=count, p=vols / vols.sum())
    w = rng.dirichlet(np.ones(n + 1), size=count)
    stack = np.stack(simplices)
    return np.einsum("kj,kjd->kd", w, stack[pick])


def as_points(x, dim: Optional[int] = None):
    """Coerce ``x`` to a 2-D float array of points, checking dimension."""
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionMismatch("expected a point or a 2-D array of points")
    if dim is not None and X.shape[1] != dim:
        raise DimensionMismatch(f"points have dimension {X.shape[1]}, expected {dim}")
    return X


def box(lo: Sequence[float], hi: Sequence[float]) -> HPolytope:
    """Axis-aligned box ``lo <= x <= hi``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.size
    eye = np.eye(n)
    return HPolytope(np.vstack([eye, -eye]), np.concatenate([-lo, hi]))
