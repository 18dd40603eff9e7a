"""Continuous piecewise-affine dynamics ``xdot = A_i x + a_i`` on a polytopal
partition, plus the boundary/interior index sets used by the barrier LP."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional

import numpy as np

from .exceptions import DimensionMismatch, EmptyPartition, InvalidPartition, OutOfDomain
from .geometry import (
    GEOM_TOL,
    HPolytope,
    VPolytope,
    as_points,
    facet_vertex_sets,
    hrep_of,
    merge_points,
    vertices_of,
)

CONTINUITY_TOL = 1e-7


class Cell:
    """One region of the partition together with its affine vector field.

    Either ``vertices`` or ``region`` must be given.  The stored H-form is
    always the irredundant, unit-row description rebuilt from the vertices,
    so both forms describe the same set.
    """

    __slots__ = ("id", "polytope", "region", "A", "a")

    def __init__(self, id, A, a, *, vertices=None, region: Optional[HPolytope] = None,
                 tol: float = GEOM_TOL):
        if vertices is None and region is None:
            raise ValueError("a cell needs vertices or an H-representation")
        if vertices is None:
            poly = vertices_of(region, tol)
        else:
            poly = vertices if isinstance(vertices, VPolytope) else VPolytope(vertices, tol)
        n = poly.dim
        A = np.array(A, dtype=float).reshape(n, n) if np.size(A) == n * n else None
        if A is None:
            raise DimensionMismatch(f"A must be {n}x{n}")
        a = np.array(a, dtype=float).ravel()
        if a.size != n:
            raise DimensionMismatch(f"a must have {n} entries")
        A.setflags(write=False)
        a.setflags(write=False)
        self.id = int(id)
        self.polytope = poly
        self.region = hrep_of(poly, tol)
        self.A = A
        self.a = a

    @property
    def vertices(self):
        return self.polytope.vertices

    @property
    def dim(self) -> int:
        return self.polytope.dim

    @property
    def volume(self) -> float:
        return self.polytope.volume

    def field(self, x):
        """``A x + a`` for a point or a batch of points."""
        return np.asarray(x, dtype=float) @ self.A.T + self.a

    def contains(self, x, tol: float = GEOM_TOL):
        return self.region.contains(x, tol)

    def with_vertices(self, vertices, id=None) -> "Cell":
        """A sub-cell inheriting this cell's dynamics."""
        return Cell(self.id if id is None else id, self.A, self.a, vertices=vertices)

    def __repr__(self):
        return f"Cell(id={self.id}, n_vertices={len(self.vertices)})"


def affine_fit(points, values):
    """Exact affine map ``(A, a)`` through ``values[k] = A points[k] + a``.

    Needs at least ``n + 1`` affinely independent points; used to build cell
    dynamics from a function that is known to be affine on the cell.
    """
    P = np.asarray(points, dtype=float)
    Y = np.asarray(values, dtype=float)
    M = np.column_stack([P, np.ones(len(P))])
    coef, *_ = np.linalg.lstsq(M, Y, rcond=None)
    return coef[:-1].T, coef[-1]


class ContinuityViolation(NamedTuple):
    cell_i: int
    cell_j: int
    vertex: np.ndarray
    gap: float


@dataclass(frozen=True)
class IndexSets:
    """Boundary cells and the boundary/interior (cell id, vertex id) pairs.

    Vertex ids index :attr:`PwaDynamics.vertex_pool`.
    """

    boundary_cells: frozenset
    boundary_pairs: tuple
    interior_pairs: tuple
    boundary_vertices: frozenset = field(default_factory=frozenset)


class PwaDynamics:
    """A continuous PWA vector field on a bounded polytopal partition.

    Vertices are pooled globally (merge radius ``tol``) so that a vertex
    shared by several cells is one object with one id.  Instances are
    immutable; refinement builds a new one.
    """

    def __init__(self, cells: Iterable[Cell], tol: float = GEOM_TOL):
        cells = sorted(cells, key=lambda c: c.id)
        if not cells:
            raise EmptyPartition("partition has no cells")
        dims = {c.dim for c in cells}
        if len(dims) != 1:
            raise DimensionMismatch(f"cells have mixed dimensions {sorted(dims)}")
        ids = [c.id for c in cells]
        if len(set(ids)) != len(ids):
            raise InvalidPartition("duplicate cell ids")
        self.cells = tuple(cells)
        self.dim = dims.pop()
        self.tol = tol
        self._index = {c.id: k for k, c in enumerate(cells)}

        stacked = np.vstack([c.vertices for c in cells])
        pool, inverse = merge_points(stacked, tol)
        pool.setflags(write=False)
        self.vertex_pool = pool
        offsets = np.cumsum([0] + [len(c.vertices) for c in cells])
        self.cell_vertex_ids = tuple(
            tuple(int(v) for v in inverse[offsets[k]:offsets[k + 1]]) for k in range(len(cells))
        )

        rmax = max(c.region.n_facets for c in cells)
        En = np.zeros((len(cells), rmax, self.dim))
        en = np.ones((len(cells), rmax))
        for k, c in enumerate(cells):
            r = c.region.n_facets
            En[k, :r] = c.region.E
            en[k, :r] = c.region.e
        self._E = En
        self._e = en
        self._A = np.stack([c.A for c in cells])
        self._a = np.stack([c.a for c in cells])
        self._lo = np.array([c.vertices.min(axis=0) for c in cells])
        self._hi = np.array([c.vertices.max(axis=0) for c in cells])
        self._owners = None
        self._facets = None

    # -- basic accessors -------------------------------------------------
    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def cell_ids(self):
        return [c.id for c in self.cells]

    def cell(self, cell_id) -> Cell:
        return self.cells[self._index[cell_id]]

    def position(self, cell_id) -> int:
        return self._index[cell_id]

    def vertex_ids(self, cell_id):
        return self.cell_vertex_ids[self._index[cell_id]]

    @property
    def volume(self) -> float:
        return float(sum(c.volume for c in self.cells))

    @property
    def bounds(self):
        return self._lo.min(axis=0), self._hi.max(axis=0)

    def __len__(self):
        return self.n_cells

    def __repr__(self):
        return f"PwaDynamics(dim={self.dim}, n_cells={self.n_cells}, n_vertices={len(self.vertex_pool)})"

    # -- point location --------------------------------------------------
    def locate(self, X, tol: Optional[float] = None):
        """Boolean matrix ``M[k, c]``: point ``k`` lies in cell position ``c``."""
        tol = self.tol if tol is None else tol
        X = as_points(X, self.dim)
        out = np.zeros((len(X), self.n_cells), dtype=bool)
        chunk = max(1, 2_000_000 // max(1, self.n_cells * self._E.shape[1]))
        for s in range(0, len(X), chunk):
            Xs = X[s:s + chunk]
            box = np.all(
                (Xs[:, None, :] >= self._lo[None] - tol) & (Xs[:, None, :] <= self._hi[None] + tol),
                axis=2,
            )
            rows, cols = np.nonzero(box)
            if rows.size:
                slack = np.einsum("prn,pn->pr", self._E[cols], Xs[rows]) + self._e[cols]
                inside = np.all(slack >= -tol, axis=1)
                out[s + rows[inside], cols[inside]] = True
        return out

    def owner_positions(self, X, tol: Optional[float] = None):
        """Position of the first (lowest id) cell containing each point, -1 if none."""
        M = self.locate(X, tol)
        pos = np.argmax(M, axis=1)
        pos[~M.any(axis=1)] = -1
        return pos

    def in_cell(self, X, positions, tol: Optional[float] = None):
        """Vectorised test ``X[k] in cell positions[k]``."""
        tol = self.tol if tol is None else tol
        slack = np.einsum("prn,pn->pr", self._E[positions], X) + self._e[positions]
        return np.all(slack >= -tol, axis=1)

    def field_at(self, X, positions):
        """``A_c x + a_c`` with cell ``c = positions[k]`` for each row of X."""
        return np.einsum("pij,pj->pi", self._A[positions], X) + self._a[positions]

    def __call__(self, X):
        X = as_points(X, self.dim)
        pos = self.owner_positions(X)
        if np.any(pos < 0):
            raise OutOfDomain(f"{int(np.sum(pos < 0))} point(s) outside the partition")
        return self.field_at(X, pos)

    # -- combinatorics ---------------------------------------------------
    def vertex_owners(self):
        """For each pooled vertex, the sorted cell positions whose region
        contains it (geometric incidence; equals vertex-list incidence on
        conforming partitions)."""
        if self._owners is None:
            M = self.locate(self.vertex_pool)
            for k, vids in enumerate(self.cell_vertex_ids):
                M[list(vids), k] = True
            self._owners = tuple(tuple(int(c) for c in np.flatnonzero(row)) for row in M)
        return self._owners

    def facets(self):
        """Per cell position: list of ``(pool vertex ids, outward unit normal)``."""
        if self._facets is None:
            out = []
            for k, c in enumerate(self.cells):
                local = facet_vertex_sets(c.polytope, c.region, self.tol)
                vids = self.cell_vertex_ids[k]
                out.append([
                    (frozenset(vids[j] for j in fs), -c.region.E[r])
                    for r, fs in enumerate(local)
                ])
            self._facets = out
        return self._facets

    def with_cells(self, cells) -> "PwaDynamics":
        return PwaDynamics(cells, tol=self.tol)

    def origin_violations(self):
        """Cells containing the origin without having it as a vertex."""
        zero = np.zeros(self.dim)
        bad = []
        for k, c in enumerate(self.cells):
            if c.contains(zero, self.tol) and not np.any(
                np.all(np.abs(c.vertices) <= self.tol, axis=1)
            ):
                bad.append(c.id)
        return bad


def evaluate_dynamics(d: PwaDynamics, x):
    """Vector field at a single point; the lowest-id owner cell is used."""
    x = np.asarray(x, dtype=float)
    if x.shape != (d.dim,):
        raise DimensionMismatch(f"expected a point of dimension {d.dim}")
    pos = d.owner_positions(x[None])[0]
    if pos < 0:
        raise OutOfDomain(f"{x} is outside the partition")
    return d.cells[pos].field(x)


def check_continuity(d: PwaDynamics, tol: float = CONTINUITY_TOL):
    """Gaps between the affine pieces of neighbouring cells at shared vertices.

    Affine maps that agree at every vertex of a convex common face agree on
    the whole face, so an empty result means the field is continuous.
    """
    violations = []
    for vid, owners in enumerate(d.vertex_owners()):
        if len(owners) < 2:
            continue
        v = d.vertex_pool[vid]
        vals = [d.cells[k].field(v) for k in owners]
        for (ki, fi), (kj, fj) in itertools.combinations(zip(owners, vals), 2):
            gap = float(np.max(np.abs(fi - fj)))
            if gap > tol:
                violations.append(
                    ContinuityViolation(d.cells[ki].id, d.cells[kj].id, v.copy(), gap)
                )
    return violations


def _unmatched_facet_is_interior(d: PwaDynamics, k: int, vids, normal) -> bool:
    cell = d.cells[k]
    pts = d.vertex_pool[sorted(vids)]
    center = pts.mean(axis=0)
    diam = float(np.max(cell.vertices.max(axis=0) - cell.vertices.min(axis=0)))
    probe = center + 1e-6 * diam * normal
    hits = d.locate(probe[None])[0]
    hits[k] = False
    return bool(hits.any())


def _classify_facets(d: PwaDynamics):
    """Split facets into matched pairs, boundary facets and hanging facets."""
    table: dict = {}
    for k, facets in enumerate(d.facets()):
        for vids, normal in facets:
            table.setdefault(vids, []).append((k, normal))
    boundary, hanging = [], []
    for vids, owners in table.items():
        if len(owners) > 2:
            raise InvalidPartition(
                f"facet on vertices {sorted(vids)} is shared by {len(owners)} cells (overlap)"
            )
        if len(owners) == 2:
            (_, n1), (_, n2) = owners
            if np.dot(n1, n2) > -1 + 1e-6:
                raise InvalidPartition(
                    f"cells {[d.cells[k].id for k, _ in owners]} overlap across a facet"
                )
            continue
        k, normal = owners[0]
        if _unmatched_facet_is_interior(d, k, vids, normal):
            hanging.append((d.cells[k].id, vids))
        else:
            boundary.append((k, vids))
    return boundary, hanging


def conformity_violations(d: PwaDynamics):
    """Interior facets that are not matched vertex-for-vertex by a neighbour
    (hanging nodes).  Empty for a conforming partition."""
    return _classify_facets(d)[1]


def boundary_vertex_ids(d: PwaDynamics) -> frozenset:
    boundary, _ = _classify_facets(d)
    return frozenset(v for _, vids in boundary for v in vids)


def build_index_sets(d: PwaDynamics) -> IndexSets:
    """Boundary cells and the (cell, vertex) pairs on / off the domain boundary.

    A facet lies on the domain boundary when no other cell sits across it.
    Boundary vertices are the vertices of such facets; a cell is a boundary
    cell when it owns at least one boundary vertex (it meets the boundary).
    Every (cell, vertex) incidence lands in exactly one of the two pair sets.
    """
    bverts = boundary_vertex_ids(d)
    bcells = set()
    bpairs, ipairs = [], []
    for k, c in enumerate(d.cells):
        for vid in d.cell_vertex_ids[k]:
            if vid in bverts:
                bcells.add(c.id)
                bpairs.append((c.id, vid))
            else:
                ipairs.append((c.id, vid))
    return IndexSets(
        boundary_cells=frozenset(bcells),
        boundary_pairs=tuple(sorted(bpairs)),
        interior_pairs=tuple(sorted(ipairs)),
        boundary_vertices=bverts,
    )


def from_function(vertex_lists, f: Callable, start_id: int = 0) -> PwaDynamics:
    """Build dynamics from cells given by vertices and a field ``f`` that is
    affine on each of them (e.g. a hand-written continuous PWA map)."""
    cells = []
    for k, V in enumerate(vertex_lists):
        poly = VPolytope(V)
        values = np.array([f(v) for v in poly.vertices])
        A, a = affine_fit(poly.vertices, values)
        cells.append(Cell(start_id + k, A, a, vertices=poly))
    return PwaDynamics(cells)
