"""Vector-field refinement of flagged cells.

For a flagged cell, the edge along which the field direction turns the most
is split at the point whose field direction bisects the directions at the
two endpoints.  Every cell containing the new point is re-triangulated
(Delaunay of its vertices plus the new point) so the partition stays
conforming; sub-cells keep their parent's affine dynamics.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .exceptions import DegenerateSubcell, NoBisector
from .geometry import GEOM_TOL, Edge, VPolytope, delaunay, simplex_volume
from .pwa import Cell, PwaDynamics

logger = logging.getLogger(__name__)

ZERO_FIELD = 1e-12
MIN_SUBCELL_VOLUME = 1e-12


@dataclass(frozen=True)
class RefinementPlan:
    """One executed split.  ``edge`` holds pool vertex ids of the input
    partition (or of vertices added earlier in the same pass); ``affected``
    lists the input cell ids that were split, the target included."""

    target: int
    edge: tuple
    new_vertex: np.ndarray
    t: float
    fallback: bool
    affected: tuple


def _owner(e: Edge, d: Union[PwaDynamics, Cell]) -> Cell:
    return d if isinstance(d, Cell) else d.cell(e.owner)


def _angle(u, v) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu <= ZERO_FIELD or nv <= ZERO_FIELD:
        return math.pi / 2
    u, v = u / nu, v / nv
    # stable near 0 and pi, unlike arccos of the cosine
    return float(2.0 * math.atan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def field_variation(e: Edge, d: Union[PwaDynamics, Cell]) -> float:
    """Angle in ``[0, pi]`` between the owner's field at the two endpoints.

    A (numerically) zero field at either endpoint counts as ``pi``.
    """
    cell = _owner(e, d)
    f0, f1 = cell.field(e.endpoints[0]), cell.field(e.endpoints[1])
    if np.linalg.norm(f0) <= ZERO_FIELD or np.linalg.norm(f1) <= ZERO_FIELD:
        return math.pi
    return _angle(f0, f1)


def bisector_parameter(e: Edge, d: Union[PwaDynamics, Cell], tol: float = GEOM_TOL) -> float:
    """``t`` in (0, 1) where the field direction at ``v0 + t (v1 - v0)`` makes
    equal angles with the endpoint directions, located by bisection."""
    cell = _owner(e, d)
    v0, v1 = (np.asarray(p, dtype=float) for p in e.endpoints)
    f0, f1 = cell.field(v0), cell.field(v1)
    if np.linalg.norm(f0) <= ZERO_FIELD or np.linalg.norm(f1) <= ZERO_FIELD:
        raise NoBisector("zero field at an endpoint")
    theta = _angle(f0, f1)
    if theta <= tol:
        raise ValueError(f"field variation {theta:.3g} along the edge is below {tol:g}")

    def g(t):
        f = cell.field(v0 + t * (v1 - v0))
        return _angle(f, f0) - _angle(f, f1)

    lo, hi = 0.0, 1.0
    glo, ghi = g(lo), g(hi)
    if not (glo < 0 < ghi):
        raise NoBisector("angle difference has no sign change on the edge")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) <= tol or hi - lo <= 1e-15:
            return mid
        if gm < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bisector_point(e: Edge, d: Union[PwaDynamics, Cell], tol: float = GEOM_TOL):
    t = bisector_parameter(e, d, tol)
    v0, v1 = (np.asarray(p, dtype=float) for p in e.endpoints)
    return v0 + t * (v1 - v0)


def refine_cell(cell: Cell, new_vertex, tol: float = GEOM_TOL):
    """Delaunay sub-cells of ``cell`` after adding ``new_vertex`` on its boundary."""
    m = np.asarray(new_vertex, dtype=float)
    V = cell.vertices
    scale = max(1.0, float(np.abs(V).max()))
    slack = cell.region.slack(m)
    if np.min(slack) < -tol * scale or np.min(np.abs(slack)) > tol * scale:
        raise ValueError("new vertex must lie on the boundary of the cell")
    if np.any(np.linalg.norm(V - m, axis=1) <= tol * scale):
        raise ValueError("new vertex coincides with an existing vertex")
    children = _split(cell, m)
    return [cell.with_vertices(verts) for verts, _ in children]


def _split(cell: Cell, m, extra_ids=None):
    pts = np.vstack([cell.vertices, m])
    simplices = delaunay(pts)
    vols = [simplex_volume(s.vertices) for s in simplices]
    if min(vols) < MIN_SUBCELL_VOLUME:
        raise DegenerateSubcell(f"sub-cell volume {min(vols):.3g} below {MIN_SUBCELL_VOLUME:g}")
    parent = cell.volume
    if abs(sum(vols) - parent) > 1e-9 * parent:
        raise DegenerateSubcell("sub-cells do not tile the parent cell")
    return [(s.vertices, s.indices) for s in simplices]


class _Work:
    """Mutable partition state used while executing refinement plans."""

    def __init__(self, d: PwaDynamics):
        self.pool = [p.copy() for p in d.vertex_pool]
        self.cells = {}
        self.incident = {}
        for pos, (cell, vids) in enumerate(zip(d.cells, d.cell_vertex_ids)):
            self._add((pos,), cell, vids)

    def _add(self, key, cell, vids):
        self.cells[key] = (cell, tuple(vids))
        for v in vids:
            self.incident.setdefault(v, set()).add(key)

    def _remove(self, key):
        cell, vids = self.cells.pop(key)
        for v in vids:
            self.incident[v].discard(key)
        return cell, vids

    def replace(self, key, pieces):
        """Replace cell ``key`` by ``pieces = [(vertex array, vids)]``."""
        cell, _ = self._remove(key)
        keys = []
        for j, (verts, vids) in enumerate(pieces):
            child_key = key + (j,)
            self._add(child_key, cell.with_vertices(verts), vids)
            keys.append(child_key)
        return keys

    def triangulate(self, key):
        cell, vids = self.cells[key]
        pieces = [(s.vertices, [vids[i] for i in s.indices]) for s in delaunay(cell.vertices)]
        return self.replace(key, pieces)

    def insert_on(self, a, b, m):
        """Add vertex ``m`` (on segment ab) and split every cell containing it."""
        mid = len(self.pool)
        self.pool.append(m)
        near = sorted(self.incident.get(a, set()) | self.incident.get(b, set()))
        affected = []
        for key in near:
            cell, vids = self.cells[key]
            if not cell.contains(m, GEOM_TOL * max(1.0, float(np.abs(m).max()))):
                continue
            pieces = [
                (verts, [(list(vids) + [mid])[i] for i in idx]) for verts, idx in _split(cell, m)
            ]
            affected.append(key)
            self.replace(key, pieces)
        return affected

    def build(self, tol) -> PwaDynamics:
        cells = [
            Cell(new_id, c.A, c.a, vertices=c.polytope)
            for new_id, (_, (c, _)) in enumerate(sorted(self.cells.items()))
        ]
        return PwaDynamics(cells, tol=tol)


def _best_edge(work: _Work, keys):
    best = None
    seen = set()
    for key in keys:
        cell, vids = work.cells[key]
        for i in range(len(vids)):
            for j in range(i + 1, len(vids)):
                pair = (min(vids[i], vids[j]), max(vids[i], vids[j]))
                if pair in seen:
                    continue
                seen.add(pair)
                edge = Edge((work.pool[pair[0]], work.pool[pair[1]]), pair, cell.id)
                score = round(field_variation(edge, cell), 12)
                rank = (-score, pair)
                if best is None or rank < best[0]:
                    best = (rank, edge, cell)
    return best[1], best[2], -best[0][0]


def refine_partition_with_plans(d: PwaDynamics, flagged, tol: float = GEOM_TOL):
    """Execute one refinement plan per flagged cell; returns ``(new d, plans)``.

    Plans run in cell-id order against the partially refined partition.  A
    flagged cell that has already been split as the neighbour of an earlier
    plan counts as refined and gets no plan of its own.
    """
    flagged = sorted(set(flagged))
    if not flagged:
        raise ValueError("no cells flagged for refinement")
    work = _Work(d)
    plans = []
    for cid in flagged:
        key = (d.position(cid),)
        if key not in work.cells:
            continue
        cell, vids = work.cells[key]
        keys = [key]
        if not cell.polytope.is_simplex and cell.dim > 1:
            keys = work.triangulate(key)
        edge, owner, variation = _best_edge(work, keys)
        fallback = False
        try:
            t = bisector_parameter(edge, owner, tol)
        except (NoBisector, ValueError):
            t, fallback = 0.5, True
        v0, v1 = edge.endpoints
        m = v0 + t * (v1 - v0)
        split = work.insert_on(edge.index[0], edge.index[1], m)
        affected = tuple(sorted({d.cells[k[0]].id for k in split}))
        plans.append(RefinementPlan(cid, edge.index, m, t, fallback, affected))
    return work.build(d.tol), plans


def refine_partition(d: PwaDynamics, flagged, tol: float = GEOM_TOL) -> PwaDynamics:
    return refine_partition_with_plans(d, flagged, tol)[0]
