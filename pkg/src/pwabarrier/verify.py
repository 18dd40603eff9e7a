"""Solver-independent checks of a barrier candidate, plus simulation.

Nothing here reads LP internals: margins are recomputed from the raw cell
data ``(A_i, a_i, vertices)`` and the candidate pieces ``(p_i, q_i)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .barrier_lp import AlphaGain, BarrierCandidate, Epsilons
from .exceptions import DimensionMismatch, NotTwoDimensional, OutOfDomain, SamplingFailure
from .geometry import as_points, sample_points
from .pwa import IndexSets, PwaDynamics, build_index_sets

logger = logging.getLogger(__name__)

VERIFY_TOL = 1e-7
MAX_REJECTIONS = 100_000


def _pieces(b: BarrierCandidate, d: PwaDynamics):
    """``(P, q)`` rows aligned with the cell positions of ``d``."""
    if b.P.ndim != 2 or b.P.shape[1] != d.dim:
        raise DimensionMismatch(f"barrier pieces must have dimension {d.dim}")
    missing = [cid for cid in d.cell_ids if cid not in set(b.cell_ids)]
    if missing:
        raise ValueError(f"barrier has no piece for cells {missing[:5]}")
    rows = [b.piece(cid) for cid in d.cell_ids]
    P = np.array([p for p, _ in rows], dtype=float).reshape(d.n_cells, d.dim)
    q = np.array([q for _, q in rows], dtype=float)
    return P, q


def barrier_values(b: BarrierCandidate, d: PwaDynamics, X):
    """Vectorised :func:`evaluate_barrier`; raises if any point is outside."""
    X = as_points(X, d.dim)
    P, q = _pieces(b, d)
    pos = d.owner_positions(X)
    if np.any(pos < 0):
        raise OutOfDomain(f"{int(np.sum(pos < 0))} point(s) outside the partition")
    return np.einsum("kn,kn->k", P[pos], X) + q[pos]


def evaluate_barrier(b: BarrierCandidate, d: PwaDynamics, x) -> float:
    """``p_i.x + q_i`` for the lowest-id cell containing ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (d.dim,):
        raise DimensionMismatch(f"expected a point of dimension {d.dim}")
    return float(barrier_values(b, d, x[None])[0])


def normalize_barrier(b: BarrierCandidate, d: PwaDynamics, peak: float = 1.0) -> BarrierCandidate:
    """Scale ``b`` up so that its largest vertex value equals ``peak``.

    Multiplying a valid candidate by ``c >= 1`` keeps every condition (the
    epsilon bounds are one-sided), so the scale is never reduced: a candidate
    already above ``peak``, or one that is nowhere positive, comes back as is.
    """
    P, q = _pieces(b, d)
    top = max(float(np.max(c.vertices @ P[k] + q[k])) for k, c in enumerate(d.cells))
    if top <= 0 or top >= peak:
        return b
    return b.scaled(peak / top)


# -- certificate ---------------------------------------------------------
@dataclass
class Violation:
    check: str  # "boundary", "continuity", "nagumo_vertex" or "nagumo_sampled"
    cells: tuple
    location: np.ndarray
    value: float


@dataclass
class CertificateReport:
    boundary_ok: bool
    continuity_ok: bool
    nagumo_vertex_ok: bool
    nagumo_sampled_ok: bool
    worst_boundary: float
    """Largest ``h`` over boundary incidences (must be ``<= -eps1``)."""
    worst_continuity: float
    """Largest jump between owner pieces at a shared vertex."""
    worst_vertex_margin: float
    """Smallest ``p.f(v) + alpha h(v)`` over all incidences (must be ``>= eps3``)."""
    worst_sampled_margin: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.boundary_ok and self.continuity_ok
                and self.nagumo_vertex_ok and self.nagumo_sampled_ok)

    def summary(self) -> str:
        def mark(flag):
            return "ok" if flag else "FAIL"
        return "\n".join([
            f"boundary        {mark(self.boundary_ok):4s}  max h on boundary   {self.worst_boundary:.6g}",
            f"continuity      {mark(self.continuity_ok):4s}  max jump            {self.worst_continuity:.6g}",
            f"nagumo vertex   {mark(self.nagumo_vertex_ok):4s}  min margin          {self.worst_vertex_margin:.6g}",
            f"nagumo sampled  {mark(self.nagumo_sampled_ok):4s}  min margin          {self.worst_sampled_margin:.6g}",
            f"violations      {len(self.violations)}",
        ])


def check_certificate(b: BarrierCandidate, d: PwaDynamics, idx: Optional[IndexSets] = None,
                      alpha=1.0, eps=None, samples_per_cell: int = 100, rng=None,
                      tol: float = VERIFY_TOL) -> CertificateReport:
    """Check a candidate against the barrier conditions on ``d``.

    (a) ``h <= -eps1 + tol`` at every boundary incidence;
    (b) owner pieces agree within ``tol`` at every shared vertex;
    (c) ``p_i.(A_i v + a_i) + alpha h_i(v) >= eps3 - tol`` at every vertex of
        every cell;
    (d) the same inequality at ``samples_per_cell`` uniform interior points.
        Since the left side is affine on each cell, (d) can only fail when
        (c) does or when the cell data are inconsistent.
    """
    alpha = AlphaGain.coerce(alpha).alpha_tilde
    eps = Epsilons.coerce(eps)
    if idx is None:
        idx = build_index_sets(d)
    rng = np.random.default_rng(rng)
    P, q = _pieces(b, d)
    pool = d.vertex_pool
    violations = []

    worst_b = -math.inf
    for cid, vid in idx.boundary_pairs:
        k = d.position(cid)
        v = pool[vid]
        h = float(P[k] @ v + q[k])
        worst_b = max(worst_b, h)
        if h > -eps.eps1 + tol:
            violations.append(Violation("boundary", (cid,), v, h))

    # owners by geometric containment, so hanging vertices are covered too
    owners = d.locate(pool)
    for k, vids in enumerate(d.cell_vertex_ids):
        owners[list(vids), k] = True
    worst_c = 0.0
    for vid in range(len(pool)):
        ks = np.flatnonzero(owners[vid])
        if ks.size < 2:
            continue
        v = pool[vid]
        h = P[ks] @ v + q[ks]
        gap = float(h.max() - h.min())
        worst_c = max(worst_c, gap)
        if gap > tol:
            cells = (d.cells[ks[np.argmax(h)]].id, d.cells[ks[np.argmin(h)]].id)
            violations.append(Violation("continuity", cells, v, gap))

    worst_v = math.inf
    worst_s = math.inf
    for k, cell in enumerate(d.cells):
        V = cell.vertices
        m = (V @ cell.A.T + cell.a) @ P[k] + alpha * (V @ P[k] + q[k])
        worst_v = min(worst_v, float(m.min()))
        for j in np.flatnonzero(m < eps.eps3 - tol):
            violations.append(Violation("nagumo_vertex", (cell.id,), V[j], float(m[j])))
        if samples_per_cell > 0:
            X = sample_points(cell.polytope, samples_per_cell, rng)
            m = (X @ cell.A.T + cell.a) @ P[k] + alpha * (X @ P[k] + q[k])
            worst_s = min(worst_s, float(m.min()))
            j = int(np.argmin(m))
            if m[j] < eps.eps3 - tol:
                violations.append(Violation("nagumo_sampled", (cell.id,), X[j], float(m[j])))

    kinds = {v.check for v in violations}
    return CertificateReport(
        boundary_ok="boundary" not in kinds,
        continuity_ok="continuity" not in kinds,
        nagumo_vertex_ok="nagumo_vertex" not in kinds,
        nagumo_sampled_ok="nagumo_sampled" not in kinds,
        worst_boundary=worst_b if idx.boundary_pairs else -math.inf,
        worst_continuity=worst_c,
        worst_vertex_margin=worst_v,
        worst_sampled_margin=worst_s,
        violations=violations,
    )


# -- simulation ----------------------------------------------------------
@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    h: Optional[np.ndarray]
    exited: bool
    exit_time: Optional[float] = None

    def __len__(self):
        return len(self.times)


class _Locator:
    """Point location that first tries each point's previous cell."""

    def __init__(self, d: PwaDynamics):
        self.d = d

    def __call__(self, X, guess):
        pos = guess.copy()
        ok = pos >= 0
        if ok.any():
            ok[ok] = self.d.in_cell(X[ok], pos[ok])
        miss = ~ok
        if miss.any():
            pos[miss] = self.d.owner_positions(X[miss])
        return pos


def _time_grid(T: float, dt: float):
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be non-negative")
    n = int(math.ceil(T / dt - 1e-9))
    t = np.minimum(np.arange(n + 1) * dt, T)
    return t


def _integrate(d: PwaDynamics, X0, T: float, dt: float):
    """Batched fixed-step RK4.

    Yields ``(step, t, X, alive, pos)`` after the initial state and after
    every step.  A trajectory whose stage point leaves the domain is frozen
    at its last state and marked dead from that step on.
    """
    times = _time_grid(T, dt)
    X = np.array(X0, dtype=float)
    locate = _Locator(d)
    pos = locate(X, np.full(len(X), -1))
    if np.any(pos < 0):
        raise OutOfDomain("initial state outside the partition")
    alive = np.ones(len(X), dtype=bool)
    yield 0, times[0], X, alive, pos
    for s in range(1, len(times)):
        h = times[s] - times[s - 1]
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        x = X[idx]
        p = pos[idx]
        good = np.ones(idx.size, dtype=bool)
        k1 = d.field_at(x, p)
        stage = x + 0.5 * h * k1
        p2 = locate(stage, p)
        good &= p2 >= 0
        k2 = d.field_at(stage, np.maximum(p2, 0))
        stage = x + 0.5 * h * k2
        p3 = locate(stage, p2)
        good &= p3 >= 0
        k3 = d.field_at(stage, np.maximum(p3, 0))
        stage = x + h * k3
        p4 = locate(stage, p3)
        good &= p4 >= 0
        k4 = d.field_at(stage, np.maximum(p4, 0))
        new = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        pn = locate(new, p4)
        good &= pn >= 0
        alive[idx[~good]] = False
        keep = idx[good]
        X[keep] = new[good]
        pos[keep] = pn[good]
        yield s, times[s], X, alive, pos


def simulate(d: PwaDynamics, x0, T: float, dt: float,
             barrier: Optional[BarrierCandidate] = None) -> Trajectory:
    """RK4 trajectory of ``xdot = PWA(x)`` from ``x0`` over ``[0, T]``.

    Integration stops early, with ``exited=True``, as soon as a stage point
    leaves the domain.  ``h`` is recorded when a barrier is given.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (d.dim,):
        raise DimensionMismatch(f"x0 must have dimension {d.dim}")
    if barrier is not None:
        P, q = _pieces(barrier, d)
    times, states, hs = [], [], []
    exited, exit_time = False, None
    for _, t, X, alive, pos in _integrate(d, x0[None], T, dt):
        if not alive[0]:
            exited, exit_time = True, float(t)
            break
        times.append(float(t))
        states.append(X[0].copy())
        if barrier is not None:
            hs.append(float(P[pos[0]] @ X[0] + q[pos[0]]))
    return Trajectory(
        times=np.array(times),
        states=np.array(states).reshape(-1, d.dim),
        h=np.array(hs) if barrier is not None else None,
        exited=exited,
        exit_time=exit_time,
    )


@dataclass
class InvarianceReport:
    ok: bool
    initial_states: np.ndarray
    min_h: np.ndarray
    exited: np.ndarray
    rejections: int

    @property
    def n_traj(self) -> int:
        return len(self.initial_states)


def sample_superlevel(b: BarrierCandidate, d: PwaDynamics, count: int, margin: float = 0.0,
                      rng=None, max_rejections: int = MAX_REJECTIONS):
    """Uniform points of the domain with ``h >= margin`` by rejection from the
    bounding box.  Returns ``(points, rejections)``."""
    rng = np.random.default_rng(rng)
    lo, hi = d.bounds
    P, q = _pieces(b, d)
    got = []
    n_got = 0
    rejected = 0
    batch = max(64, 4 * count)
    while n_got < count:
        X = rng.uniform(lo, hi, size=(batch, d.dim))
        pos = d.owner_positions(X)
        inside = pos >= 0
        h = np.full(batch, -np.inf)
        h[inside] = np.einsum("kn,kn->k", P[pos[inside]], X[inside]) + q[pos[inside]]
        ok = h >= margin
        acc = X[ok][: count - n_got]
        got.append(acc)
        n_got += len(acc)
        rejected += int(np.sum(~ok))
        if n_got == 0 and rejected >= max_rejections:
            raise SamplingFailure(
                f"no point with h >= {margin} after {rejected} draws; the set looks empty"
            )
    return np.vstack(got) if got else np.empty((0, d.dim)), rejected


def invariance_check(d: PwaDynamics, b: BarrierCandidate, n_traj: int = 100, T: float = 10.0,
                     dt: float = 1e-3, margin: float = 0.05, rng=None) -> InvarianceReport:
    """Simulate ``n_traj`` trajectories started where ``h >= margin``.

    Passes when no trajectory leaves the domain and ``h`` never drops below
    ``-10 dt`` (allowance for the integration error at cell crossings).
    """
    if n_traj <= 0:
        empty = np.empty((0, d.dim))
        return InvarianceReport(True, empty, np.empty(0), np.empty(0, dtype=bool), 0)
    X0, rejected = sample_superlevel(b, d, n_traj, margin, rng)
    P, q = _pieces(b, d)
    min_h = np.full(n_traj, np.inf)
    alive = np.ones(n_traj, dtype=bool)
    for _, _, X, alive, pos in _integrate(d, X0, T, dt):
        h = np.einsum("kn,kn->k", P[pos], X) + q[pos]
        min_h = np.minimum(min_h, np.where(alive, h, np.inf))
    exited = ~alive
    ok = bool(not exited.any() and min_h.min() >= -10.0 * dt)
    logger.info("invariance: %d trajectories, min h %.3g, exits %d",
                n_traj, float(min_h.min()), int(exited.sum()))
    return InvarianceReport(ok, X0, min_h, exited, rejected)


def invariance_test(d: PwaDynamics, b: BarrierCandidate, n_traj: int = 100, T: float = 10.0,
                    dt: float = 1e-3, margin: float = 0.05, rng=None) -> bool:
    """Boolean form of :func:`invariance_check`."""
    return invariance_check(d, b, n_traj, T, dt, margin, rng).ok


# -- level sets ----------------------------------------------------------
def _ordered_polygon(V):
    c = V.mean(axis=0)
    return V[np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))]


def levelset_segments(b: BarrierCandidate, d: PwaDynamics, level: float = 0.0,
                      tol: float = 1e-12):
    """Per cell, the segment ``{x in X_i : h_i(x) = level}`` of a 2-D barrier.

    Returns a list of ``(cell_id, start, end)``.  Cells the level set misses,
    or only touches at a vertex, give nothing.
    """
    if d.dim != 2:
        raise NotTwoDimensional(f"level sets need a 2-D system, got dimension {d.dim}")
    P, q = _pieces(b, d)
    out = []
    for k, cell in enumerate(d.cells):
        V = _ordered_polygon(cell.vertices)
        h = V @ P[k] + q[k] - level
        if np.all(np.abs(h) <= tol):
            continue
        pts = [V[j] for j in np.flatnonzero(np.abs(h) <= tol)]
        for j in range(len(V)):
            i2 = (j + 1) % len(V)
            h1, h2 = h[j], h[i2]
            if (h1 < -tol and h2 > tol) or (h1 > tol and h2 < -tol):
                t = h1 / (h1 - h2)
                pts.append(V[j] + t * (V[i2] - V[j]))
        if len(pts) < 2:
            continue
        pts = np.array(pts)
        # extreme pair along the segment direction
        far = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        i, j = np.unravel_index(np.argmax(far), far.shape)
        if far[i, j] <= tol:
            continue
        a, c = sorted([pts[i], pts[j]], key=lambda p: (p[0], p[1]))
        out.append((cell.id, a, c))
    return out
