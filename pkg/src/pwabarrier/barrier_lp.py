"""Vertex-based linear program for a piecewise-affine barrier function.

Unknowns are one affine piece ``h_i(x) = p_i.x + q_i`` per cell plus one
non-negative slack per (cell, vertex) incidence.  With ``h`` required to be

* ``<= -eps1`` at vertices on the domain boundary (slack ``tau_b``),
* ``>= eps2`` at interior vertices (slack ``tau_int``),
* ``p_i.(A_i v + a_i) + alpha * h_i(v) >= eps3`` at every vertex of every cell,
* single-valued at vertices shared between cells,

the LP minimises the slack.  A zero boundary slack sum certifies a valid
barrier whose zero super-level set is forward invariant.

Two objectives are available.  ``"sum"`` minimises ``sum(tau_b) +
sum(tau_int)`` in one solve.  ``"lexicographic"`` (the default) first
minimises ``sum(tau_b)`` and then ``sum(tau_int)`` with the boundary sum held
at its optimum.  The single sum can trade boundary slack for interior slack,
because scaling a valid barrier up also deepens ``h`` at interior vertices
that must stay negative, so it may miss a valid barrier that the partition
admits.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .exceptions import EmptyPartition, SolverFailure, SolverTimeLimit
from .pwa import IndexSets, PwaDynamics, build_index_sets

logger = logging.getLogger(__name__)

NONZERO_TOL = 1e-8
GAP_TOL = 1e-8
OBJECTIVES = ("lexicographic", "sum")


@dataclass(frozen=True)
class Epsilons:
    eps1: float = 1e-4
    eps2: float = 1e-4
    eps3: float = 1e-4

    def __post_init__(self):
        if min(self.eps1, self.eps2, self.eps3) <= 0:
            raise ValueError("all epsilons must be positive")

    @classmethod
    def coerce(cls, eps) -> "Epsilons":
        if eps is None:
            return cls()
        if isinstance(eps, Epsilons):
            return eps
        if np.isscalar(eps):
            return cls(float(eps), float(eps), float(eps))
        return cls(*(float(x) for x in eps))

    def as_tuple(self):
        return (self.eps1, self.eps2, self.eps3)


@dataclass(frozen=True)
class AlphaGain:
    """Linear class-K gain ``alpha(s) = alpha_tilde * s``."""

    alpha_tilde: float

    def __post_init__(self):
        if not self.alpha_tilde > 0:
            raise ValueError("alpha_tilde must be positive")

    @classmethod
    def coerce(cls, alpha) -> "AlphaGain":
        return alpha if isinstance(alpha, AlphaGain) else cls(float(alpha))


@dataclass
class BarrierCandidate:
    """Per-cell affine pieces; row ``k`` of ``P``/``q`` belongs to ``cell_ids[k]``."""

    cell_ids: tuple
    P: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.q = np.asarray(self.q, dtype=float).ravel()
        self._index = {c: k for k, c in enumerate(self.cell_ids)}

    def piece(self, cell_id):
        k = self._index[cell_id]
        return self.P[k], float(self.q[k])

    def value(self, cell_id, x):
        p, q = self.piece(cell_id)
        return np.asarray(x, dtype=float) @ p + q

    def scaled(self, c: float) -> "BarrierCandidate":
        return BarrierCandidate(self.cell_ids, c * self.P, c * self.q)


@dataclass
class SlackReport:
    tau_b: dict
    tau_int: dict
    objective: float
    sum_tau_b: float
    sum_tau_int: float
    duality_gap: float = 0.0


@dataclass
class LpProblem:
    """Sparse LP ``min c.x  s.t.  A_ub x <= b_ub, A_eq x = b_eq, lb <= x <= ub``."""

    dim: int
    cell_ids: tuple
    boundary_pairs: tuple
    interior_pairs: tuple
    alpha: float
    eps: Epsilons
    c: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    ub_labels: list = field(default_factory=list)
    eq_labels: list = field(default_factory=list)
    objective: str = "lexicographic"

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def tau_b_offset(self) -> int:
        return self.n_cells * (self.dim + 1)

    @property
    def tau_int_offset(self) -> int:
        return self.tau_b_offset + len(self.boundary_pairs)

    def var_names(self):
        names = []
        for cid in self.cell_ids:
            names += [f"p_{cid}_{j}" for j in range(self.dim)] + [f"q_{cid}"]
        names += [f"tb_{c}_{v}" for c, v in self.boundary_pairs]
        names += [f"ti_{c}_{v}" for c, v in self.interior_pairs]
        return names

    def variable_index(self) -> dict:
        return {name: k for k, name in enumerate(self.var_names())}

    def family_counts(self) -> dict:
        counts = {"C1": 0, "C2": 0, "C3": 0, "C4": len(self.eq_labels)}
        for fam, *_ in self.ub_labels:
            counts[fam] += 1
        return counts

    def unpack(self, x):
        n, C = self.dim, self.n_cells
        blocks = x[: C * (n + 1)].reshape(C, n + 1)
        cand = BarrierCandidate(self.cell_ids, blocks[:, :n].copy(), blocks[:, n].copy())
        tb = x[self.tau_b_offset:self.tau_int_offset]
        ti = x[self.tau_int_offset:]
        return cand, tb, ti

    def pack(self, cand: BarrierCandidate, vertex_pool):
        """Variable vector for ``cand`` with the smallest admissible slacks."""
        n = self.dim
        x = np.zeros(self.n_vars)
        for k, cid in enumerate(self.cell_ids):
            p, q = cand.piece(cid)
            x[k * (n + 1):k * (n + 1) + n] = p
            x[k * (n + 1) + n] = q
        e1, e2, _ = self.eps.as_tuple()
        for t, (cid, vid) in enumerate(self.boundary_pairs):
            x[self.tau_b_offset + t] = max(0.0, cand.value(cid, vertex_pool[vid]) + e1)
        for t, (cid, vid) in enumerate(self.interior_pairs):
            x[self.tau_int_offset + t] = max(0.0, e2 - cand.value(cid, vertex_pool[vid]))
        return x

    def feasible_point(self, vertex_pool):
        """The always-feasible point ``p = 0, q = eps3 / alpha`` with matching slacks."""
        q0 = self.eps.eps3 / self.alpha
        cand = BarrierCandidate(
            self.cell_ids, np.zeros((self.n_cells, self.dim)), np.full(self.n_cells, q0)
        )
        return self.pack(cand, vertex_pool)

    def violation(self, x) -> float:
        """Largest constraint violation of ``x`` (0 when feasible)."""
        worst = 0.0
        if self.A_ub.shape[0]:
            worst = max(worst, float(np.max(self.A_ub @ x - self.b_ub)))
        if self.A_eq.shape[0]:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        worst = max(worst, float(np.max(self.lb - x)), float(np.max(x - self.ub)))
        return max(worst, 0.0)

    def to_lp_text(self) -> str:
        """CPLEX LP-format text, for debugging with external tools."""
        names = self.var_names()

        def expr(row):
            row = row.tocoo()
            terms = []
            for j, v in sorted(zip(row.col, row.data)):
                sign = "-" if v < 0 else "+"
                terms.append(f"{sign} {abs(v):.17g} {names[j]}")
            s = " ".join(terms)
            return s[2:] if s.startswith("+ ") else s

        lines = ["\\ piecewise-affine barrier LP", "Minimize"]
        obj = sp.csr_matrix(self.c.reshape(1, -1))
        lines.append(f" obj: {expr(obj) or '0'}")
        lines.append("Subject To")
        for r, (fam, cid, vid) in enumerate(self.ub_labels):
            lines.append(f" {fam}_{cid}_{vid}: {expr(self.A_ub[r])} <= {self.b_ub[r]:.17g}")
        for r, (fam, ci, cj, vid) in enumerate(self.eq_labels):
            lines.append(f" {fam}_{ci}_{cj}_{vid}: {expr(self.A_eq[r])} = {self.b_eq[r]:.17g}")
        lines.append("Bounds")
        for j, name in enumerate(names):
            if np.isinf(self.lb[j]):
                lines.append(f" {name} free")
            else:
                lines.append(f" {name} >= {self.lb[j]:.17g}")
        lines.append("End")
        return "\n".join(lines) + "\n"


def assemble(d: PwaDynamics, idx: IndexSets, alpha, eps=None,
             objective: str = "lexicographic") -> LpProblem:
    """Build the barrier LP for ``d``.

    ``c`` always holds the unit slack costs; ``objective`` only tells
    :func:`solve` whether to minimise them jointly or in two stages.

    Rows come in canonical (cell id, vertex id) order: boundary rows, then
    interior rows, then one decrease-condition row per incidence, then the
    continuity equalities (one per extra owner of each shared vertex).
    """
    if d.n_cells == 0:
        raise EmptyPartition("partition has no cells")
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    alpha = AlphaGain.coerce(alpha).alpha_tilde
    eps = Epsilons.coerce(eps)
    n = d.dim
    C = d.n_cells
    pool = d.vertex_pool
    nb, ni = len(idx.boundary_pairs), len(idx.interior_pairs)
    tb0 = C * (n + 1)
    ti0 = tb0 + nb
    nvar = ti0 + ni

    rows, cols, vals = [], [], []
    b_ub = []
    labels = []
    r = 0

    def add_piece(row, pos, coef_p, coef_q):
        base = pos * (n + 1)
        rows.extend([row] * (n + 1))
        cols.extend(range(base, base + n + 1))
        vals.extend(list(coef_p) + [coef_q])

    for t, (cid, vid) in enumerate(idx.boundary_pairs):
        pos = d.position(cid)
        add_piece(r, pos, pool[vid], 1.0)
        rows.append(r); cols.append(tb0 + t); vals.append(-1.0)
        b_ub.append(-eps.eps1)
        labels.append(("C1", cid, vid))
        r += 1
    for t, (cid, vid) in enumerate(idx.interior_pairs):
        pos = d.position(cid)
        add_piece(r, pos, -pool[vid], -1.0)
        rows.append(r); cols.append(ti0 + t); vals.append(-1.0)
        b_ub.append(-eps.eps2)
        labels.append(("C2", cid, vid))
        r += 1
    for pos, cell in enumerate(d.cells):
        for vid in sorted(d.cell_vertex_ids[pos]):
            v = pool[vid]
            grad = cell.A @ v + cell.a + alpha * v
            add_piece(r, pos, -grad, -alpha)
            b_ub.append(-eps.eps3)
            labels.append(("C3", cell.id, vid))
            r += 1
    A_ub = sp.csr_matrix((vals, (rows, cols)), shape=(r, nvar))

    rows, cols, vals = [], [], []
    eq_labels = []
    r = 0
    for vid, owners in enumerate(d.vertex_owners()):
        if len(owners) < 2:
            continue
        v = pool[vid]
        first = owners[0]
        for other in owners[1:]:
            add_piece(r, first, v, 1.0)
            add_piece(r, other, -v, -1.0)
            eq_labels.append(("C4", d.cells[first].id, d.cells[other].id, vid))
            r += 1
    A_eq = sp.csr_matrix((vals, (rows, cols)), shape=(r, nvar))

    c = np.zeros(nvar)
    c[tb0:] = 1.0
    lb = np.full(nvar, -np.inf)
    lb[tb0:] = 0.0
    ub = np.full(nvar, np.inf)
    return LpProblem(
        dim=n,
        cell_ids=tuple(d.cell_ids),
        boundary_pairs=tuple(idx.boundary_pairs),
        interior_pairs=tuple(idx.interior_pairs),
        alpha=alpha,
        eps=eps,
        c=c,
        A_ub=A_ub,
        b_ub=np.asarray(b_ub, dtype=float),
        A_eq=A_eq,
        b_eq=np.zeros(r),
        lb=lb,
        ub=ub,
        ub_labels=labels,
        eq_labels=eq_labels,
        objective=objective,
    )


# Tried in order when HiGHS stops with status 4 ("Not Set"), which it does
# occasionally on large, degenerate instances.  Tolerances never change.
_FALLBACKS = (("highs-ds", True), ("highs-ds", False), ("highs-ipm", True))


def _highs(c, A_ub, b_ub, A_eq, b_eq, lb, ub, time_limit=None):
    start = time.perf_counter()
    bounds = np.column_stack([
        np.where(np.isinf(lb), None, lb), np.where(np.isinf(ub), None, ub)
    ])
    for method, presolve in _FALLBACKS:
        options = {
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
            "presolve": presolve,
        }
        if time_limit is not None:
            left = time_limit - (time.perf_counter() - start)
            options["time_limit"] = max(left, 1.0)
        res = linprog(
            c,
            A_ub=A_ub if A_ub.shape[0] else None,
            b_ub=b_ub if A_ub.shape[0] else None,
            A_eq=A_eq if A_eq.shape[0] else None,
            b_eq=b_eq if A_eq.shape[0] else None,
            bounds=bounds,
            method=method,
            options=options,
        )
        if res.status != 4:
            return res
        logger.warning("HiGHS %s (presolve=%s) returned status 4; trying next method",
                       method, presolve)
    return res


def _duality_gap(res, b_ub, b_eq, lb, ub, n_ub, n_eq):
    dual = 0.0
    if n_ub:
        dual += float(b_ub @ res.ineqlin.marginals)
    if n_eq:
        dual += float(b_eq @ res.eqlin.marginals)
    fin = np.isfinite(lb)
    dual += float(lb[fin] @ res.lower.marginals[fin])
    fin = np.isfinite(ub)
    dual += float(ub[fin] @ res.upper.marginals[fin])
    return abs(res.fun - dual) / max(1.0, abs(res.fun))


def _certified(c, A_ub, b_ub, A_eq, b_eq, lb, ub, time_limit):
    res = _highs(c, A_ub, b_ub, A_eq, b_eq, lb, ub, time_limit)
    if res.status == 1 and time_limit is not None:
        raise SolverTimeLimit(res.message)
    if res.status != 0:
        raise SolverFailure(f"LP solver status {res.status}: {res.message}")
    gap = _duality_gap(res, b_ub, b_eq, lb, ub, A_ub.shape[0], A_eq.shape[0])
    if gap > GAP_TOL:
        raise SolverFailure(f"relative duality gap {gap:.3g} exceeds {GAP_TOL:g}")
    return res, gap


def _pinned(lp: LpProblem, bound: float):
    """Inequality block of ``lp`` plus the row ``sum(tau_b) <= bound``."""
    pin = np.zeros(lp.n_vars)
    pin[lp.tau_b_offset:lp.tau_int_offset] = 1.0
    A_ub = sp.vstack([lp.A_ub, sp.csr_matrix(pin)]).tocsr()
    return A_ub, np.append(lp.b_ub, bound)


def solve(lp: LpProblem, time_limit: Optional[float] = None):
    """Solve ``lp`` to certified optimality.

    Returns ``(BarrierCandidate, SlackReport)``.  Any non-optimal status or a
    relative duality gap above 1e-8 raises :class:`SolverFailure`; nothing is
    retried with looser settings.  With the lexicographic objective both
    stages are certified and ``duality_gap`` is the larger of the two.
    """
    start = time.perf_counter()
    if lp.objective == "sum":
        res, gap = _certified(lp.c, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq, lp.lb, lp.ub, time_limit)
    else:
        c1 = np.zeros(lp.n_vars)
        c1[lp.tau_b_offset:lp.tau_int_offset] = 1.0
        res, gap1 = _certified(c1, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq, lp.lb, lp.ub, time_limit)
        c2 = np.zeros(lp.n_vars)
        c2[lp.tau_int_offset:] = 1.0
        A_ub, b_ub = _pinned(lp, max(float(res.fun), 0.0))
        left = None if time_limit is None else time_limit - (time.perf_counter() - start)
        if left is not None and left <= 0:
            raise SolverTimeLimit("time limit reached between LP stages")
        res, gap2 = _certified(c2, A_ub, b_ub, lp.A_eq, lp.b_eq, lp.lb, lp.ub, left)
        gap = max(gap1, gap2)
    cand, tb, ti = lp.unpack(res.x)
    # the solver may return -1e-13 style values on the zero bound
    tb = np.maximum(tb, 0.0)
    ti = np.maximum(ti, 0.0)
    report = SlackReport(
        tau_b=dict(zip(lp.boundary_pairs, tb.tolist())),
        tau_int=dict(zip(lp.interior_pairs, ti.tolist())),
        objective=float(tb.sum() + ti.sum()),
        sum_tau_b=float(tb.sum()),
        sum_tau_int=float(ti.sum()),
        duality_gap=gap,
    )
    return cand, report


def is_valid(report: SlackReport, tol: float = NONZERO_TOL) -> bool:
    return report.sum_tau_b <= tol


def flagged_cells(report: SlackReport, tol: float = NONZERO_TOL) -> set:
    """Cells with a nonzero boundary slack or a nonzero interior slack."""
    flagged = {cid for (cid, _), t in report.tau_b.items() if t > tol}
    flagged |= {cid for (cid, _), t in report.tau_int.items() if t > tol}
    return flagged


def maximality_gap(lp: LpProblem, report: SlackReport, time_limit: Optional[float] = None) -> float:
    """How much the interior slack sum could still drop with the boundary
    slack sum held at its optimum.  Zero (up to solver precision) at an LP
    optimum."""
    c = np.zeros(lp.n_vars)
    c[lp.tau_int_offset:] = 1.0
    A_ub, b_ub = _pinned(lp, report.sum_tau_b)
    res = _highs(c, A_ub, b_ub, lp.A_eq, lp.b_eq, lp.lb, lp.ub, time_limit)
    if res.status != 0:
        raise SolverFailure(f"maximality re-solve failed: {res.message}")
    return report.sum_tau_int - float(res.fun)


def synthesize_once(d: PwaDynamics, alpha, eps=None, idx: Optional[IndexSets] = None,
                    time_limit: Optional[float] = None, objective: str = "lexicographic"):
    """Assemble and solve on a fixed partition; returns ``(lp, candidate, report)``."""
    if idx is None:
        idx = build_index_sets(d)
    lp = assemble(d, idx, alpha, eps, objective)
    cand, report = solve(lp, time_limit)
    return lp, cand, report
